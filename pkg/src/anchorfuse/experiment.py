"""In-memory fit/predict for one fusion configuration over a split."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .aggregation import FittedFusion, FusionConfig, fit_fusion
from .alignment import DEFAULT_ALPHA, AlignmentMap
from .data_io import EmbeddingStore, SplitAssignment
from .readout import BINARY, PredictionSet, ReadoutModel, TrainConfig, predict, select_threshold, train_readout


@dataclass
class SplitData:
    """Per-split float64 embeddings for each encoder plus labels."""

    ids: dict[str, tuple[str, ...]]
    embeddings: dict[str, dict[str, np.ndarray]]
    labels: dict[str, np.ndarray]

    @classmethod
    def from_stores(
        cls,
        stores: Mapping[str, EmbeddingStore],
        split: SplitAssignment,
        labels: Mapping[str, int],
        splits: Sequence[str] = ("train", "val", "test"),
    ) -> "SplitData":
        ids = {s: split.ids(s) for s in splits}
        embeddings = {s: {name: st.rows(ids[s]) for name, st in stores.items()} for s in splits}
        lab = {s: np.array([labels[i] for i in ids[s]], dtype=np.int64) for s in splits}
        return cls(ids, embeddings, lab)


def fit_config(
    data: SplitData,
    config: FusionConfig,
    alpha: float = DEFAULT_ALPHA,
    train_config: TrainConfig | None = None,
    head: str = BINARY,
    maps: Mapping[str, AlignmentMap] | None = None,
    n_classes: int | None = None,
) -> tuple[FittedFusion, ReadoutModel]:
    """Fit fusion on train, train the readout with val early stopping, pick the threshold."""
    train_config = train_config or TrainConfig()
    fusion = fit_fusion(data.embeddings["train"], config, alpha, maps)
    X_train = fusion.transform(data.embeddings["train"])
    X_val = fusion.transform(data.embeddings["val"])
    model = train_readout(
        (X_train, data.labels["train"]), (X_val, data.labels["val"]), train_config, head, n_classes
    )
    if model.head == BINARY:
        select_threshold(model, (X_val, data.labels["val"]))
    return fusion, model


def predict_split(fusion: FittedFusion, model: ReadoutModel, data: SplitData, split: str, tag: str) -> PredictionSet:
    X = fusion.transform(data.embeddings[split])
    return predict(model, X, data.ids[split], data.labels[split], tag)


def single_encoder_config(name: str) -> FusionConfig:
    """An anchor-only fusion, i.e. the single-encoder baseline."""
    return FusionConfig("aligned_mean", name, ())


def with_seed(train_config: TrainConfig, seed: int) -> TrainConfig:
    return replace(train_config, seed=seed)
