"""Seeded multi-view latent factor datasets and a strategy benchmark.

Each document has a latent ``z ~ N(0, I_k)``. Encoder ``m`` observes
``x_m = A_m z + sigma_m * eps`` with a random full-column-rank ``A_m``
whose entries are ``N(0, 1/k)``, so every view coordinate carries unit
signal variance. The label is ``1[w . z >= 0]`` with independent flips.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from datetime import timedelta

import numpy as np

from .aggregation import STRATEGIES, FusionConfig
from .alignment import DEFAULT_ALPHA
from .data_io import (
    DEFAULT_FRACTIONS,
    DocumentRecord,
    EmbeddingStore,
    Manifest,
    parse_timestamp,
    time_split,
)
from .diagnostics import compute_metrics
from .errors import InvalidSpec
from .experiment import SplitData, fit_config, predict_split
from .numeric import make_rng
from .readout import TrainConfig


@dataclass
class SyntheticSpec:
    n_docs: int = 2000
    latent_dim: int = 16
    view_dims: tuple[int, ...] = (48, 64, 56)
    noise_std: float | tuple[float, ...] = 0.8
    label_noise: float = 0.05
    label_weights: tuple[float, ...] | None = None
    seed: int = 0
    view_names: tuple[str, ...] | None = None
    start: str = "2015-01-01T00:00:00Z"
    step_seconds: int = 86400
    dtype: str = "float64"

    def __post_init__(self):
        self.view_dims = tuple(int(d) for d in self.view_dims)
        if isinstance(self.noise_std, (int, float)):
            self.noise_std = tuple(float(self.noise_std) for _ in self.view_dims)
        self.noise_std = tuple(float(s) for s in self.noise_std)
        if self.view_names is None:
            self.view_names = tuple(f"view{i}" for i in range(len(self.view_dims)))
        self.view_names = tuple(self.view_names)
        if self.label_weights is not None:
            self.label_weights = tuple(float(x) for x in self.label_weights)

    def validate(self):
        if not self.view_dims:
            raise InvalidSpec("need at least one view")
        if self.n_docs < 10:
            raise InvalidSpec("n_docs must be at least 10")
        if self.latent_dim < 1 or self.latent_dim > min(self.view_dims):
            raise InvalidSpec(f"latent_dim must be in [1, min(view_dims)={min(self.view_dims)}]")
        if len(self.noise_std) != len(self.view_dims) or any(s < 0 for s in self.noise_std):
            raise InvalidSpec("need one non-negative noise std per view")
        if len(self.view_names) != len(self.view_dims) or len(set(self.view_names)) != len(self.view_names):
            raise InvalidSpec("need one distinct name per view")
        if not 0.0 <= self.label_noise < 0.5:
            raise InvalidSpec("label_noise must be in [0, 0.5)")
        if self.label_weights is not None and (len(self.label_weights) != self.latent_dim or not any(self.label_weights)):
            raise InvalidSpec("label_weights must be a nonzero vector of length latent_dim")
        if self.dtype not in ("float32", "float64"):
            raise InvalidSpec("dtype must be float32 or float64")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "SyntheticSpec":
        known = cls.__dataclass_fields__
        unknown = set(obj) - set(known)
        if unknown:
            raise InvalidSpec(f"unknown spec fields {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "SyntheticSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _full_rank_map(rng, rows: int, k: int) -> np.ndarray:
    for _ in range(100):
        A = rng.standard_normal((rows, k)) / np.sqrt(k)
        if np.linalg.matrix_rank(A) == k:
            return A
    raise InvalidSpec("could not draw a full-rank view map")


def generate(spec: SyntheticSpec) -> tuple[Manifest, list[EmbeddingStore]]:
    spec.validate()
    rng = make_rng(spec.seed, "synthetic")
    k, n = spec.latent_dim, spec.n_docs
    maps = [_full_rank_map(rng, d, k) for d in spec.view_dims]
    w = np.asarray(spec.label_weights) if spec.label_weights is not None else rng.standard_normal(k)
    z = rng.standard_normal((n, k))
    views = [z @ A.T + s * rng.standard_normal((n, A.shape[0])) for A, s in zip(maps, spec.noise_std)]
    labels = (z @ w >= 0).astype(np.int64)
    flips = rng.random(n) < spec.label_noise
    labels = np.where(flips, 1 - labels, labels)

    width = max(5, len(str(n - 1)))
    ids = tuple(f"doc{i:0{width}d}" for i in range(n))
    t0 = parse_timestamp(spec.start)
    step = timedelta(seconds=spec.step_seconds)
    records = [DocumentRecord(ids[i], t0 + i * step, int(labels[i])) for i in range(n)]
    stores = [
        EmbeddingStore(name, v.astype(spec.dtype), ids) for name, v in zip(spec.view_names, views)
    ]
    return Manifest(records), stores


@dataclass(frozen=True)
class BenchmarkConfig:
    label: str
    strategy: str
    anchor: str
    sources: tuple[str, ...] = ()

    def fusion(self) -> FusionConfig:
        return FusionConfig(self.strategy, self.anchor, self.sources)


def default_configs(view_names) -> list[BenchmarkConfig]:
    """Every single view, then the three fusion strategies anchored on the first view."""
    anchor, *sources = view_names
    configs = [BenchmarkConfig(f"single:{v}", "aligned_mean", v) for v in view_names]
    if sources:
        configs += [BenchmarkConfig(s, s, anchor, tuple(sources)) for s in ("raw_concat", "aligned_concat", "aligned_mean")]
    return configs


@dataclass
class BenchmarkRow:
    label: str
    strategy: str
    anchor: str
    sources: tuple[str, ...]
    accuracy: float
    f1: float
    roc_auc: float | None
    extra: dict = field(default_factory=dict)


def benchmark(
    spec: SyntheticSpec,
    configs: list[BenchmarkConfig] | None = None,
    seed: int = 42,
    alpha: float = DEFAULT_ALPHA,
    train_config: TrainConfig | None = None,
    fractions=DEFAULT_FRACTIONS,
) -> list[BenchmarkRow]:
    """Generate ``spec``, time-split it, and report test metrics per config."""
    manifest, stores = generate(spec)
    configs = configs or default_configs(spec.view_names)
    for cfg in configs:
        if cfg.strategy not in STRATEGIES:
            raise InvalidSpec(f"unknown strategy {cfg.strategy!r}")
    split = time_split(manifest.records, fractions)
    labels = {r.id: r.label for r in manifest.records}
    data = SplitData.from_stores({s.encoder_name: s for s in stores}, split, labels)
    base = replace(train_config or TrainConfig(), seed=seed)
    rows = []
    for cfg in configs:
        fusion, model = fit_config(data, cfg.fusion(), alpha, base)
        m = compute_metrics(predict_split(fusion, model, data, "test", cfg.label))
        rows.append(BenchmarkRow(cfg.label, cfg.strategy, cfg.anchor, cfg.sources, m.accuracy, m.f1, m.roc_auc))
    return rows

