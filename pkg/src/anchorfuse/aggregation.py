"""Combine anchor and aligned source views into one fused representation."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .alignment import DEFAULT_ALPHA, AlignmentMap, apply_alignment, fit_alignment
from .binio import Reader, Writer
from .errors import ConsistencyError, DimensionError, FormatError, InvalidConfig
from .numeric import StandardScaler, apply_scaler, as_matrix, fit_scaler

STRATEGIES = ("aligned_mean", "aligned_concat", "raw_concat")

SCAL_MAGIC = b"SCAL"
SCAL_VERSION = 1


@dataclass(frozen=True)
class FusionConfig:
    strategy: str
    anchor_name: str
    source_order: tuple[str, ...] = ()

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidConfig(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        order = tuple(self.source_order)
        if self.anchor_name in order:
            raise InvalidConfig("the anchor cannot also be a source")
        if len(set(order)) != len(order):
            raise InvalidConfig("duplicate source names")
        if self.strategy != "aligned_mean" and not order:
            raise InvalidConfig(f"strategy {self.strategy!r} needs at least one source")
        object.__setattr__(self, "source_order", order)

    @property
    def encoders(self) -> tuple[str, ...]:
        return (self.anchor_name,) + self.source_order

    def to_json(self) -> dict:
        return {"strategy": self.strategy, "anchor": self.anchor_name, "sources": list(self.source_order)}

    @classmethod
    def from_json(cls, obj: dict) -> "FusionConfig":
        return cls(obj["strategy"], obj["anchor"], tuple(obj["sources"]))


def fuse(anchor_emb, aligned_embs: Sequence, config: FusionConfig) -> np.ndarray:
    """Fuse the anchor view with the (already aligned) source views.

    ``aligned_mean`` averages all ``M = 1 + len(sources)`` views. The values
    of each cell are accumulated in sorted order, which makes the result
    exactly invariant to the order of the sources. The concat strategies stack
    column blocks ``[anchor | sources...]`` in the order given.
    """
    anchor = as_matrix(anchor_emb, "anchor_emb")
    views = [as_matrix(v, "aligned_embs") for v in aligned_embs]
    if len(views) != len(config.source_order):
        raise InvalidConfig(f"config lists {len(config.source_order)} sources, got {len(views)} views")
    for v in views:
        if v.shape[0] != anchor.shape[0]:
            raise DimensionError(f"row count {v.shape[0]} differs from anchor {anchor.shape[0]}")

    if config.strategy == "aligned_mean":
        for v in views:
            if v.shape[1] != anchor.shape[1]:
                raise DimensionError(f"aligned view has {v.shape[1]} columns, anchor has {anchor.shape[1]}")
        if not views:
            return anchor.copy()
        stacked = np.sort(np.stack([anchor, *views]), axis=0)
        # offsets from the per-cell minimum: identical views give the view back exactly
        offset = np.zeros_like(anchor)
        for layer in stacked[1:]:
            offset += layer - stacked[0]
        return stacked[0] + offset / stacked.shape[0]
    if config.strategy == "aligned_concat":
        for v in views:
            if v.shape[1] != anchor.shape[1]:
                raise DimensionError(f"aligned view has {v.shape[1]} columns, anchor has {anchor.shape[1]}")
    return np.hstack([anchor, *views])


def fit_final_scaler(train_fused) -> StandardScaler:
    return fit_scaler(train_fused)


def apply_final(scaler: StandardScaler, fused) -> np.ndarray:
    return apply_scaler(scaler, fused)


@dataclass(frozen=True)
class FusedStore:
    matrix: np.ndarray
    row_ids: tuple[str, ...]
    final_scaler: StandardScaler

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class FittedFusion:
    """Frozen transform from per-encoder raw embeddings to readout inputs.

    ``view_scalers`` standardizes each encoder that enters the fusion
    unaligned (the anchor always, every encoder under ``raw_concat``).
    ``maps`` holds one alignment map per source for the aligned strategies.
    """

    config: FusionConfig
    view_scalers: Mapping[str, StandardScaler]
    maps: Mapping[str, AlignmentMap] = field(default_factory=dict)
    final_scaler: StandardScaler | None = None

    def _views(self, embeddings: Mapping[str, np.ndarray]) -> tuple[np.ndarray, list[np.ndarray]]:
        missing = [name for name in self.config.encoders if name not in embeddings]
        if missing:
            raise ConsistencyError(f"missing embeddings for encoders {missing}")
        cfg = self.config
        anchor = apply_scaler(self.view_scalers[cfg.anchor_name], embeddings[cfg.anchor_name])
        if cfg.strategy == "raw_concat":
            sources = [apply_scaler(self.view_scalers[s], embeddings[s]) for s in cfg.source_order]
        else:
            sources = [apply_alignment(self.maps[s], embeddings[s]) for s in cfg.source_order]
        return anchor, sources

    def fuse(self, embeddings: Mapping[str, np.ndarray]) -> np.ndarray:
        """Fused rows before the final standardization."""
        anchor, sources = self._views(embeddings)
        return fuse(anchor, sources, self.config)

    def transform(self, embeddings: Mapping[str, np.ndarray]) -> np.ndarray:
        if self.final_scaler is None:
            raise InvalidConfig("fusion has no final scaler; call fit_fusion first")
        return apply_final(self.final_scaler, self.fuse(embeddings))


def fit_fusion(
    train_embeddings: Mapping[str, np.ndarray],
    config: FusionConfig,
    alpha: float = DEFAULT_ALPHA,
    maps: Mapping[str, AlignmentMap] | None = None,
) -> FittedFusion:
    """Fit every scaler and alignment map of a fusion on training rows only.

    Pre-fitted ``maps`` are reused when given so that a pipeline can fit
    aligners once and try several strategies.
    """
    train = {k: as_matrix(v, k) for k, v in train_embeddings.items()}
    missing = [name for name in config.encoders if name not in train]
    if missing:
        raise ConsistencyError(f"missing training embeddings for {missing}")
    view_names = config.encoders if config.strategy == "raw_concat" else (config.anchor_name,)
    view_scalers = {name: fit_scaler(train[name]) for name in view_names}
    fitted_maps: dict[str, AlignmentMap] = {}
    if config.strategy != "raw_concat":
        for src in config.source_order:
            if maps and src in maps:
                fitted_maps[src] = maps[src]
            else:
                fitted_maps[src] = fit_alignment(
                    train[src], train[config.anchor_name], alpha, src, config.anchor_name
                )
    partial = FittedFusion(config, view_scalers, fitted_maps)
    final = fit_final_scaler(partial.fuse(train))
    return FittedFusion(config, view_scalers, fitted_maps, final)


def encode_scalers(scalers: Mapping[str, StandardScaler]) -> bytes:
    w = Writer()
    w.raw(SCAL_MAGIC)
    w.u32(SCAL_VERSION)
    w.u32(len(scalers))
    for name, scaler in scalers.items():
        w.text(name)
        w.scaler(scaler)
    return w.getvalue()


def decode_scalers(data: bytes) -> dict[str, StandardScaler]:
    r = Reader(data)
    r.expect_magic(SCAL_MAGIC, SCAL_VERSION)
    out = {}
    for _ in range(r.u32()):
        name = r.text()
        out[name] = r.scaler()
    if not r.at_end():
        raise FormatError("trailing bytes in scaler file")
    return out


def save_scalers(scalers: Mapping[str, StandardScaler], path: str | os.PathLike):
    Path(path).write_bytes(encode_scalers(scalers))


def load_scalers(path: str | os.PathLike) -> dict[str, StandardScaler]:
    return decode_scalers(Path(path).read_bytes())
