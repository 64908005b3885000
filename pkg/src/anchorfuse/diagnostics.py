"""Error analysis comparing an anchor-only readout with the fused readout."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .aggregation import FittedFusion
from .errors import ConsistencyError, EmptyInput, InvalidInput
from .metrics import accuracy, binary_auc, f1_for_class, macro_f1, macro_ovr_auc
from .numeric import apply_scaler
from .readout import BINARY, PredictionSet, ReadoutModel

STATES = ("TP", "FP", "FN", "TN")
GROUPS = ("corrected", "degraded", "unchanged")


def fmt(x) -> str:
    """Six significant digits; ``nan`` for undefined values."""
    if x is None:
        return "nan"
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".6g")


def write_csv(path: str | os.PathLike, header: Sequence[str], rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def text_table(header: Sequence[str], rows) -> str:
    cells = [list(header)] + [[v if isinstance(v, str) else fmt(v) for v in row] for row in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    buf = io.StringIO()
    for i, r in enumerate(cells):
        buf.write("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip() + "\n")
        if i == 0:
            buf.write("  ".join("-" * w for w in widths) + "\n")
    return buf.getvalue()


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    f1: float
    roc_auc: float | None


def compute_metrics(preds: PredictionSet) -> Metrics:
    """Accuracy, F1 (positive class, or macro for K > 2) and ROC-AUC."""
    if len(preds.ids) == 0:
        raise EmptyInput("no predictions")
    if preds.true_labels is None:
        raise InvalidInput("prediction set has no true labels")
    y, yhat = preds.true_labels, preds.predicted_labels
    if preds.is_binary:
        return Metrics(accuracy(y, yhat), f1_for_class(y, yhat, 1), binary_auc(y, preds.probabilities[:, 0]))
    return Metrics(accuracy(y, yhat), macro_f1(y, yhat), macro_ovr_auc(y, preds.probabilities))


def _check_aligned(sets: Sequence[PredictionSet]):
    first = sets[0]
    for other in sets[1:]:
        if other.ids != first.ids:
            raise ConsistencyError(f"prediction sets {first.model_tag!r} and {other.model_tag!r} cover different ids")
        if first.true_labels is None or other.true_labels is None or not np.array_equal(first.true_labels, other.true_labels):
            raise ConsistencyError("prediction sets disagree on true labels")


@dataclass(frozen=True)
class OverlapMatrix:
    """Entry ``(A, B)`` is ``P(B errs | A errs)``; rows of error-free models are None."""

    model_tags: tuple[str, ...]
    entries: tuple[tuple[float | None, ...], ...]
    error_counts: tuple[int, ...]
    joint_counts: tuple[tuple[int, ...], ...]

    def get(self, a: str, b: str) -> float | None:
        return self.entries[self.model_tags.index(a)][self.model_tags.index(b)]

    def rows(self):
        for tag, row in zip(self.model_tags, self.entries):
            yield [tag, *row]


def error_overlap(pred_sets: Sequence[PredictionSet]) -> OverlapMatrix:
    sets = list(pred_sets)
    if not sets:
        raise EmptyInput("no prediction sets")
    _check_aligned(sets)
    errs = [~p.correct() for p in sets]
    counts = [int(e.sum()) for e in errs]
    joint = [[int((ea & eb).sum()) for eb in errs] for ea in errs]
    entries = []
    for i in range(len(sets)):
        if counts[i] == 0:
            entries.append(tuple(None for _ in sets))
        else:
            entries.append(tuple(joint[i][j] / counts[i] for j in range(len(sets))))
    return OverlapMatrix(
        tuple(p.model_tag for p in sets), tuple(entries), tuple(counts), tuple(tuple(r) for r in joint)
    )


def decision_states(preds: PredictionSet) -> np.ndarray:
    """Confusion cell of every example under the set's own predicted labels."""
    if not preds.is_binary:
        raise InvalidInput("decision states need binary predictions")
    y, yhat = preds.true_labels, preds.predicted_labels
    states = np.empty(len(y), dtype=object)
    states[(y == 1) & (yhat == 1)] = "TP"
    states[(y == 0) & (yhat == 1)] = "FP"
    states[(y == 1) & (yhat == 0)] = "FN"
    states[(y == 0) & (yhat == 0)] = "TN"
    return states


@dataclass(frozen=True)
class TransitionTable:
    counts: Mapping[tuple[str, str], int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def from_totals(self) -> dict[str, int]:
        return {s: sum(self.counts[(s, t)] for t in STATES) for s in STATES}

    def to_totals(self) -> dict[str, int]:
        return {t: sum(self.counts[(s, t)] for s in STATES) for t in STATES}

    def rows(self):
        for s in STATES:
            for t in STATES:
                yield [s, t, self.counts[(s, t)]]


def decision_transitions(anchor_preds: PredictionSet, fused_preds: PredictionSet) -> TransitionTable:
    _check_aligned([anchor_preds, fused_preds])
    before = decision_states(anchor_preds)
    after = decision_states(fused_preds)
    counts = {(s, t): 0 for s in STATES for t in STATES}
    for s, t in zip(before, after):
        counts[(s, t)] += 1
    return TransitionTable(counts)


@dataclass(frozen=True)
class ConfidenceShiftRecord:
    id: str
    group: str
    delta_p_true: float


def confidence_shift(anchor_preds: PredictionSet, fused_preds: PredictionSet) -> list[ConfidenceShiftRecord]:
    """Change in probability of the true label, grouped by correctness flip.

    Correctness uses each set's stored predicted labels, i.e. each model's
    own operating threshold.
    """
    _check_aligned([anchor_preds, fused_preds])
    for p in (anchor_preds, fused_preds):
        if p.probabilities.size == 0 or not np.all(np.isfinite(p.probabilities)):
            raise InvalidInput(f"prediction set {p.model_tag!r} lacks usable probabilities")
    delta = fused_preds.p_true() - anchor_preds.p_true()
    a_ok, f_ok = anchor_preds.correct(), fused_preds.correct()
    out = []
    for i, rid in enumerate(anchor_preds.ids):
        if not a_ok[i] and f_ok[i]:
            group = "corrected"
        elif a_ok[i] and not f_ok[i]:
            group = "degraded"
        else:
            group = "unchanged"
        out.append(ConfidenceShiftRecord(rid, group, float(delta[i])))
    return out


@dataclass(frozen=True)
class OcclusionResult:
    id: str
    sentence_index: int
    delta_z: float

    @property
    def direction(self) -> str:
        return "up" if self.delta_z > 0 else "down"


def positive_logit(model: ReadoutModel, fusion: FittedFusion, embeddings: Mapping[str, np.ndarray], target_class: int = 1) -> np.ndarray:
    """Logit of ``target_class`` through the frozen align, fuse, scale, readout chain."""
    fused = fusion.transform(embeddings)
    if model.input_scaler is not None:
        fused = apply_scaler(model.input_scaler, fused)
    logits = model.logits(fused)
    return logits[:, 0] if model.head == BINARY else logits[:, target_class]


def occlusion_attribution(
    model: ReadoutModel,
    fusion: FittedFusion,
    base_embeddings: Mapping[str, np.ndarray],
    occluded_embeddings: Mapping[str, np.ndarray],
    doc_id: str = "",
    target_class: int = 1,
) -> list[OcclusionResult]:
    """Sentence-level attribution ``delta_z_i = z_base - z_without_i``.

    ``base_embeddings`` maps each encoder to the document's vector;
    ``occluded_embeddings`` maps each encoder to an ``S x d`` matrix whose
    row ``i`` encodes the document with sentence ``i`` removed.
    """
    needed = fusion.config.encoders
    for name in needed:
        if name not in base_embeddings or name not in occluded_embeddings:
            raise ConsistencyError(f"no base/occluded embeddings for encoder {name!r}")
    base = {name: np.asarray(base_embeddings[name], dtype=np.float64).reshape(1, -1) for name in needed}
    occluded = {name: np.atleast_2d(np.asarray(occluded_embeddings[name], dtype=np.float64)) for name in needed}
    n_sent = {v.shape[0] for v in occluded.values()}
    if len(n_sent) != 1:
        raise ConsistencyError(f"encoders disagree on the number of occluded variants: {sorted(n_sent)}")
    z_base = positive_logit(model, fusion, base, target_class)[0]
    out = []
    # one row at a time so every variant goes through the same BLAS path as the base
    for i in range(n_sent.pop()):
        variant = {name: occluded[name][i:i + 1] for name in needed}
        z = positive_logit(model, fusion, variant, target_class)[0]
        out.append(OcclusionResult(doc_id, i, float(z_base - z)))
    return out
