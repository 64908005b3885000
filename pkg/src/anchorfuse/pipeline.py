"""Run-directory orchestration of the align, fuse, train, evaluate flow.

Layout of a run directory::

    run.json            config snapshot, stage records, artifact hashes
    manifest.jsonl      normalized document manifest
    split.json          train/val/test/excluded ids and resolved labels
    embeddings/NAME.embd
    aligners/SOURCE.alnm
    fused/              fusion config, scalers, fused train/val/test rows
    models/TAG.rdot     readouts (``fused`` plus one baseline per encoder)
    predictions/TAG_SPLIT.csv
    reports/            metrics, alignment R², diagnostics CSVs

Every stage reads only what earlier stages wrote. Test rows are touched
for the first time by ``evaluate``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from filelock import FileLock

from .aggregation import (
    FittedFusion,
    FusionConfig,
    fit_fusion,
    load_scalers,
    save_scalers,
)
from .alignment import (
    DEFAULT_ALPHA,
    fit_alignment,
    load_alignment_map,
    report_alignment_quality,
    save_alignment_map,
)
from .data_io import (
    DEFAULT_DELTA,
    DEFAULT_FRACTIONS,
    EmbeddingStore,
    Manifest,
    SplitAssignment,
    load_embedding_store,
    read_manifest,
    save_embedding_store,
    time_split,
    write_manifest,
)
from .diagnostics import (
    compute_metrics,
    confidence_shift,
    decision_transitions,
    error_overlap,
    occlusion_attribution,
    text_table,
    write_csv,
)
from .errors import ConfigError, ConsistencyError, IncompleteRun, InvalidInput
from .readout import (
    BINARY,
    SOFTMAX,
    PredictionSet,
    TrainConfig,
    load_readout,
    predict,
    read_predictions,
    save_readout,
    select_threshold,
    train_readout,
    write_predictions,
)
from .synthetic import SyntheticSpec, generate

log = logging.getLogger("anchorfuse")

FUSED_TAG = "fused"
STAGES = ("ingest", "fit-align", "fuse", "train", "evaluate", "diagnose")
_FINAL = "__final__"


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class RunManifest:
    run_id: str
    config: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        return cls(**json.loads(path.read_text(encoding="utf-8")))

    def save(self, path: Path):
        _dump_json(asdict(self), path)

    def done(self, stage: str) -> bool:
        return self.stages.get(stage, {}).get("complete", False)


class RunDir:
    """Paths and bookkeeping for one run directory."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    @property
    def manifest_path(self) -> Path:
        return self.path("run.json")

    def exists(self) -> bool:
        return self.manifest_path.is_file()

    def load(self) -> RunManifest:
        if not self.exists():
            raise IncompleteRun(f"{self.root} is not an ingested run directory")
        return RunManifest.load(self.manifest_path)

    def lock(self) -> FileLock:
        self.root.mkdir(parents=True, exist_ok=True)
        return FileLock(str(self.path(".lock")), timeout=0)

    def rel(self, path: Path) -> str:
        return path.relative_to(self.root).as_posix()

    def encoders(self, rm: RunManifest) -> list[str]:
        return list(rm.config["encoders"])

    def store(self, name: str) -> EmbeddingStore:
        return load_embedding_store(self.path("embeddings", f"{name}.embd"), name)

    def split(self) -> tuple[SplitAssignment, dict[str, int]]:
        obj = json.loads(self.path("split.json").read_text(encoding="utf-8"))
        return SplitAssignment.from_json(obj), {k: int(v) for k, v in obj["labels"].items()}


def _stage_hash(stage: str, config: Mapping, rd: RunDir, inputs: Sequence[Path]) -> str:
    h = hashlib.sha256(stage.encode())
    h.update(json.dumps(config, sort_keys=True).encode())
    for p in sorted(inputs):
        h.update(rd.rel(p).encode() + b"\x00")
        h.update(sha256_file(p).encode() if p.exists() else b"missing")
    return h.hexdigest()


def _run_stage(
    rd: RunDir,
    rm: RunManifest,
    stage: str,
    stage_config: dict,
    inputs: Sequence[Path],
    body: Callable[[], list[Path]],
    requires: Sequence[str] = (),
) -> bool:
    """Run ``body`` unless an identical completed record exists. Returns True if it ran."""
    for dep in requires:
        if not rm.done(dep):
            raise IncompleteRun(f"stage {stage!r} needs {dep!r} to have completed")
    key = _stage_hash(stage, stage_config, rd, inputs)
    record = rm.stages.get(stage, {})
    if record.get("complete") and record.get("input_hash") == key:
        outputs = record.get("outputs", {})
        if all(rd.path(p).is_file() and sha256_file(rd.path(p)) == h for p, h in outputs.items()):
            log.info("stage %s: inputs unchanged, skipping", stage)
            return False
    log.info("stage %s: running", stage)
    outputs = body()
    hashes = {rd.rel(p): sha256_file(p) for p in outputs}
    rm.stages[stage] = {"complete": True, "input_hash": key, "config": stage_config, "outputs": hashes}
    rm.artifacts.update(hashes)
    # downstream records are stale once an upstream stage re-ran
    for later in STAGES[STAGES.index(stage) + 1:]:
        if later in rm.stages:
            rm.stages[later]["complete"] = False
    rm.save(rd.manifest_path)
    return True


def _write_dataset(rd: RunDir, manifest: Manifest, stores: Sequence[EmbeddingStore], split: SplitAssignment, delta: float) -> list[Path]:
    for sub in ("embeddings", "aligners", "fused", "models", "predictions", "reports"):
        rd.path(sub).mkdir(parents=True, exist_ok=True)
    by_id = manifest.by_id()
    labels = {i: by_id[i].resolve_label(delta) for s in ("train", "val", "test") for i in split.ids(s)}
    kept = set(labels)
    out = [rd.path("manifest.jsonl"), rd.path("split.json")]
    write_manifest(manifest, out[0])
    obj = split.to_json()
    obj["labels"] = {k: labels[k] for k in sorted(labels)}
    obj["label_names"] = manifest.label_names
    _dump_json(obj, out[1])
    names = set()
    for store in stores:
        if store.encoder_name in names:
            raise ConsistencyError(f"encoder {store.encoder_name!r} given twice")
        names.add(store.encoder_name)
        unknown = set(store.row_ids) - set(by_id)
        if unknown:
            raise ConsistencyError(f"store {store.encoder_name!r} has ids not in the manifest, e.g. {sorted(unknown)[0]!r}")
        missing = kept - set(store.row_ids)
        if missing:
            raise ConsistencyError(f"store {store.encoder_name!r} lacks rows for {len(missing)} labeled documents")
        path = rd.path("embeddings", f"{store.encoder_name}.embd")
        save_embedding_store(store, path)
        out.append(path)
    return out


def _init_run(rd: RunDir, config: dict) -> RunManifest:
    rm = RunManifest(run_id=rd.root.resolve().name, config=config)
    rm.save(rd.manifest_path)
    return rm


def ingest(
    run_dir: str | os.PathLike,
    manifest_path: str | os.PathLike,
    embeddings: Mapping[str, str | os.PathLike],
    delta: float = DEFAULT_DELTA,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
) -> RunManifest:
    """Copy a manifest and encoder stores into a fresh run directory and split it."""
    if not embeddings:
        raise ConfigError("at least one --embeddings NAME=PATH is required")
    rd = RunDir(run_dir)
    with rd.lock():
        manifest = read_manifest(manifest_path)
        stores = [load_embedding_store(p, name) for name, p in embeddings.items()]
        split = time_split(manifest.records, fractions, delta)
        config = {"encoders": list(embeddings), "delta": delta, "fractions": list(fractions)}
        rm = _init_run(rd, config)
        rm.inputs = {"manifest": sha256_file(manifest_path), **{f"embeddings:{k}": sha256_file(p) for k, p in embeddings.items()}}
        _run_stage(rd, rm, "ingest", config, [], lambda: _write_dataset(rd, manifest, stores, split, delta))
        return rm


def synth(run_dir: str | os.PathLike, spec: SyntheticSpec, fractions: Sequence[float] = DEFAULT_FRACTIONS) -> RunManifest:
    """Generate a synthetic dataset straight into an ingested run directory."""
    rd = RunDir(run_dir)
    with rd.lock():
        manifest, stores = generate(spec)
        split = time_split(manifest.records, fractions)
        config = {"encoders": list(spec.view_names), "delta": DEFAULT_DELTA, "fractions": list(fractions), "synthetic": spec.to_json()}
        rm = _init_run(rd, config)
        _run_stage(rd, rm, "ingest", config, [], lambda: _write_dataset(rd, manifest, stores, split, DEFAULT_DELTA))
        return rm


def _train_data(rd: RunDir, names: Sequence[str], splits: Sequence[str]):
    split, labels = rd.split()
    out = {}
    for s in splits:
        ids = split.ids(s)
        if not ids:
            raise InvalidInput(f"the {s} split is empty")
        out[s] = (ids, {n: rd.store(n).rows(ids) for n in names}, np.array([labels[i] for i in ids], dtype=np.int64))
    return out


def _embedding_inputs(rd: RunDir, names: Sequence[str]) -> list[Path]:
    return [rd.path("embeddings", f"{n}.embd") for n in names] + [rd.path("split.json")]


def _sources(rm: RunManifest, anchor: str, sources: Sequence[str] | None) -> list[str]:
    encoders = list(rm.config["encoders"])
    if anchor not in encoders:
        raise ConfigError(f"anchor {anchor!r} is not among the ingested encoders {encoders}")
    chosen = [e for e in encoders if e != anchor] if sources is None else list(sources)
    for s in chosen:
        if s not in encoders or s == anchor:
            raise ConfigError(f"source {s!r} is not a non-anchor ingested encoder")
    return chosen


def fit_align(run_dir, anchor: str, alpha: float = DEFAULT_ALPHA, sources: Sequence[str] | None = None) -> RunManifest:
    """Fit one ridge map per source on training rows only."""
    rd = RunDir(run_dir)
    with rd.lock():
        rm = rd.load()
        chosen = _sources(rm, anchor, sources)
        stage_cfg = {"anchor": anchor, "alpha": float(alpha), "sources": chosen}

        def body():
            data = _train_data(rd, [anchor, *chosen], ["train"])
            _, emb, _ = data["train"]
            for old in rd.path("aligners").glob("*.alnm"):
                old.unlink()
            outputs = []
            maps = []
            for src in chosen:
                amap = fit_alignment(emb[src], emb[anchor], alpha, src, anchor)
                path = rd.path("aligners", f"{src}.alnm")
                save_alignment_map(amap, path)
                outputs.append(path)
                maps.append(amap)
            rows = report_alignment_quality(maps) if maps else []
            report = rd.path("reports", "alignment_r2.csv")
            write_csv(report, ["source", "anchor", "train_r2"], rows)
            outputs.append(report)
            return outputs

        rm.config.update(stage_cfg)
        _run_stage(rd, rm, "fit-align", stage_cfg, _embedding_inputs(rd, [anchor, *chosen]), body, ["ingest"])
        return rm


def _fusion_state_paths(rd: RunDir, tag: str) -> tuple[Path, Path]:
    if tag == FUSED_TAG:
        return rd.path("fused", "fusion.json"), rd.path("fused", "scalers.scal")
    return rd.path("models", f"{tag}.fusion.json"), rd.path("models", f"{tag}.scal")


def _save_fusion_state(rd: RunDir, tag: str, fusion: FittedFusion) -> list[Path]:
    cfg_path, scal_path = _fusion_state_paths(rd, tag)
    _dump_json({**fusion.config.to_json(), "aligners": sorted(fusion.maps)}, cfg_path)
    save_scalers({**fusion.view_scalers, _FINAL: fusion.final_scaler}, scal_path)
    return [cfg_path, scal_path]


def load_fusion(rd: RunDir, tag: str = FUSED_TAG) -> FittedFusion:
    cfg_path, scal_path = _fusion_state_paths(rd, tag)
    if not cfg_path.is_file():
        raise IncompleteRun(f"no fusion state for model {tag!r}")
    obj = json.loads(cfg_path.read_text(encoding="utf-8"))
    config = FusionConfig.from_json(obj)
    scalers = load_scalers(scal_path)
    final = scalers.pop(_FINAL)
    maps = {s: load_alignment_map(rd.path("aligners", f"{s}.alnm")) for s in obj["aligners"]}
    return FittedFusion(config, scalers, maps, final)


def fuse_stage(run_dir, strategy: str = "aligned_mean") -> RunManifest:
    """Fit the final scaler and write fused train/val rows."""
    rd = RunDir(run_dir)
    with rd.lock():
        rm = rd.load()
        if not rm.done("fit-align"):
            raise IncompleteRun("stage 'fuse' needs 'fit-align' to have completed")
        anchor, sources = rm.config["anchor"], list(rm.config["sources"])
        config = FusionConfig(strategy, anchor, tuple(sources))
        stage_cfg = {"strategy": strategy, "anchor": anchor, "sources": sources, "alpha": rm.config["alpha"]}
        aligner_paths = [rd.path("aligners", f"{s}.alnm") for s in sources]

        def body():
            data = _train_data(rd, config.encoders, ["train", "val"])
            maps = {s: load_alignment_map(p) for s, p in zip(sources, aligner_paths)}
            fusion = fit_fusion(data["train"][1], config, rm.config["alpha"], maps)
            outputs = _save_fusion_state(rd, FUSED_TAG, fusion)
            for s in ("train", "val"):
                ids, emb, _ = data[s]
                path = rd.path("fused", f"{s}.embd")
                save_embedding_store(EmbeddingStore(FUSED_TAG, fusion.transform(emb), ids), path)
                outputs.append(path)
            stale = rd.path("fused", "test.embd")
            if stale.exists():
                stale.unlink()
            return outputs

        rm.config.update({"strategy": strategy})
        _run_stage(rd, rm, "fuse", stage_cfg, _embedding_inputs(rd, config.encoders) + aligner_paths, body, ["fit-align"])
        return rm


def _n_classes(rd: RunDir) -> int:
    obj = json.loads(rd.path("split.json").read_text(encoding="utf-8"))
    if obj.get("label_names"):
        return len(obj["label_names"])
    return max(obj["labels"].values()) + 1


def train_stage(run_dir, head: str = "binary", seed: int = 42, train_config: TrainConfig | None = None) -> RunManifest:
    """Train the fused readout and one single-encoder baseline per encoder."""
    rd = RunDir(run_dir)
    with rd.lock():
        rm = rd.load()
        if not rm.done("fuse"):
            raise IncompleteRun("stage 'train' needs 'fuse' to have completed")
        head_kind = BINARY if head in ("binary", BINARY) else SOFTMAX if head in ("multiclass", SOFTMAX) else None
        if head_kind is None:
            raise ConfigError(f"unknown head {head!r}")
        tc = TrainConfig(**{**asdict(train_config or TrainConfig()), "seed": int(seed)})
        tc_json = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(tc).items()}
        encoders = [rm.config["anchor"], *rm.config["sources"]]
        stage_cfg = {"head": head_kind, "train": tc_json, "baselines": encoders}
        fusion_paths = list(_fusion_state_paths(rd, FUSED_TAG))
        inputs = [rd.path("fused", "train.embd"), rd.path("fused", "val.embd"), *fusion_paths] + _embedding_inputs(rd, encoders)
        n_classes = _n_classes(rd) if head_kind == SOFTMAX else None

        def fit_one(tag, X_train, y_train, X_val, y_val, ids_val):
            model = train_readout((X_train, y_train), (X_val, y_val), tc, head_kind, n_classes)
            if head_kind == BINARY:
                select_threshold(model, (X_val, y_val))
            path = rd.path("models", f"{tag}.rdot")
            save_readout(model, path)
            pred_path = rd.path("predictions", f"{tag}_val.csv")
            write_predictions(predict(model, X_val, ids_val, y_val, tag), pred_path)
            return [path, pred_path]

        def body():
            for old in rd.path("models").glob("*"):
                old.unlink()
            split, labels = rd.split()
            y = {s: np.array([labels[i] for i in split.ids(s)], dtype=np.int64) for s in ("train", "val")}
            fused = {s: load_embedding_store(rd.path("fused", f"{s}.embd")) for s in ("train", "val")}
            for s in ("train", "val"):
                if fused[s].row_ids != split.ids(s):
                    raise ConsistencyError(f"fused {s} rows do not match the split")
            outputs = fit_one(FUSED_TAG, fused["train"].matrix, y["train"], fused["val"].matrix, y["val"], split.val_ids)
            data = _train_data(rd, encoders, ["train", "val"])
            for name in encoders:
                fusion = fit_fusion({name: data["train"][1][name]}, FusionConfig("aligned_mean", name, ()))
                outputs += _save_fusion_state(rd, name, fusion)
                outputs += fit_one(
                    name,
                    fusion.transform(data["train"][1]),
                    y["train"],
                    fusion.transform(data["val"][1]),
                    y["val"],
                    split.val_ids,
                )
            return outputs

        rm.config.update({"head": head_kind, "seed": int(seed)})
        _run_stage(rd, rm, "train", stage_cfg, inputs, body, ["fuse"])
        return rm


def model_tags(rd: RunDir, rm: RunManifest) -> list[str]:
    return [FUSED_TAG, rm.config["anchor"], *rm.config["sources"]]


def evaluate_stage(run_dir, split_name: str = "test") -> RunManifest:
    """Predict ``split_name`` with every trained model and write metrics.csv."""
    if split_name not in ("train", "val", "test"):
        raise ConfigError(f"unknown split {split_name!r}")
    rd = RunDir(run_dir)
    with rd.lock():
        rm = rd.load()
        if not rm.done("train"):
            raise IncompleteRun("stage 'evaluate' needs 'train' to have completed")
        tags = model_tags(rd, rm)
        encoders = [rm.config["anchor"], *rm.config["sources"]]
        inputs = _embedding_inputs(rd, encoders) + [rd.path("models", f"{t}.rdot") for t in tags]
        inputs += [p for t in tags for p in _fusion_state_paths(rd, t)]

        def body():
            split, labels = rd.split()
            ids = split.ids(split_name)
            if not ids:
                raise InvalidInput(f"the {split_name} split is empty")
            emb = {n: rd.store(n).rows(ids) for n in encoders}
            y = np.array([labels[i] for i in ids], dtype=np.int64)
            outputs = []
            rows = []
            for tag in tags:
                fusion = load_fusion(rd, tag)
                model = load_readout(rd.path("models", f"{tag}.rdot"))
                X = fusion.transform(emb)
                if tag == FUSED_TAG:
                    path = rd.path("fused", f"{split_name}.embd")
                    save_embedding_store(EmbeddingStore(FUSED_TAG, X, ids), path)
                    outputs.append(path)
                pred_path = rd.path("predictions", f"{tag}_{split_name}.csv")
                write_predictions(predict(model, X, ids, y, tag), pred_path)
                outputs.append(pred_path)
                persisted = read_predictions(pred_path, tag)
                m = compute_metrics(persisted)
                rows.append([tag, split_name, m.accuracy, m.f1, m.roc_auc])
            metrics_path = rd.path("reports", "metrics.csv")
            write_csv(metrics_path, ["model_tag", "split", "accuracy", "f1", "roc_auc"], rows)
            txt = rd.path("reports", "metrics.txt")
            txt.write_text(text_table(["model_tag", "split", "accuracy", "f1", "roc_auc"], rows), encoding="utf-8")
            return outputs + [metrics_path, txt]

        rm.config.update({"eval_split": split_name})
        _run_stage(rd, rm, "evaluate", {"split": split_name}, inputs, body, ["train"])
        return rm


def load_predictions(rd: RunDir, rm: RunManifest, tag: str, split_name: str | None = None) -> PredictionSet:
    split_name = split_name or rm.config.get("eval_split", "test")
    path = rd.path("predictions", f"{tag}_{split_name}.csv")
    if not path.is_file():
        raise IncompleteRun(f"no {split_name} predictions for model {tag!r}")
    model = load_readout(rd.path("models", f"{tag}.rdot"))
    return read_predictions(path, tag, model.threshold if model.head == BINARY else None)


def diagnose_stage(run_dir, against: str | None = None) -> RunManifest:
    """Overlap, transition, and confidence-shift reports: ``against`` vs the fused model."""
    rd = RunDir(run_dir)
    with rd.lock():
        rm = rd.load()
        if not rm.done("evaluate"):
            raise IncompleteRun("stage 'diagnose' needs 'evaluate' to have completed")
        tags = model_tags(rd, rm)
        against = against or rm.config["anchor"]
        if against not in tags or against == FUSED_TAG:
            raise ConfigError(f"--against must name a baseline model, one of {tags[1:]}")
        split_name = rm.config.get("eval_split", "test")
        inputs = [rd.path("predictions", f"{t}_{split_name}.csv") for t in tags]

        def body():
            preds = {t: load_predictions(rd, rm, t) for t in tags}
            outputs = []
            overlap = error_overlap([preds[t] for t in tags])
            path = rd.path("reports", "overlap.csv")
            write_csv(path, ["model", *overlap.model_tags], overlap.rows())
            outputs.append(path)
            txt = [
                "Error overlap, entry (A, B) = P(B error | A error)",
                text_table(["A \\ B", *overlap.model_tags], overlap.rows()),
            ]
            base, fused = preds[against], preds[FUSED_TAG]
            if base.is_binary:
                table = decision_transitions(base, fused)
                path = rd.path("reports", "transitions.csv")
                write_csv(path, ["from_state", "to_state", "count"], table.rows())
                outputs.append(path)
                txt += [f"Decision transitions {against} -> {FUSED_TAG}", text_table(["from", "to", "count"], table.rows())]
            shifts = confidence_shift(base, fused)
            path = rd.path("reports", "confidence_shift.csv")
            write_csv(path, ["id", "group", "delta_p_true"], ([r.id, r.group, r.delta_p_true] for r in shifts))
            outputs.append(path)
            summary = []
            for g in ("corrected", "degraded", "unchanged"):
                vals = np.array([r.delta_p_true for r in shifts if r.group == g])
                summary.append([g, len(vals), float(np.median(vals)) if len(vals) else None])
            txt += ["Confidence shift of the true label", text_table(["group", "n", "median_delta"], summary)]
            path = rd.path("reports", "diagnostics.txt")
            path.write_text("\n".join(txt), encoding="utf-8")
            outputs.append(path)
            return outputs

        _run_stage(rd, rm, "diagnose", {"against": against}, inputs, body, ["evaluate"])
        return rm


def occlude(run_dir, doc_id: str, variants_dir, tag: str = FUSED_TAG, target_class: int = 1) -> list:
    """Sentence occlusion for one document.

    ``variants_dir`` holds ``NAME.embd`` per encoder; row ``i`` of each file
    embeds the document with sentence ``i`` removed. Rows are matched across
    encoders by id, ordered by the anchor file.
    """
    rd = RunDir(run_dir)
    with rd.lock():
        rm = rd.load()
        if not rm.done("train"):
            raise IncompleteRun("occlusion needs a trained model")
        fusion = load_fusion(rd, tag)
        model = load_readout(rd.path("models", f"{tag}.rdot"))
        base, occluded = {}, {}
        order = None
        for name in fusion.config.encoders:
            path = Path(variants_dir, f"{name}.embd")
            if not path.is_file():
                raise ConsistencyError(f"no occluded variants for encoder {name!r} in {variants_dir}")
            store = load_embedding_store(path, name)
            order = order or store.row_ids
            occluded[name] = store.rows(order)
            base[name] = rd.store(name).rows([doc_id])
        results = occlusion_attribution(model, fusion, base, occluded, doc_id, target_class)
        out = rd.path("reports", "occlusion.csv")
        write_csv(out, ["sentence_index", "delta_z", "direction"], ([r.sentence_index, r.delta_z, r.direction] for r in results))
        rm.artifacts[rd.rel(out)] = sha256_file(out)
        rm.save(rd.manifest_path)
        return results


@dataclass
class RunConfig:
    anchor: str
    alpha: float = DEFAULT_ALPHA
    sources: Sequence[str] | None = None
    strategy: str = "aligned_mean"
    head: str = "binary"
    seed: int = 42
    train: TrainConfig | None = None
    eval_split: str = "test"
    against: str | None = None


def run_pipeline(run_dir, config: RunConfig) -> RunManifest:
    """Every stage after ingest, in order."""
    fit_align(run_dir, config.anchor, config.alpha, config.sources)
    fuse_stage(run_dir, config.strategy)
    train_stage(run_dir, config.head, config.seed, config.train)
    evaluate_stage(run_dir, config.eval_split)
    return diagnose_stage(run_dir, config.against)


def compare_runs(run_dirs: Sequence[str | os.PathLike]) -> list[list]:
    """One row per run with its config summary and fused test metrics."""
    if not run_dirs:
        raise InvalidInput("compare needs at least one run directory")
    header = ["run", "anchor", "sources", "strategy", "alpha", "seed", "accuracy", "f1", "roc_auc"]
    rows = [header]
    for path in run_dirs:
        rd = RunDir(path)
        rm = rd.load()
        if not rm.done("evaluate"):
            raise IncompleteRun(f"run {path} has not completed evaluate")
        m = compute_metrics(load_predictions(rd, rm, FUSED_TAG))
        cfg = rm.config
        rows.append([str(path), cfg["anchor"], "+".join(cfg["sources"]), cfg["strategy"], float(cfg["alpha"]), int(cfg["seed"]), m.accuracy, m.f1, m.roc_auc])
    return rows

