"""Experiment pipelines shared by the CLI and the acceptance suite."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from aqvec import data as datamod
from aqvec.classifier import (
    TrainResult,
    block_contrast,
    confusion_matrix,
    evaluate,
    nearest_centroid,
    overlap_matrix,
    train,
)
from aqvec.config import RunConfig
from aqvec.data import Dataset, NormalizationStats
from aqvec.evolution import embed_states, embed_trajectories
from aqvec.hamiltonian import AnnealSpec, EmbeddingMap
from aqvec.serialization import (
    METRICS_VERSION,
    Checkpoint,
    matrix_csv,
    metrics_csv,
    pgm_bytes,
    write_json,
)

log = logging.getLogger(__name__)


@dataclass
class Prepared:
    train: Dataset
    test: Dataset
    stats: NormalizationStats
    provenance: dict


def generate_raw(cfg: RunConfig) -> tuple[Dataset, Dataset, dict]:
    """Unnormalised train/test datasets described by the ``data.*`` keys."""
    v = cfg.values
    source = v["data.source"]
    seed = int(v["data.seed"])
    prov = {"source": source, "seed": seed}
    if source in ("circles", "spirals"):
        n_train, n_test = int(v["data.n_train"]), int(v["data.n_test"])
        total = n_train + n_test
        if source == "circles":
            ds = datamod.gen_circles(int(v["data.classes"]), total, v["data.radii"], float(v["data.noise_std"]), seed)
            prov.update(classes=int(v["data.classes"]), radii=v["data.radii"], noise_std=float(v["data.noise_std"]))
        else:
            ds = datamod.gen_spirals(total, float(v["data.turns"]), float(v["data.noise_std"]), seed)
            prov.update(turns=float(v["data.turns"]), noise_std=float(v["data.noise_std"]))
        train_set, test_set = datamod.split(ds, n_train / total, seed)
        if len(train_set) != n_train:
            raise datamod.DatasetError(f"split produced {len(train_set)} training rows, expected {n_train}")
        prov.update(n_train=n_train, n_test=n_test)
    elif source == "digits":
        labels = v["data.labels"]
        ds = datamod.load_digits_csv(v["data.path"], labels, bool(v["data.header"]))
        train_set, test_set = datamod.split(ds, float(v["data.train_fraction"]), seed)
        prov.update(labels=labels, train_fraction=float(v["data.train_fraction"]),
                    path=str(v["data.path"] or "bundled"))
    else:
        train_set = datamod.read_csv(v["data.train_path"], bool(v["data.header"]), v["data.labels"])
        test_set = (datamod.read_csv(v["data.test_path"], bool(v["data.header"]), v["data.labels"])
                    if v["data.test_path"] else Dataset(np.empty((0, train_set.d)), np.empty(0, dtype=int)))
        prov.update(train_path=str(v["data.train_path"]), test_path=str(v["data.test_path"]))
    prov.update(train_rows=len(train_set), test_rows=len(test_set))
    return train_set, test_set, prov


def prepare(cfg: RunConfig) -> Prepared:
    train_set, test_set, prov = generate_raw(cfg)
    mode = cfg.normalization()
    train_n, test_n, stats = datamod.normalize(train_set, test_set, mode, float(cfg["data.scale"]))
    prov["normalization"] = stats.to_dict()
    return Prepared(train_n, test_n, stats, prov)


@dataclass
class RunOutcome:
    spec: AnnealSpec
    result: TrainResult
    train_accuracy: float
    test_accuracy: float
    checkpoint: Checkpoint


def train_once(cfg: RunConfig, prepared: Prepared, seed: int | None = None,
               n_qubits: int | None = None) -> RunOutcome:
    spec = cfg.anneal_spec(n_qubits)
    tcfg = cfg.train_config(seed)
    result = train(prepared.train, spec, None, tcfg)
    test_acc = (evaluate(prepared.test, result.state.w, result.centroids, spec)
                if len(prepared.test) else float("nan"))
    meta = {
        "seed": tcfg.rng_seed,
        "epochs_completed": len(result.history),
        "loss_kind": tcfg.loss_kind.value,
        "initial_loss": result.initial_loss,
        "final_loss": result.history[-1].loss,
        "final_train_accuracy": result.final_train_accuracy,
        "learning_rate": tcfg.learning_rate,
        "w_init_scale": tcfg.w_init_scale,
    }
    ck = Checkpoint(spec, result.state.w, result.centroids, prepared.stats, meta)
    return RunOutcome(spec, result, result.final_train_accuracy, test_acc, ck)


def overlap_frames(spec: AnnealSpec, w: EmbeddingMap, ds: Dataset, max_samples: int = 0):
    """Overlap matrices of ``ds`` (grouped by label) at every recorded time step."""
    order = ds.grouped_order()
    if max_samples and len(order) > max_samples:
        # evenly thinned, keeping the label grouping
        keep = np.unique(np.linspace(0, len(order) - 1, max_samples).round().astype(int))
        order = order[keep]
    traj = embed_trajectories(spec, w, ds.features[order])
    frames = [overlap_matrix(traj[:, k]) for k in range(traj.shape[1])]
    return frames, ds.labels[order]


def write_training_outputs(cfg: RunConfig, prepared: Prepared, outcome: RunOutcome, out: Path,
                           snapshots: bool = False) -> dict:
    """Metrics CSV, checkpoint, provenance and optional overlap snapshots/figures."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(
        metrics_csv(outcome.result.history, bool(cfg["output.record_wall_ms"])), encoding="utf-8")
    outcome.checkpoint.save(out / "checkpoint.json")
    summary = {
        "train_accuracy": outcome.train_accuracy,
        "test_accuracy": None if math.isnan(outcome.test_accuracy) else outcome.test_accuracy,
        "final_loss": outcome.result.history[-1].loss,
        "epochs": len(outcome.result.history),
    }
    write_json({"data": prepared.provenance, "config": cfg.provenance(), "metrics_version": METRICS_VERSION,
                "summary": summary}, out / "provenance.json")
    figures = bool(cfg["output.figures"])
    if figures:
        from aqvec.plotting import plot_training_curve

        plot_training_curve(outcome.result.history, out / "training_curve.png")
    if snapshots:
        frames, labels = overlap_frames(outcome.spec, outcome.checkpoint.w, prepared.train,
                                        int(cfg["output.snapshot_samples"]))
        snap_dir = out / "overlap"
        snap_dir.mkdir(exist_ok=True)
        s_values = np.arange(len(frames)) / (len(frames) - 1)
        for k, m in enumerate(frames):
            (snap_dir / f"overlap_{k:03d}.csv").write_text(matrix_csv(m), encoding="utf-8")
            (snap_dir / f"overlap_{k:03d}.pgm").write_bytes(pgm_bytes(m))
        summary["overlap_contrast_final"] = block_contrast(frames[-1], labels)
        summary["overlap_frames"] = len(frames)
        if figures:
            from aqvec.plotting import plot_overlap_sequence

            plot_overlap_sequence(frames, s_values, out / "overlap_sequence.png", labels)
    return summary


def evaluate_checkpoint(ck: Checkpoint, ds: Dataset):
    """Accuracy, confusion matrix (rows: true, cols: predicted) and predictions."""
    if ds.d != ck.w.d:
        raise ValueError(f"dataset has {ds.d} features but the checkpoint expects {ck.w.d}")
    x = ck.normalization.apply(ds.features)
    pred = nearest_centroid(embed_states(ck.spec, ck.w, x), ck.centroids)
    labels = sorted(set(int(c.label) for c in ck.centroids) | set(ds.labels_present))
    acc = float(np.mean(pred == ds.labels)) if len(ds) else float("nan")
    return acc, confusion_matrix(ds.labels, pred, labels), labels, pred


def predict_checkpoint(ck: Checkpoint, features) -> np.ndarray:
    x = np.atleast_2d(np.asarray(features, dtype=float))
    if x.size == 0:
        return np.empty(0, dtype=int)
    if x.shape[1] != ck.w.d:
        raise ValueError(f"input has {x.shape[1]} features but the checkpoint expects {ck.w.d}")
    return nearest_centroid(embed_states(ck.spec, ck.w, ck.normalization.apply(x)), ck.centroids)


def multi_seed(cfg: RunConfig, prepared: Prepared, n_qubits: int | None = None, seeds=None) -> dict:
    """Independent training runs over seeds; failed seeds are logged and excluded."""
    seeds = list(cfg.seeds() if seeds is None else seeds)
    runs, failed = [], []
    for seed in seeds:
        try:
            outcome = train_once(cfg, prepared, seed, n_qubits)
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            warnings.warn(f"seed {seed} failed at n_qubits={n_qubits}: {exc}")
            failed.append(seed)
            continue
        runs.append({"n_qubits": outcome.spec.n_qubits, "seed": seed,
                     "train_accuracy": outcome.train_accuracy, "test_accuracy": outcome.test_accuracy,
                     "final_loss": outcome.result.history[-1].loss})
        log.info("n=%s seed=%s train=%.4f test=%.4f", outcome.spec.n_qubits, seed,
                 outcome.train_accuracy, outcome.test_accuracy)
    tr = np.array([r["train_accuracy"] for r in runs])
    te = np.array([r["test_accuracy"] for r in runs])
    n = n_qubits if n_qubits is not None else int(cfg["anneal.n_qubits"])
    summary = {
        "n_qubits": n,
        "n_runs": len(runs),
        "failed": len(failed),
        "train_mean": float(tr.mean()) if len(tr) else float("nan"),
        "train_std": float(tr.std()) if len(tr) else float("nan"),
        "test_mean": float(te.mean()) if len(te) else float("nan"),
        "test_std": float(te.std()) if len(te) else float("nan"),
    }
    return {"summary": summary, "runs": runs, "failed_seeds": failed}


SWEEP_HEADER = "n_qubits,n_runs,failed,train_mean,train_std,test_mean,test_std"
RUNS_HEADER = "n_qubits,seed,train_accuracy,test_accuracy,final_loss"


def scaling_sweep(cfg: RunConfig, prepared: Prepared | None = None) -> dict:
    prepared = prepared or prepare(cfg)
    rows, runs = [], []
    for q in cfg.qubits():
        res = multi_seed(cfg, prepared, q)
        rows.append(res["summary"])
        runs.extend(res["runs"])
    return {"rows": rows, "runs": runs}


def sweep_csv(rows) -> str:
    from aqvec.data import format_float

    lines = [SWEEP_HEADER]
    for r in rows:
        lines.append(",".join([str(r["n_qubits"]), str(r["n_runs"]), str(r["failed"])]
                              + [format_float(r[k]) for k in ("train_mean", "train_std", "test_mean", "test_std")]))
    return "\n".join(lines) + "\n"


def runs_csv(runs) -> str:
    from aqvec.data import format_float

    lines = [RUNS_HEADER]
    for r in runs:
        lines.append(",".join([str(r["n_qubits"]), str(r["seed"])]
                              + [format_float(r[k]) for k in ("train_accuracy", "test_accuracy", "final_loss")]))
    return "\n".join(lines) + "\n"
