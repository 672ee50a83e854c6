"""On-disk formats: checkpoints, metrics CSV, overlap matrices (CSV and PGM), provenance."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from aqvec.classifier import ClassCentroid, EpochRecord
from aqvec.data import NormalizationStats, format_float
from aqvec.hamiltonian import AnnealSpec, EmbeddingMap

CHECKPOINT_FORMAT = "aqvec-checkpoint"
CHECKPOINT_VERSION = 1
METRICS_HEADER = "epoch,loss,train_accuracy,wall_ms"
METRICS_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    spec: AnnealSpec
    w: EmbeddingMap
    centroids: list[ClassCentroid]
    normalization: NormalizationStats
    meta: dict

    def to_dict(self) -> dict:
        rows, cols = self.w.w.shape
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "anneal": self.spec.to_dict(),
            "embedding": {
                "shape": [rows, cols],
                "row_order": "Z block, X block, ZZ block; n_sines slots per term"
                             + ("; then hx, hz, J" if self.spec.data_driven else ""),
                "data": self.w.w.tolist(),
            },
            "normalization": self.normalization.to_dict(),
            "training": self.meta,
            "centroids": [
                {
                    "label": c.label,
                    "count": c.count,
                    "shape": list(c.matrix.shape),
                    "real": c.matrix.real.tolist(),
                    "imag": c.matrix.imag.tolist(),
                }
                for c in self.centroids
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, allow_nan=False) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError("not an aqvec checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {d.get('version')}")
        spec = AnnealSpec.from_dict(d["anneal"])
        emb = d["embedding"]
        w = np.array(emb["data"], dtype=float).reshape(emb["shape"])
        w = EmbeddingMap(w)
        w.check_spec(spec)
        cents = []
        for c in d["centroids"]:
            m = np.array(c["real"], dtype=float) + 1j * np.array(c["imag"], dtype=float)
            if list(m.shape) != c["shape"]:
                raise CheckpointError(f"centroid {c['label']} shape mismatch")
            cents.append(ClassCentroid(int(c["label"]), m, int(c["count"])))
        return cls(spec, w, cents, NormalizationStats.from_dict(d["normalization"]), d.get("training", {}))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        return cls.from_dict(d)


def metrics_csv(history: list[EpochRecord], record_wall_ms: bool = False) -> str:
    """Per-epoch metrics; ``wall_ms`` is blank unless wall-clock recording is enabled."""
    lines = [METRICS_HEADER]
    for r in history:
        wall = f"{r.wall_ms:.3f}" if record_wall_ms else ""
        lines.append(f"{r.epoch},{format_float(r.loss)},{format_float(r.train_accuracy)},{wall}")
    return "\n".join(lines) + "\n"


def read_metrics(path) -> list[dict]:
    rows = Path(path).read_text(encoding="utf-8").splitlines()
    if not rows or rows[0] != METRICS_HEADER:
        raise ValueError(f"{path}: unexpected metrics header")
    out = []
    for line in rows[1:]:
        epoch, loss, acc, wall = line.split(",")
        out.append({"epoch": int(epoch), "loss": float(loss), "train_accuracy": float(acc),
                    "wall_ms": float(wall) if wall else None})
    return out


def matrix_csv(m: np.ndarray) -> str:
    return "".join(",".join(format_float(v) for v in row) + "\n" for row in np.asarray(m, dtype=float))


def write_matrix_csv(m: np.ndarray, path) -> None:
    _write_text(path, matrix_csv(m))


def pgm_bytes(m: np.ndarray) -> bytes:
    """8-bit binary PGM (P5), one pixel per entry, ``[0, 1] -> [0, 255]``."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError("PGM export needs a 2-D matrix")
    pix = np.rint(np.clip(m, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = pix.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes()


def write_pgm(m: np.ndarray, path) -> None:
    Path(path).write_bytes(pgm_bytes(m))


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    if int(parts[2]) != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported")
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def write_json(obj, path) -> None:
    _write_text(path, json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n")


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
