"""Datasets: seeded synthetic generators, digits CSV ingestion, splitting and normalisation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

DIGITS_FEATURES = 64
DIGITS_PIXEL_MAX = 16.0


class DatasetError(ValueError):
    pass


class Sample(NamedTuple):
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    """Ordered samples with a uniform feature dimension."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.array(self.features, dtype=float)
        y = np.array(self.labels, dtype=int)
        if x.ndim == 1 and x.size == 0:
            x = x.reshape(0, 0)
        if x.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise DatasetError(f"{x.shape[0]} feature rows but {y.size} labels")
        if not np.all(np.isfinite(x)):
            raise DatasetError("features contain non-finite values")
        if np.any(y < 0):
            raise DatasetError("labels must be non-negative integers")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        for x, y in zip(self.features, self.labels):
            yield Sample(x, int(y))

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def labels_present(self) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unique(self.labels))

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx])

    def grouped_order(self) -> np.ndarray:
        """Indices ordered by label, then by position in the dataset."""
        return np.argsort(self.labels, kind="stable")


# ---------------------------------------------------------------- generators


def gen_circles(classes: int = 2, n_points: int = 500, radii=None, noise_std: float = 0.05,
                seed: int = 0) -> Dataset:
    """Concentric rings, class ``c`` on radius ``radii[c]`` with Gaussian jitter.

    Samples are emitted class by class in generation order; shuffle via
    :func:`split` if needed.
    """
    if classes not in (2, 3):
        raise DatasetError(f"circles support 2 or 3 classes, got {classes}")
    if radii is None:
        radii = (1.0, 0.5) if classes == 2 else (1.0, 0.65, 0.3)
    radii = tuple(float(r) for r in radii)
    if len(radii) != classes:
        raise DatasetError(f"need {classes} radii, got {len(radii)}")
    if any(b >= a for a, b in zip(radii, radii[1:])) or radii[-1] <= 0:
        raise DatasetError(f"radii must be positive and strictly decreasing, got {radii}")
    if n_points % classes:
        raise DatasetError(f"n_points={n_points} is not divisible by {classes} classes")
    if noise_std < 0:
        raise DatasetError("noise_std must be non-negative")
    rng = np.random.default_rng(seed)
    per = n_points // classes
    xs, ys = [], []
    for c, r in enumerate(radii):
        theta = rng.uniform(0.0, 2 * np.pi, per)
        pts = r * np.column_stack([np.cos(theta), np.sin(theta)])
        pts = pts + rng.normal(0.0, noise_std, pts.shape) if noise_std > 0 else pts
        xs.append(pts)
        ys.append(np.full(per, c))
    return Dataset(np.concatenate(xs), np.concatenate(ys))


def gen_spirals(n_points: int = 200, turns: float = 1.0, noise_std: float = 0.02, seed: int = 0,
                classes: int = 2) -> Dataset:
    """Two interleaved Archimedean spirals scaled to unit outer radius."""
    if classes != 2:
        raise DatasetError("spirals support exactly 2 classes")
    if n_points % 2:
        raise DatasetError(f"n_points must be even, got {n_points}")
    if turns <= 0:
        raise DatasetError("turns must be positive")
    rng = np.random.default_rng(seed)
    per = n_points // 2
    t_end = turns * 2 * np.pi
    t = rng.uniform(0.25, t_end, per)
    r = t / t_end
    xs, ys = [], []
    for c in range(2):
        theta = t + c * np.pi
        pts = r[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
        if noise_std > 0:
            pts = pts + rng.normal(0.0, noise_std, pts.shape)
        xs.append(pts)
        ys.append(np.full(per, c))
    return Dataset(np.concatenate(xs), np.concatenate(ys))


# ---------------------------------------------------------------- CSV


def format_float(v: float) -> str:
    return f"{v:.17g}"


def dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    for x, y in zip(ds.features, ds.labels):
        buf.write(",".join(format_float(v) for v in x))
        buf.write(f",{int(y)}\n")
    return buf.getvalue()


def write_csv(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dataset_to_csv(ds))


def _parse_rows(lines, n_features: int | None, header: bool, label_filter, source: str):
    xs, ys = [], []
    reader = csv.reader(lines)
    for lineno, row in enumerate(reader, start=1):
        if header and lineno == 1:
            continue
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if n_features is not None and len(row) != n_features + 1:
            raise DatasetError(f"{source}: row {lineno} has {len(row)} columns, expected {n_features + 1}")
        if len(row) < 2:
            raise DatasetError(f"{source}: row {lineno} needs at least one feature and a label")
        try:
            feats = [float(v) for v in row[:-1]]
            label = int(row[-1])
        except ValueError:
            raise DatasetError(f"{source}: row {lineno} has a non-numeric cell") from None
        if xs and len(feats) != len(xs[0]):
            raise DatasetError(f"{source}: row {lineno} has {len(feats)} features, expected {len(xs[0])}")
        if label_filter is not None and label not in label_filter:
            continue
        xs.append(feats)
        ys.append(label)
    return xs, ys


def read_csv(path, header: bool = False, label_filter=None, n_features: int | None = None) -> Dataset:
    """Read ``features..., label`` rows; the feature count is inferred unless given."""
    with open(path, encoding="utf-8", newline="") as f:
        xs, ys = _parse_rows(f, n_features, header, _as_filter(label_filter), str(path))
    if not xs:
        return Dataset(np.empty((0, n_features or 0)), np.empty(0, dtype=int))
    return Dataset(np.array(xs), np.array(ys))


def _as_filter(label_filter):
    return None if label_filter is None else {int(v) for v in label_filter}


def bundled_digits_path() -> Path:
    return Path(str(resources.files("aqvec") / "data" / "digits.csv"))


def load_digits_csv(path=None, label_filter=None, header: bool = False) -> Dataset:
    """8x8 digits (64 pixel features + label), optionally filtered to a label set.

    ``path=None`` reads the copy bundled with the package.
    """
    path = bundled_digits_path() if path is None else path
    ds = read_csv(path, header=header, label_filter=label_filter, n_features=DIGITS_FEATURES)
    if len(ds) == 0:
        raise DatasetError(f"no digits rows left after filtering to {sorted(_as_filter(label_filter) or [])}")
    return ds


# ---------------------------------------------------------------- split / normalise


def train_size(total: int, train_fraction: float) -> int:
    """``train_fraction * total`` rounded half-up (365 -> 329, 547 -> 492 at 0.9)."""
    exact = Decimal(repr(float(train_fraction))) * total
    return int(exact.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def split(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle followed by a prefix split; both halves must keep every label."""
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = train_size(len(ds), train_fraction)
    if n_train <= 0 or n_train >= len(ds):
        raise DatasetError(f"train_fraction {train_fraction} leaves an empty split of {len(ds)} samples")
    perm = np.random.default_rng(seed).permutation(len(ds))
    train, test = ds.subset(perm[:n_train]), ds.subset(perm[n_train:])
    for name, part in (("train", train), ("test", test)):
        missing = set(ds.labels_present) - set(part.labels_present)
        if missing:
            raise DatasetError(f"{name} split is missing label(s) {sorted(missing)}")
    return train, test


class NormalizationMode(str, Enum):
    NONE = "none"
    SCALE_TO_UNIT = "scale_to_unit"
    STANDARDIZE = "standardize"


@dataclass
class NormalizationStats:
    mode: NormalizationMode
    scale: float = 1.0
    mean: np.ndarray | None = None
    std: np.ndarray | None = None
    passthrough: list[int] = field(default_factory=list)

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.mode is NormalizationMode.NONE:
            return x.copy()
        if self.mode is NormalizationMode.SCALE_TO_UNIT:
            return x / self.scale
        return (x - self.mean) / self.std

    def invert(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.mode is NormalizationMode.NONE:
            return x.copy()
        if self.mode is NormalizationMode.SCALE_TO_UNIT:
            return x * self.scale
        return x * self.std + self.mean

    def to_dict(self) -> dict:
        out = {"mode": self.mode.value, "scale": self.scale}
        if self.mode is NormalizationMode.STANDARDIZE:
            out.update(mean=self.mean.tolist(), std=self.std.tolist(), passthrough=self.passthrough)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        mode = NormalizationMode(d["mode"])
        if mode is NormalizationMode.STANDARDIZE:
            return cls(mode, float(d.get("scale", 1.0)), np.array(d["mean"], dtype=float),
                       np.array(d["std"], dtype=float), list(d.get("passthrough", [])))
        return cls(mode, float(d.get("scale", 1.0)))


def fit_normalization(train: Dataset, mode, scale: float = DIGITS_PIXEL_MAX) -> NormalizationStats:
    mode = NormalizationMode(mode)
    if mode is NormalizationMode.NONE:
        return NormalizationStats(mode)
    if mode is NormalizationMode.SCALE_TO_UNIT:
        if not scale > 0:
            raise DatasetError("scale_to_unit needs a positive constant")
        return NormalizationStats(mode, float(scale))
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    flat = np.flatnonzero(std == 0)
    # zero-variance features pass through unscaled
    mean = mean.copy()
    std = std.copy()
    mean[flat] = 0.0
    std[flat] = 1.0
    return NormalizationStats(mode, 1.0, mean, std, [int(i) for i in flat])


def normalize(train: Dataset, test: Dataset, mode, scale: float = DIGITS_PIXEL_MAX):
    """Fit normalisation on ``train`` and apply it to both splits."""
    if test.d != train.d and len(test):
        raise DatasetError(f"train has {train.d} features but test has {test.d}")
    stats = fit_normalization(train, mode, scale)
    return (Dataset(stats.apply(train.features), train.labels),
            Dataset(stats.apply(test.features), test.labels) if len(test) else test,
            stats)


def concat(a: Dataset, b: Dataset) -> Dataset:
    return Dataset(np.concatenate([a.features, b.features]), np.concatenate([a.labels, b.labels]))


__all__ = [
    "Dataset",
    "DatasetError",
    "NormalizationMode",
    "NormalizationStats",
    "Sample",
    "bundled_digits_path",
    "concat",
    "dataset_to_csv",
    "fit_normalization",
    "gen_circles",
    "gen_spirals",
    "load_digits_csv",
    "normalize",
    "read_csv",
    "split",
    "train_size",
    "write_csv",
]
