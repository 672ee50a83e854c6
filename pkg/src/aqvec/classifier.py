"""Centroid training loop, Adam updates and nearest-centroid prediction."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from aqvec.data import Dataset
from aqvec.evolution import EvolutionGrid, embed_states, loss_and_grad
from aqvec.hamiltonian import AnnealSpec, EmbeddingMap
from aqvec.linalg import hermitian_residual, hs_distance
from aqvec.losses import (
    LossKind,
    centroid_matrix,
    loss_from_centroids,
    pair_distances,
)


class TrainingError(RuntimeError):
    """Training aborted; ``history`` holds the epochs completed so far."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class ClassCentroid:
    label: int
    matrix: np.ndarray
    count: int

    def check(self, tol: float = 1e-10) -> None:
        m = self.matrix
        if hermitian_residual(m) >= tol:
            raise AssertionError(f"centroid {self.label} is not Hermitian")
        tr = np.trace(m)
        if abs(tr - 1) >= tol:
            raise AssertionError(f"centroid {self.label} has trace {tr}")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0] <= -tol:
            raise AssertionError(f"centroid {self.label} is not positive semidefinite")


def centroid(states, label: int) -> ClassCentroid:
    """Average density matrix of a list of pure states."""
    states = np.atleast_2d(np.asarray(states, dtype=complex))
    if states.size == 0:
        raise ValueError(f"class {label} has no states")
    return ClassCentroid(int(label), centroid_matrix(states), len(states))


def centroids_from_states(states, labels) -> list[ClassCentroid]:
    labels = np.asarray(labels)
    return [centroid(states[labels == c], c) for c in np.unique(labels)]


def distance_matrix(centroids: list[ClassCentroid]) -> np.ndarray:
    if len(centroids) < 2:
        raise ValueError("need at least two centroids")
    shapes = {c.matrix.shape for c in centroids}
    if len(shapes) != 1:
        raise ValueError(f"centroid dimensions differ: {sorted(shapes)}")
    return pair_distances(np.stack([c.matrix for c in centroids]))


def loss_value(centroids: list[ClassCentroid], per_class_states=None, kind=LossKind.NEG_PRODUCT) -> float:
    """Loss from centroids; ``neg_min_over_spread`` also needs each class's states."""
    return loss_from_centroids(np.stack([c.matrix for c in centroids]), per_class_states, kind)


# ---------------------------------------------------------------- optimiser


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss_kind: LossKind = LossKind.NEG_PRODUCT
    w_init_scale: float = 0.1
    rng_seed: int = 0
    full_batch: bool = True
    batch_size: int = 64
    snapshot_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, "loss_kind", LossKind.parse(self.loss_kind))
        if int(self.epochs) < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.w_init_scale >= 0:
            raise ValueError("w_init_scale must be non-negative")
        if int(self.batch_size) < 1:
            raise ValueError("batch_size must be >= 1")
        if int(self.snapshot_every) < 0:
            raise ValueError("snapshot_every must be >= 0")


@dataclass
class TrainState:
    w: EmbeddingMap
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    loss_history: list = field(default_factory=list)
    accuracy_history: list = field(default_factory=list)
    flagged: bool = False

    @classmethod
    def fresh(cls, w: EmbeddingMap) -> "TrainState":
        return cls(w, np.zeros_like(w.w), np.zeros_like(w.w))


def adam_step(state: TrainState, grad, config: TrainConfig) -> TrainState:
    """One bias-corrected Adam update; returns a new state.

    Raises:
        FloatingPointError: on non-finite gradient entries (``state.flagged`` is set).
    """
    g = np.asarray(grad, dtype=float)
    if g.shape != state.w.w.shape:
        raise ValueError(f"gradient shape {g.shape} does not match W {state.w.w.shape}")
    if not np.all(np.isfinite(g)):
        state.flagged = True
        raise FloatingPointError("non-finite gradient; update aborted")
    t = state.step + 1
    m = config.beta1 * state.m + (1 - config.beta1) * g
    v = config.beta2 * state.v + (1 - config.beta2) * g * g
    m_hat = m / (1 - config.beta1 ** t)
    v_hat = v / (1 - config.beta2 ** t)
    w = state.w.w - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return replace(state, w=EmbeddingMap(w), m=m, v=v, step=t,
                   loss_history=list(state.loss_history), accuracy_history=list(state.accuracy_history))


# ---------------------------------------------------------------- prediction


def nearest_centroid(states, centroids: list[ClassCentroid]) -> np.ndarray:
    """Label of the closest centroid for each pure state; ties go to the smaller label."""
    states = np.atleast_2d(np.asarray(states, dtype=complex))
    order = sorted(range(len(centroids)), key=lambda i: centroids[i].label)
    labels = np.array([centroids[i].label for i in order])
    dists = np.empty((len(states), len(order)))
    norm2 = np.einsum("bi,bi->b", states.conj(), states).real
    for col, i in enumerate(order):
        m = centroids[i].matrix
        expect = np.einsum("bi,bi->b", states.conj(), states @ m.T).real
        dists[:, col] = norm2 ** 2 - 2.0 * expect + np.vdot(m, m).real
    return labels[np.argmin(dists, axis=1)]


def predict_batch(x, w: EmbeddingMap, centroids, spec: AnnealSpec, grid: EvolutionGrid | None = None) -> np.ndarray:
    return nearest_centroid(embed_states(spec, w, x, grid), centroids)


def predict(x, state, centroids, spec: AnnealSpec, grid: EvolutionGrid | None = None) -> int:
    """Label of the centroid nearest to the embedded sample ``x``."""
    w = state.w if isinstance(state, TrainState) else state
    return int(predict_batch(np.asarray(x, dtype=float)[None, :], w, centroids, spec, grid)[0])


def evaluate(dataset: Dataset, state, centroids, spec: AnnealSpec, grid: EvolutionGrid | None = None) -> float:
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    w = state.w if isinstance(state, TrainState) else state
    pred = predict_batch(dataset.features, w, centroids, spec, grid)
    return float(np.mean(pred == dataset.labels))


def confusion_matrix(true, pred, labels) -> np.ndarray:
    labels = list(labels)
    pos = {c: i for i, c in enumerate(labels)}
    out = np.zeros((len(labels), len(labels)), dtype=int)
    for t, p in zip(true, pred):
        out[pos[int(t)], pos[int(p)]] += 1
    return out


def overlap_matrix(states) -> np.ndarray:
    """``|<psi_a|psi_b>|^2`` for every pair, in the given order."""
    states = np.atleast_2d(np.asarray(states, dtype=complex))
    gram = states.conj() @ states.T
    ov = np.abs(gram) ** 2
    return 0.5 * (ov + ov.T)


def block_contrast(overlaps: np.ndarray, labels) -> float:
    """Mean within-class minus mean between-class overlap (diagonal excluded)."""
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(len(labels), dtype=bool)
    within = overlaps[same & off]
    between = overlaps[~same]
    if within.size == 0 or between.size == 0:
        raise ValueError("need at least two classes with two samples each")
    return float(within.mean() - between.mean())


def raw_linear_baseline(train_set: Dataset, test_set: Dataset) -> tuple[float, float]:
    """Nearest class-mean classifier in raw feature space (Euclidean)."""
    labels = np.array(train_set.labels_present)
    means = np.stack([train_set.features[train_set.labels == c].mean(axis=0) for c in labels])

    def accuracy(ds):
        d2 = ((ds.features[:, None, :] - means[None]) ** 2).sum(axis=-1)
        return float(np.mean(labels[np.argmin(d2, axis=1)] == ds.labels))

    return accuracy(train_set), accuracy(test_set)


# ---------------------------------------------------------------- training


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_accuracy: float
    wall_ms: float


@dataclass
class TrainResult:
    state: TrainState
    centroids: list[ClassCentroid]
    history: list[EpochRecord]
    initial_loss: float
    snapshots: dict = field(default_factory=dict)

    @property
    def final_train_accuracy(self) -> float:
        return self.history[-1].train_accuracy if self.history else float("nan")


def _minibatches(labels: np.ndarray, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    # stratified so every batch carries every class
    n_batches = max(1, len(labels) // batch_size)
    per_class = [rng.permutation(np.flatnonzero(labels == c)) for c in np.unique(labels)]
    n_batches = min([n_batches] + [len(p) for p in per_class])
    chunks = [np.array_split(p, n_batches) for p in per_class]
    return [np.sort(np.concatenate([c[i] for c in chunks])) for i in range(n_batches)]


def train(dataset: Dataset, spec: AnnealSpec, grid: EvolutionGrid | None, config: TrainConfig,
          callback=None) -> TrainResult:
    """Optimise ``W`` so class centroids of the embedded training set separate.

    Each epoch row records loss and training accuracy *after* that epoch's
    update, measured with the centroids of the updated embedding, so the last
    row describes exactly the returned model.
    """
    if len(dataset.labels_present) < 2:
        raise ValueError("training needs at least two labels")
    grid = grid or EvolutionGrid.from_spec(spec)
    rng = np.random.default_rng(config.rng_seed)
    w = EmbeddingMap.random(spec, dataset.d, config.w_init_scale, rng)
    state = TrainState.fresh(w)
    x, y = dataset.features, dataset.labels
    kind = config.loss_kind

    loss, grad, states = loss_and_grad(spec, state.w, x, y, kind, grid)
    initial_loss = float(loss)
    history: list[EpochRecord] = []
    snapshots = {}
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        if config.full_batch:
            state = adam_step(state, grad, config)
        else:
            for idx in _minibatches(y, config.batch_size, rng):
                _, g_b, _ = loss_and_grad(spec, state.w, x[idx], y[idx], kind, grid)
                state = adam_step(state, g_b, config)
        loss, grad, states = loss_and_grad(spec, state.w, x, y, kind, grid)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}", history)
        cents = centroids_from_states(states, y)
        acc = float(np.mean(nearest_centroid(states, cents) == y))
        rec = EpochRecord(epoch, float(loss), acc, 1e3 * (time.perf_counter() - t0))
        history.append(rec)
        state.loss_history.append(rec.loss)
        state.accuracy_history.append(acc)
        if config.snapshot_every and epoch % config.snapshot_every == 0:
            order = dataset.grouped_order()
            snapshots[epoch] = overlap_matrix(states[order])
        if callback is not None:
            callback(rec)
    return TrainResult(state, cents, history, initial_loss, snapshots)


def class_states(states, labels) -> list[np.ndarray]:
    labels = np.asarray(labels)
    return [states[labels == c] for c in np.unique(labels)]


__all__ = [
    "ClassCentroid",
    "EpochRecord",
    "LossKind",
    "TrainConfig",
    "TrainResult",
    "TrainState",
    "TrainingError",
    "adam_step",
    "block_contrast",
    "centroid",
    "centroids_from_states",
    "class_states",
    "confusion_matrix",
    "distance_matrix",
    "evaluate",
    "hs_distance",
    "loss_value",
    "nearest_centroid",
    "overlap_matrix",
    "predict",
    "predict_batch",
    "raw_linear_baseline",
    "train",
]
