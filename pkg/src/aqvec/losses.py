"""Centroid-distance losses on batches of pure states, with their state adjoints."""

from __future__ import annotations

from enum import Enum

import numpy as np


class LossKind(str, Enum):
    BINARY_NEG_DISTANCE = "binary_neg_distance"
    NEG_PRODUCT = "neg_product"
    NEG_SUM = "neg_sum"
    NEG_MIN_OVER_SPREAD = "neg_min_over_spread"

    @classmethod
    def parse(cls, value) -> "LossKind":
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown loss kind {value!r}; expected one of {names}") from None


class DegenerateEmbeddingError(ValueError):
    """Raised when every sample coincides with its class centroid (zero spread)."""


SPREAD_FLOOR = 1e-12


def centroid_matrix(states: np.ndarray) -> np.ndarray:
    """Average of ``|psi><psi|`` over the rows of ``states``."""
    states = np.asarray(states, dtype=complex)
    if states.ndim != 2 or len(states) == 0:
        raise ValueError("need at least one state to form a centroid")
    return (states.T @ states.conj()) / len(states)


def group_by_label(labels: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    classes = np.unique(labels)
    return classes, [np.flatnonzero(labels == c) for c in classes]


def pair_distances(mats: np.ndarray) -> np.ndarray:
    """Symmetric ``Tr((M_i - M_j)^2)`` matrix with zero diagonal."""
    c = len(mats)
    d = np.zeros((c, c))
    for i in range(c):
        for j in range(i + 1, c):
            diff = mats[i] - mats[j]
            d[i, j] = d[j, i] = np.vdot(diff, diff).real
    return d


def sample_spreads(states: np.ndarray, mat: np.ndarray) -> np.ndarray:
    """``Tr((|psi><psi| - M)^2)`` for each row ``psi`` of ``states``."""
    norm2 = np.einsum("bi,bi->b", states.conj(), states).real
    m_psi = states @ mat.T
    expect = np.einsum("bi,bi->b", states.conj(), m_psi).real
    return norm2 ** 2 - 2.0 * expect + np.vdot(mat, mat).real


def _distance_loss(dist: np.ndarray, kind: LossKind) -> tuple[float, np.ndarray]:
    """Loss and ``dL/dD_ij`` (upper triangle only) from the pair-distance matrix."""
    c = len(dist)
    iu = np.triu_indices(c, 1)
    vals = dist[iu]
    dl = np.zeros_like(dist)
    if kind is LossKind.BINARY_NEG_DISTANCE:
        if c != 2:
            raise ValueError(f"binary_neg_distance needs exactly 2 classes, got {c}")
        dl[0, 1] = -1.0
        return -float(vals[0]), dl
    if kind is LossKind.NEG_SUM:
        dl[iu] = -1.0
        return -float(vals.sum()), dl
    if kind is LossKind.NEG_PRODUCT:
        grads = np.array([-np.prod(np.delete(vals, k)) for k in range(len(vals))])
        dl[iu] = grads
        return -float(np.prod(vals)), dl
    raise ValueError(f"{kind} is not a pure distance loss")


def _check(states: np.ndarray, labels: np.ndarray, kind) -> LossKind:
    kind = LossKind.parse(kind)
    if len(states) != len(labels):
        raise ValueError(f"{len(states)} states but {len(labels)} labels")
    if len(np.unique(labels)) < 2:
        raise ValueError("losses need at least two classes in the batch")
    return kind


def loss_and_state_grads(states, labels, kind) -> tuple[float, np.ndarray]:
    """Loss value and per-state adjoints ``g`` with ``dL = sum_b Re(g_b^dagger dpsi_b)``."""
    states = np.asarray(states, dtype=complex)
    labels = np.asarray(labels)
    kind = _check(states, labels, kind)
    classes, groups = group_by_label(labels)
    mats = np.stack([centroid_matrix(states[idx]) for idx in groups])
    dist = pair_distances(mats)
    c = len(classes)

    if kind is LossKind.NEG_MIN_OVER_SPREAD:
        iu = np.triu_indices(c, 1)
        flat = int(np.argmin(dist[iu]))
        i_min, j_min = iu[0][flat], iu[1][flat]
        d_min = dist[i_min, j_min]
        spreads = [sample_spreads(states[idx], mats[ci]) for ci, idx in enumerate(groups)]
        best = [(float(s.max()), ci, int(np.argmax(s))) for ci, s in enumerate(spreads)]
        r_max, c_r, k_local = max(best, key=lambda t: t[0])  # first class wins ties
        if r_max < SPREAD_FLOOR:
            raise DegenerateEmbeddingError(
                "every embedded sample coincides with its class centroid (r_max = 0)")
        loss = -d_min / r_max
        dl = np.zeros_like(dist)
        dl[i_min, j_min] = -1.0 / r_max
        dl_dr = d_min / r_max ** 2
    else:
        loss, dl = _distance_loss(dist, kind)
        dl_dr = 0.0

    # dL/dM_i = sum_j dL/dD_ij * 2 (M_i - M_j)
    gamma = np.zeros_like(mats)
    for i in range(c):
        for j in range(i + 1, c):
            if dl[i, j] != 0.0:
                term = 2.0 * dl[i, j] * (mats[i] - mats[j])
                gamma[i] += term
                gamma[j] -= term
    if dl_dr:
        # r = Tr((rho_k - M_c)^2): dr/drho_k = 2 (rho_k - M_c), dr/dM_c = -2 (rho_k - M_c)
        k = groups[c_r][k_local]
        psi = states[k]
        delta = np.outer(psi, psi.conj()) - mats[c_r]
        gamma[c_r] -= 2.0 * dl_dr * delta

    g = np.empty_like(states)
    for ci, idx in enumerate(groups):
        g[idx] = (2.0 / len(idx)) * states[idx] @ gamma[ci].T
    if dl_dr:
        g[k] += 2.0 * (2.0 * dl_dr * delta) @ psi
    return float(loss), g


def loss_value_from_states(states, labels, kind) -> float:
    """Loss only; same arithmetic as :func:`loss_and_state_grads`."""
    states = np.asarray(states, dtype=complex)
    labels = np.asarray(labels)
    kind = _check(states, labels, kind)
    classes, groups = group_by_label(labels)
    mats = np.stack([centroid_matrix(states[idx]) for idx in groups])
    return loss_from_centroids(mats, [states[idx] for idx in groups], kind)


def loss_from_centroids(mats, per_class_states, kind) -> float:
    kind = LossKind.parse(kind)
    mats = np.asarray(mats)
    if len(mats) < 2:
        raise ValueError("losses need at least two classes")
    dist = pair_distances(mats)
    if kind is not LossKind.NEG_MIN_OVER_SPREAD:
        return _distance_loss(dist, kind)[0]
    if per_class_states is None:
        raise ValueError("neg_min_over_spread needs the per-class states")
    d_min = dist[np.triu_indices(len(mats), 1)].min()
    r_max = max(float(sample_spreads(np.asarray(s, dtype=complex), m).max())
                for s, m in zip(per_class_states, mats))
    if r_max < SPREAD_FLOOR:
        raise DegenerateEmbeddingError(
            "every embedded sample coincides with its class centroid (r_max = 0)")
    return -float(d_min) / r_max
