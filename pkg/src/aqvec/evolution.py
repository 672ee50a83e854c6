"""Piecewise-constant time evolution and reverse-mode gradients with respect to ``W``.

Each step applies ``exp(-i H(s_n) dt)`` built from the eigendecomposition of
the (real symmetric) step Hamiltonian.  The backward pass differentiates each
step unitary with the divided-difference (Daleckii-Krein) formula on the
retained spectrum, then pulls term weights back through the affine schedule
map to the embedding matrix.

Gradient convention: for a real loss ``L`` of a state ``psi`` the adjoint
vector ``g`` satisfies ``dL = Re(g^dagger dpsi)``.  A density-matrix gradient
``Gamma = dL/drho`` becomes ``g = 2 Gamma psi``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from aqvec.hamiltonian import (
    DEGENERACY_GAP,
    LEFT_ENDPOINT,
    MIDPOINT,
    STEP_SAMPLINGS,
    AnnealSpec,
    EmbeddingMap,
    coefficient_basis,
    embed_coefficients,
)
from aqvec.linalg import check_hermitian
from aqvec import losses

EIG_TIE = 1e-9
CACHE_BYTES = 512 * 2**20


class DegenerateGroundStateWarning(UserWarning):
    pass


class DegenerateGroundStateError(ValueError):
    pass


@dataclass(frozen=True)
class EvolutionGrid:
    """Uniform step grid over ``[0, t_max]`` with one Hamiltonian sample per step."""

    steps: int
    t_max: float
    sampling: str = MIDPOINT

    def __post_init__(self):
        if int(self.steps) < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.sampling not in STEP_SAMPLINGS:
            raise ValueError(f"sampling must be one of {STEP_SAMPLINGS}, got {self.sampling!r}")

    @classmethod
    def from_spec(cls, spec: AnnealSpec) -> "EvolutionGrid":
        return cls(spec.steps, spec.t_max, spec.step_sampling)

    @property
    def dt(self) -> float:
        return self.t_max / self.steps

    @property
    def s_points(self) -> np.ndarray:
        """Normalised times at which each step's Hamiltonian is sampled."""
        n = np.arange(self.steps, dtype=float)
        offset = 0.5 if self.sampling == MIDPOINT else 0.0
        return (n + offset) / self.steps

    @property
    def s_records(self) -> np.ndarray:
        """Normalised times of the recorded states, ``0`` through ``1``."""
        return np.arange(self.steps + 1, dtype=float) / self.steps


@dataclass
class Trajectory:
    states: np.ndarray  # (N + 1, D)
    eigenvalues: np.ndarray  # (N, D)
    eigenvectors: np.ndarray  # (N, D, D)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass
class GradientReport:
    grad_w: np.ndarray
    loss_value: float
    fd_check: dict | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.grad_w)):
            raise FloatingPointError("gradient has non-finite entries")


def _phase_fix_columns(v: np.ndarray) -> np.ndarray:
    """Make the first significant component of each vector (last axis) real-positive."""
    mags = np.abs(v)
    first = np.argmax(mags > 1e-12 * mags.max(axis=-1, keepdims=True), axis=-1)
    pivot = np.take_along_axis(v, first[..., None], axis=-1)
    return v * (np.abs(pivot) / pivot)


def ground_state(h) -> np.ndarray:
    """Lowest eigenvector of ``h`` with a deterministic phase.

    A ground gap below ``1e-9`` emits :class:`DegenerateGroundStateWarning`
    and the lowest-index eigenvector is returned.
    """
    h = check_hermitian(h)
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    if len(w) > 1 and w[1] - w[0] < DEGENERACY_GAP:
        warnings.warn(f"degenerate ground state (gap {w[1] - w[0]:.3e})", DegenerateGroundStateWarning,
                      stacklevel=2)
    return _phase_fix_columns(v[:, 0].astype(complex))


@dataclass
class Propagation:
    """Forward pass over a batch of coefficient vectors, optionally keeping the spectra."""

    states: np.ndarray  # (B, N + 1, D) when kept, else (B, 1, D) holding the final state
    eigenvalues: np.ndarray | None = None  # (B, N, D)
    eigenvectors: np.ndarray | None = None  # (B, N, D, D)
    ground: tuple | None = field(default=None, repr=False)  # data-driven H(0) spectra

    @property
    def final(self) -> np.ndarray:
        return self.states[:, -1]


def _initial_states(spec: AnnealSpec, weights0: np.ndarray, keep: bool):
    """Ground states of ``H(0)`` for each row of ``weights0`` (shape ``(B, P)``)."""
    ops = spec.layout.operators
    if not spec.data_driven:
        h0 = np.tensordot(weights0[0], ops, 1)
        w, v = np.linalg.eigh(h0)
        if w[1] - w[0] < DEGENERACY_GAP:
            warnings.warn(f"degenerate initial ground state (gap {w[1] - w[0]:.3e})",
                          DegenerateGroundStateWarning, stacklevel=3)
        psi0 = _phase_fix_columns(v[:, 0].astype(complex))
        return np.broadcast_to(psi0, (weights0.shape[0], psi0.size)).copy(), None
    h0 = np.tensordot(weights0, ops, 1)
    w, v = np.linalg.eigh(h0)
    gaps = w[:, 1] - w[:, 0]
    if np.any(gaps < DEGENERACY_GAP):
        warnings.warn(f"{int(np.sum(gaps < DEGENERACY_GAP))} sample(s) have a degenerate initial "
                      "ground state; using the lowest-index eigenvector", DegenerateGroundStateWarning,
                      stacklevel=3)
    psi0 = _phase_fix_columns(v[:, :, 0].astype(complex))
    return psi0, ((w, v) if keep else None)


def propagate(spec: AnnealSpec, grid: EvolutionGrid, coeffs, keep: bool = False) -> Propagation:
    """Evolve the ground state of ``H(0)`` for every coefficient vector in ``coeffs``.

    ``coeffs`` has shape ``(B, R)``.  With ``keep=True`` all intermediate
    states and per-step spectra are retained for :func:`backpropagate`.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if coeffs.shape[1] != spec.coeff_length:
        raise ValueError(f"coefficient vectors have length {coeffs.shape[1]}, spec needs {spec.coeff_length}")
    ops = spec.layout.operators
    basis, const = coefficient_basis(spec, np.r_[0.0, grid.s_points])
    weights = const + np.einsum("br,rsp->bsp", coeffs, basis)
    psi, ground = _initial_states(spec, weights[:, 0], keep)
    b, d = psi.shape
    n = grid.steps
    dt = grid.dt
    if keep:
        states = np.empty((b, n + 1, d), dtype=complex)
        states[:, 0] = psi
        evals = np.empty((b, n, d))
        evecs = np.empty((b, n, d, d))
    for k in range(n):
        h = np.tensordot(weights[:, k + 1], ops, 1)
        lam, v = np.linalg.eigh(h)
        if dt != 0.0:
            amp = _matvec(np.swapaxes(v, 1, 2), psi)
            psi = _matvec(v, np.exp(-1j * dt * lam) * amp)
        if keep:
            states[:, k + 1] = psi
            evals[:, k] = lam
            evecs[:, k] = v
    if keep:
        return Propagation(states, evals, evecs, ground)
    return Propagation(psi[:, None, :])


def _matvec(m: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Batched real-matrix times complex-vector product."""
    re = (m @ z.real[..., None])[..., 0]
    im = (m @ z.imag[..., None])[..., 0]
    return re + 1j * im


def _phi(lam: np.ndarray, dt: float) -> np.ndarray:
    """Divided differences of ``exp(-i lam dt)`` over eigenvalue pairs; shape ``(B, D, D)``."""
    e = np.exp(-1j * dt * lam)
    diff = lam[:, :, None] - lam[:, None, :]
    num = e[:, :, None] - e[:, None, :]
    close = np.abs(diff) <= EIG_TIE
    safe = np.where(close, 1.0, diff)
    limit = np.broadcast_to((-1j * dt * e)[:, :, None], num.shape)
    return np.where(close, limit, num / safe)


def _adjoint_kernel(g_t: np.ndarray, psi_t: np.ndarray, lam: np.ndarray, dt: float) -> np.ndarray:
    """``Re(conj(g_a) Phi_ab psi_b)`` in the eigenbasis, without forming complex ``Phi``.

    Uses ``Phi_ab = -i dt h_a h_b sinc(dt (lam_a - lam_b) / 2)`` with
    ``h = exp(-i dt lam / 2)``, which is the divided difference above with
    its coincident-eigenvalue limit built in and no cancellation.
    """
    h = np.exp(-0.5j * dt * lam)
    alpha = g_t.conj() * h
    beta = h * psi_t
    sinc = np.sinc((0.5 * dt / np.pi) * (lam[:, :, None] - lam[:, None, :]))
    outer_im = alpha.real[:, :, None] * beta.imag[:, None, :] + alpha.imag[:, :, None] * beta.real[:, None, :]
    return dt * sinc * outer_im


def backpropagate(spec: AnnealSpec, grid: EvolutionGrid, prop: Propagation, g_final) -> np.ndarray:
    """Pull final-state adjoints back to coefficient gradients ``dL/dv`` of shape ``(B, R)``."""
    if prop.eigenvectors is None:
        raise ValueError("propagation was run without keep=True")
    ops = spec.layout.operators
    basis, _ = coefficient_basis(spec, np.r_[0.0, grid.s_points])
    dt = grid.dt
    g = np.array(g_final, dtype=complex)
    b, d = g.shape
    dweights = np.zeros((b, grid.steps + 1, spec.n_terms))
    # only Re(Q) enters tr(P_p Q) because the Pauli terms are real
    ops_flat = ops.reshape(len(ops), -1)
    for k in range(grid.steps - 1, -1, -1):
        v = prop.eigenvectors[:, k]
        vt = np.swapaxes(v, 1, 2)
        lam = prop.eigenvalues[:, k]
        g_t = _matvec(vt, g)
        psi_t = _matvec(vt, prop.states[:, k])
        kmat = _adjoint_kernel(g_t, psi_t, lam, dt)
        # with Q = V K^T V^T, dL/da_p = Re tr(P_p Q) = sum_ij P_ij Re(Q^T)_ij
        q_t = v @ kmat @ vt
        dweights[:, k + 1] = q_t.reshape(b, -1) @ ops_flat.T
        g = _matvec(v, np.exp(1j * dt * lam) * g_t)
    if spec.data_driven:
        dweights[:, 0] = _ground_state_pullback(prop, g, ops)
    return np.einsum("bsp,rsp->br", dweights, basis)


def _ground_state_pullback(prop: Propagation, g0: np.ndarray, ops: np.ndarray) -> np.ndarray:
    # d psi0 = -R dH psi0 with R = sum_{k>0} |k><k| / (E_k - E_0)
    w, v = prop.ground
    gaps = w - w[:, :1]
    if np.any(gaps[:, 1] < DEGENERACY_GAP):
        raise DegenerateGroundStateError(
            "initial Hamiltonian has a degenerate ground state; its gradient is undefined")
    inv = np.zeros_like(gaps)
    inv[:, 1:] = 1.0 / gaps[:, 1:]
    y = np.einsum("bij,bj->bi", v, inv * np.einsum("bji,bj->bi", v, g0))
    psi0 = prop.states[:, 0]
    return -np.einsum("bi,pij,bj->bp", y.conj(), ops, psi0).real


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def evolve(spec: AnnealSpec, coeffs, grid: EvolutionGrid | None = None) -> Trajectory:
    """Full trajectory (initial state plus one state per step) for one coefficient vector."""
    grid = grid or EvolutionGrid.from_spec(spec)
    prop = propagate(spec, grid, _as_batch(coeffs), keep=True)
    return Trajectory(prop.states[0], prop.eigenvalues[0], prop.eigenvectors[0])


def embed_states(spec: AnnealSpec, w: EmbeddingMap, x, grid: EvolutionGrid | None = None,
                 chunk: int | None = None) -> np.ndarray:
    """Final evolved states for a ``(K, d)`` batch of samples."""
    grid = grid or EvolutionGrid.from_spec(spec)
    w.check_spec(spec)
    x = _as_batch(x)
    coeffs = embed_coefficients(w, x)
    chunk = chunk or _chunk_size(spec, grid, keep=False)
    out = [propagate(spec, grid, coeffs[i:i + chunk]).final for i in range(0, len(coeffs), chunk)]
    return np.concatenate(out) if out else np.empty((0, spec.dim), dtype=complex)


def embed_state(spec: AnnealSpec, w: EmbeddingMap, x, grid: EvolutionGrid | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("embed_state takes a single sample; use embed_states for batches")
    return embed_states(spec, w, x, grid)[0]


def embed_trajectories(spec: AnnealSpec, w: EmbeddingMap, x, grid: EvolutionGrid | None = None) -> np.ndarray:
    """States at every recorded time for each sample; shape ``(K, N + 1, D)``."""
    grid = grid or EvolutionGrid.from_spec(spec)
    w.check_spec(spec)
    coeffs = embed_coefficients(w, _as_batch(x))
    chunk = _chunk_size(spec, grid, keep=True)
    out = [propagate(spec, grid, coeffs[i:i + chunk], keep=True).states for i in range(0, len(coeffs), chunk)]
    return np.concatenate(out)


def _chunk_size(spec: AnnealSpec, grid: EvolutionGrid, keep: bool) -> int:
    d = spec.dim
    per_sample = (grid.steps * d * d * 8 + (grid.steps + 1) * d * 16) if keep else 4 * d * d * 8
    return max(1, CACHE_BYTES // per_sample)


def backprop_states(spec: AnnealSpec, w: EmbeddingMap, x, g_final, grid: EvolutionGrid | None = None,
                    chunk: int | None = None) -> np.ndarray:
    """Gradient w.r.t. ``W`` given adjoints of the final states of ``x``."""
    grid = grid or EvolutionGrid.from_spec(spec)
    x = _as_batch(x)
    coeffs = embed_coefficients(w, x)
    chunk = chunk or _chunk_size(spec, grid, keep=True)
    grad = np.zeros_like(w.w)
    for i in range(0, len(x), chunk):
        sl = slice(i, i + chunk)
        prop = propagate(spec, grid, coeffs[sl], keep=True)
        grad += backpropagate(spec, grid, prop, g_final[sl]).T @ x[sl]
    return grad


def loss_and_grad(spec: AnnealSpec, w: EmbeddingMap, x, labels, kind, grid: EvolutionGrid | None = None):
    """Loss, gradient w.r.t. ``W`` and final states for a labelled batch.

    The forward spectra are reused for the backward pass when they fit in
    memory; otherwise the batch is re-propagated chunk by chunk.
    """
    grid = grid or EvolutionGrid.from_spec(spec)
    w.check_spec(spec)
    x = _as_batch(x)
    labels = np.asarray(labels)
    coeffs = embed_coefficients(w, x)
    chunk = _chunk_size(spec, grid, keep=True)
    if len(x) <= chunk:
        prop = propagate(spec, grid, coeffs, keep=True)
        states = prop.final
        loss, g = losses.loss_and_state_grads(states, labels, kind)
        grad = backpropagate(spec, grid, prop, g).T @ x
    else:
        states = embed_states(spec, w, x, grid)
        loss, g = losses.loss_and_state_grads(states, labels, kind)
        grad = backprop_states(spec, w, x, g, grid, chunk)
    return loss, grad, states


def grad_loss_wrt_w(spec: AnnealSpec, w: EmbeddingMap, x, labels, kind,
                    grid: EvolutionGrid | None = None) -> GradientReport:
    """Exact gradient of a centroid-distance loss with respect to every entry of ``W``."""
    loss, grad, _ = loss_and_grad(spec, w, x, labels, kind, grid)
    return GradientReport(grad, float(loss))


def batch_loss(spec: AnnealSpec, w: EmbeddingMap, x, labels, kind, grid: EvolutionGrid | None = None) -> float:
    states = embed_states(spec, w, x, grid)
    return losses.loss_value_from_states(states, np.asarray(labels), kind)


def fd_gradient_oracle(spec: AnnealSpec, w: EmbeddingMap, x, labels, kind, grid: EvolutionGrid | None = None,
                       step: float = 1e-5, loss_fn=None) -> np.ndarray:
    """Central finite differences of the loss over every entry of ``W``.

    ``loss_fn(w_matrix)`` overrides the physical loss, which is handy for
    checking the oracle itself.
    """
    if step <= 0:
        raise ValueError(f"finite-difference step must be positive, got {step}")
    if loss_fn is None:
        def loss_fn(mat):
            return batch_loss(spec, EmbeddingMap(mat), x, labels, kind, grid)
    base = np.array(w.w if isinstance(w, EmbeddingMap) else w, dtype=float)
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        plus = base.copy()
        plus[idx] += step
        minus = base.copy()
        minus[idx] -= step
        grad[idx] = (loss_fn(plus) - loss_fn(minus)) / (2 * step)
    return grad


def compare_gradients(adjoint: np.ndarray, fd: np.ndarray, floor: float = 1e-6) -> dict:
    """Relative error on entries above ``floor`` and absolute error on the rest."""
    adjoint = np.asarray(adjoint)
    fd = np.asarray(fd)
    mag = np.maximum(np.abs(adjoint), np.abs(fd))
    big = mag > floor
    err = np.abs(adjoint - fd)
    rel = err[big] / mag[big]
    return {
        "max_rel_err": float(rel.max()) if rel.size else 0.0,
        "max_abs_err_small": float(err[~big].max()) if np.any(~big) else 0.0,
        "n_checked": int(big.sum()),
        "n_small": int((~big).sum()),
    }


__all__ = [
    "LEFT_ENDPOINT",
    "MIDPOINT",
    "DegenerateGroundStateError",
    "DegenerateGroundStateWarning",
    "EvolutionGrid",
    "GradientReport",
    "Propagation",
    "Trajectory",
    "backprop_states",
    "backpropagate",
    "batch_loss",
    "compare_gradients",
    "embed_state",
    "embed_states",
    "embed_trajectories",
    "evolve",
    "fd_gradient_oracle",
    "grad_loss_wrt_w",
    "ground_state",
    "loss_and_grad",
    "propagate",
]
