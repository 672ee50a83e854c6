"""Driven Ising-chain Hamiltonian with sine-series schedules and the linear data embedding.

The Hamiltonian at normalised time ``s`` is::

    H(s) = (1 - s) sum_i hx_i X_i
           + s (sum_i hz_i Z_i + sum_i J_i Z_i Z_{i+1})
           + sum_i P_i(s) Z_i + sum_i R_i(s) X_i + sum_i V_i(s) Z_i Z_{i+1}

where every schedule is ``sum_k c_k sin((k + 1) pi s)`` and therefore vanishes
at both ends.  Schedule coefficients come from a sample ``x`` through a single
matrix product ``W @ x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from aqvec.linalg import pauli_chain_op

FIELDS_FIXED = "fields-fixed"
FIELDS_DATA_DRIVEN = "fields-data-driven"
COEFF_SOURCES = (FIELDS_FIXED, FIELDS_DATA_DRIVEN)

MIDPOINT = "midpoint"
LEFT_ENDPOINT = "left-endpoint"
STEP_SAMPLINGS = (MIDPOINT, LEFT_ENDPOINT)

DEGENERACY_GAP = 1e-9


def default_fields(n: int) -> tuple[tuple[float, ...], tuple[float, ...], tuple[float, ...]]:
    """Fixed ``(hx, hz, J)`` defaults: uniform -1 transverse field, site-graded ``hz``."""
    hx = tuple(-1.0 for _ in range(n))
    hz = tuple(0.5 + 0.1 * i for i in range(n))
    j = tuple(1.0 for _ in range(n - 1))
    return hx, hz, j


@dataclass(frozen=True)
class TermLayout:
    """Ordering of the ``3n - 1`` Pauli terms: Z block, X block, then ZZ block.

    Each term owns ``n_sines`` consecutive slots in the flattened coefficient
    vector, so slot ``(t, k)`` lives at ``t * n_sines + k``.
    """

    n_qubits: int
    n_sines: int

    @cached_property
    def terms(self) -> tuple[tuple[str, object], ...]:
        n = self.n_qubits
        z = [("Z", i) for i in range(n)]
        x = [("X", i) for i in range(n)]
        zz = [("ZZ", (i, i + 1)) for i in range(n - 1)]
        return tuple(z + x + zz)

    @property
    def n_terms(self) -> int:
        return 3 * self.n_qubits - 1

    @property
    def size(self) -> int:
        return self.n_sines * self.n_terms

    def index(self, term: int, k: int) -> int:
        return term * self.n_sines + k

    def unflatten(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.size,):
            raise ValueError(f"expected {self.size} schedule coefficients, got shape {v.shape}")
        return v.reshape(self.n_terms, self.n_sines)

    def flatten(self, blocks) -> np.ndarray:
        blocks = np.asarray(blocks, dtype=float)
        if blocks.shape != (self.n_terms, self.n_sines):
            raise ValueError(f"expected shape {(self.n_terms, self.n_sines)}, got {blocks.shape}")
        return blocks.reshape(-1).copy()

    @cached_property
    def operators(self) -> np.ndarray:
        """Real ``(3n - 1, 2^n, 2^n)`` stack of the Pauli terms in layout order."""
        ops = np.stack([pauli_chain_op(kind, site, self.n_qubits).real for kind, site in self.terms])
        ops.setflags(write=False)
        return ops

    # positions of the term blocks inside ``operators``
    @property
    def z_terms(self) -> slice:
        return slice(0, self.n_qubits)

    @property
    def x_terms(self) -> slice:
        return slice(self.n_qubits, 2 * self.n_qubits)

    @property
    def zz_terms(self) -> slice:
        return slice(2 * self.n_qubits, 3 * self.n_qubits - 1)


@dataclass(frozen=True)
class AnnealSpec:
    """Static description of the annealer and its discretisation.

    In ``fields-fixed`` mode ``hx``, ``hz`` and ``J`` come from ``fixed_*``;
    in ``fields-data-driven`` mode they are the last ``3n - 1`` entries of the
    per-sample coefficient vector (order: hx, hz, J).
    """

    n_qubits: int
    n_sines: int = 3
    steps: int = 10
    t_max: float = 2.0
    fixed_hx: tuple = None
    fixed_hz: tuple = None
    fixed_j: tuple = None
    coeff_source: str = FIELDS_FIXED
    step_sampling: str = MIDPOINT
    layout: TermLayout = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.n_qubits)
        if n < 1:
            raise ValueError(f"n_qubits must be >= 1, got {self.n_qubits}")
        if int(self.n_sines) < 1:
            raise ValueError(f"n_sines must be >= 1, got {self.n_sines}")
        if int(self.steps) < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not (np.isfinite(self.t_max) and self.t_max >= 0):
            raise ValueError(f"t_max must be finite and non-negative, got {self.t_max}")
        if self.coeff_source not in COEFF_SOURCES:
            raise ValueError(f"coeff_source must be one of {COEFF_SOURCES}, got {self.coeff_source!r}")
        if self.step_sampling not in STEP_SAMPLINGS:
            raise ValueError(f"step_sampling must be one of {STEP_SAMPLINGS}, got {self.step_sampling!r}")
        hx, hz, j = default_fields(n)
        object.__setattr__(self, "n_qubits", n)
        object.__setattr__(self, "n_sines", int(self.n_sines))
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "t_max", float(self.t_max))
        for name, default, length in (("fixed_hx", hx, n), ("fixed_hz", hz, n), ("fixed_j", j, n - 1)):
            value = getattr(self, name)
            value = default if value is None else tuple(float(v) for v in value)
            if len(value) != length:
                raise ValueError(f"{name} needs {length} values, got {len(value)}")
            if not all(np.isfinite(value)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "layout", TermLayout(n, self.n_sines))
        if self.coeff_source == FIELDS_FIXED:
            self._check_non_degenerate()

    def _check_non_degenerate(self):
        fields = self.fixed_field_vector()
        for s, name in ((0.0, "initial"), (1.0, "final")):
            h = _static_part(self, fields, s)
            w = np.linalg.eigvalsh(h)
            gap = w[1] - w[0] if len(w) > 1 else np.inf
            if gap <= DEGENERACY_GAP:
                raise ValueError(
                    f"fixed fields give a degenerate {name} Hamiltonian (ground gap {gap:.3e}); "
                    "choose non-degenerate hx/hz/J")

    @property
    def n_terms(self) -> int:
        return 3 * self.n_qubits - 1

    @property
    def dim(self) -> int:
        return 2 ** self.n_qubits

    @property
    def data_driven(self) -> bool:
        return self.coeff_source == FIELDS_DATA_DRIVEN

    @property
    def coeff_length(self) -> int:
        n_tail = self.n_terms if self.data_driven else 0
        return self.layout.size + n_tail

    def fixed_field_vector(self) -> np.ndarray:
        """``hx``, ``hz``, ``J`` concatenated in tail order."""
        return np.array(self.fixed_hx + self.fixed_hz + self.fixed_j, dtype=float)

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "n_sines": self.n_sines,
            "steps": self.steps,
            "t_max": self.t_max,
            "fixed_hx": list(self.fixed_hx),
            "fixed_hz": list(self.fixed_hz),
            "fixed_j": list(self.fixed_j),
            "coeff_source": self.coeff_source,
            "step_sampling": self.step_sampling,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnnealSpec":
        return cls(**d)


def param_count(spec: AnnealSpec, d: int) -> int:
    """Number of trainable entries of the embedding matrix for data dimension ``d``."""
    return spec.coeff_length * int(d)


def _check_s(s: float) -> float:
    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"normalised time s must lie in [0, 1], got {s}")
    return s


def sine_profile(n_sines: int, s) -> np.ndarray:
    """``sin((k + 1) pi s)`` for ``k < n_sines``; shape ``s.shape + (n_sines,)``."""
    s = np.asarray(s, dtype=float)
    k = np.arange(1, n_sines + 1)
    return np.sin(np.pi * s[..., None] * k)


def schedule_value(c, s: float) -> float:
    """Evaluate ``sum_k c_k sin((k + 1) pi s)``."""
    s = _check_s(s)
    c = np.asarray(c, dtype=float)
    return float(sine_profile(len(c), s) @ c)


@dataclass
class EmbeddingMap:
    """Trainable linear map from data space to schedule coefficients."""

    w: np.ndarray

    def __post_init__(self):
        self.w = np.array(self.w, dtype=float)
        if self.w.ndim != 2:
            raise ValueError(f"embedding matrix must be 2-D, got shape {self.w.shape}")
        if not np.all(np.isfinite(self.w)):
            raise ValueError("embedding matrix has non-finite entries")

    @property
    def d(self) -> int:
        return self.w.shape[1]

    @property
    def rows(self) -> int:
        return self.w.shape[0]

    @classmethod
    def zeros(cls, spec: AnnealSpec, d: int) -> "EmbeddingMap":
        return cls(np.zeros((spec.coeff_length, d)))

    @classmethod
    def random(cls, spec: AnnealSpec, d: int, scale: float, rng: np.random.Generator) -> "EmbeddingMap":
        return cls(rng.normal(0.0, scale, size=(spec.coeff_length, d)))

    def check_spec(self, spec: AnnealSpec):
        if self.rows != spec.coeff_length:
            raise ValueError(
                f"embedding has {self.rows} rows but the anneal spec needs {spec.coeff_length}")


def embed_coefficients(w: EmbeddingMap, x) -> np.ndarray:
    """Schedule coefficients ``W @ x`` (``x`` may be one sample or a ``(K, d)`` batch)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != w.d:
        raise ValueError(f"sample dimension {x.shape[-1]} does not match embedding dimension {w.d}")
    return x @ w.w.T


def coefficient_basis(spec: AnnealSpec, s) -> tuple[np.ndarray, np.ndarray]:
    """Affine map from a coefficient vector to Pauli-term weights at each ``s``.

    Returns ``(basis, const)`` with shapes ``(R, S, P)`` and ``(S, P)`` such that
    the weight of term ``p`` at ``s[j]`` is ``const[j, p] + v @ basis[:, j, p]``.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    n, ns, nt = spec.n_qubits, spec.n_sines, spec.n_terms
    lay = spec.layout
    basis = np.zeros((spec.coeff_length, s.size, nt))
    prof = sine_profile(ns, s)  # (S, ns)
    for t in range(nt):
        basis[t * ns:(t + 1) * ns, :, t] = prof.T
    # static field envelopes per term: X terms ride (1 - s), Z and ZZ terms ride s
    envelope = np.empty((s.size, nt))
    envelope[:, lay.z_terms] = s[:, None]
    envelope[:, lay.x_terms] = (1.0 - s)[:, None]
    envelope[:, lay.zz_terms] = s[:, None]
    # tail order is hx, hz, J; map each to its operator slot
    tail_terms = np.r_[np.arange(n, 2 * n), np.arange(0, n), np.arange(2 * n, 3 * n - 1)]
    if spec.data_driven:
        const = np.zeros((s.size, nt))
        base = lay.size
        for r, t in enumerate(tail_terms):
            basis[base + r, :, t] = envelope[:, t]
    else:
        weights = np.zeros(nt)
        weights[tail_terms] = spec.fixed_field_vector()
        const = envelope * weights
    return basis, const


def term_weights(spec: AnnealSpec, coeffs, s) -> np.ndarray:
    """Pauli-term weights at each ``s``; coeffs may carry leading batch axes."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[-1] != spec.coeff_length:
        raise ValueError(
            f"coefficient vector has length {coeffs.shape[-1]}, spec needs {spec.coeff_length}")
    basis, const = coefficient_basis(spec, s)
    return const + np.einsum("...r,rsp->...sp", coeffs, basis)


def _static_part(spec: AnnealSpec, fields: np.ndarray, s: float) -> np.ndarray:
    n = spec.n_qubits
    hx, hz, j = fields[:n], fields[n:2 * n], fields[2 * n:]
    ops = spec.layout.operators
    lay = spec.layout
    return ((1.0 - s) * np.tensordot(hx, ops[lay.x_terms], 1)
            + s * (np.tensordot(hz, ops[lay.z_terms], 1) + np.tensordot(j, ops[lay.zz_terms], 1)))


def assemble_hamiltonian(spec: AnnealSpec, coeffs, s: float) -> np.ndarray:
    """Dense complex ``H(s)`` for one coefficient vector."""
    s = _check_s(s)
    a = term_weights(spec, coeffs, [s])[0]
    return np.tensordot(a, spec.layout.operators, 1).astype(complex)
