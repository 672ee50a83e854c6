"""Adjoint-versus-finite-difference comparison over seeded random instances."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from aqvec.evolution import EvolutionGrid, compare_gradients, fd_gradient_oracle, grad_loss_wrt_w
from aqvec.hamiltonian import FIELDS_DATA_DRIVEN, FIELDS_FIXED, AnnealSpec, EmbeddingMap
from aqvec.losses import LossKind

STEP_CHOICES = (1, 5, 10)


@dataclass
class Instance:
    index: int
    spec: AnnealSpec
    w: EmbeddingMap
    x: np.ndarray
    labels: np.ndarray
    kind: LossKind


@dataclass
class InstanceResult:
    index: int
    n_qubits: int
    d: int
    steps: int
    coeff_source: str
    kind: str
    max_rel_err: float
    n_checked: int
    seconds: float


def make_instance(index: int, kind, seed: int = 0, max_qubits: int = 3, max_dim: int = 4) -> Instance:
    """Small random problem; size, step count and field mode cycle with ``index``."""
    kind = LossKind.parse(kind)
    rng = np.random.default_rng([seed, index])
    n = 1 + index % max_qubits
    d = 1 + (index // 2) % max_dim
    steps = STEP_CHOICES[(index // max_qubits) % len(STEP_CHOICES)]
    source = FIELDS_DATA_DRIVEN if (index // 4) % 2 else FIELDS_FIXED
    spec = AnnealSpec(n, 3, steps, float(rng.uniform(0.5, 2.0)), coeff_source=source)
    n_classes = 2 if kind is LossKind.BINARY_NEG_DISTANCE else 2 + index % 2
    per_class = 2
    labels = np.repeat(np.arange(n_classes), per_class)
    x = rng.normal(0.0, 1.0, (len(labels), d))
    w = EmbeddingMap.random(spec, d, 0.5, rng)
    return Instance(index, spec, w, x, labels, kind)


def run_instance(inst: Instance, fd_step: float = 1e-5) -> InstanceResult:
    t0 = time.perf_counter()
    grid = EvolutionGrid.from_spec(inst.spec)
    adj = grad_loss_wrt_w(inst.spec, inst.w, inst.x, inst.labels, inst.kind, grid).grad_w
    fd = fd_gradient_oracle(inst.spec, inst.w, inst.x, inst.labels, inst.kind, grid, step=fd_step)
    cmp = compare_gradients(adj, fd)
    return InstanceResult(inst.index, inst.spec.n_qubits, inst.w.d, inst.spec.steps, inst.spec.coeff_source,
                          inst.kind.value, cmp["max_rel_err"], cmp["n_checked"], time.perf_counter() - t0)


def run_grad_check(instances: int = 24, kinds=None, seed: int = 0, fd_step: float = 1e-5,
                   max_qubits: int = 3, max_dim: int = 4) -> list[InstanceResult]:
    """Instances cycle through ``kinds`` so every loss is exercised."""
    if max_qubits > 3 or max_dim > 4:
        raise ValueError("grad-check caps are n <= 3 qubits and d <= 4 features")
    kinds = [LossKind.parse(k) for k in (kinds or list(LossKind))]
    return [run_instance(make_instance(i, kinds[i % len(kinds)], seed, max_qubits, max_dim), fd_step)
            for i in range(instances)]


def summarize(results: list[InstanceResult], threshold: float) -> dict:
    worst = max(r.max_rel_err for r in results) if results else 0.0
    return {
        "instances": len(results),
        "max_rel_err": worst,
        "threshold": threshold,
        "passed": bool(results) and worst < threshold,
        "losses": sorted({r.kind for r in results}),
        "steps": sorted({r.steps for r in results}),
    }
