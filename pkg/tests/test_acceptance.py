"""Replication criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line, repeated in the pytest terminal
summary. The training criteria run the shipped configs in ``configs/`` and
take from a few minutes (circles) to tens of minutes (digits) on one core.
Deselect them with ``-m "not acceptance"``.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from aqvec.classifier import centroids_from_states, raw_linear_baseline
from aqvec.cli import main
from aqvec.config import RunConfig
from aqvec.evolution import embed_trajectories
from aqvec.experiments import prepare, scaling_sweep
from aqvec.hamiltonian import AnnealSpec, EmbeddingMap, assemble_hamiltonian, schedule_value
from aqvec.linalg import density_matrix, expm_minus_i, hs_distance
from aqvec.serialization import read_metrics, read_pgm

from ._report import record
from .oracles import reference_hamiltonian

pytestmark = pytest.mark.acceptance

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def load(name, **updates):
    return RunConfig.load(CONFIGS / f"{name}.toml").override(**updates)


def fmt(rows, key="test_mean"):
    return ", ".join(f"n={r['n_qubits']}: {r[key]:.4f}" for r in rows)


def test_gradient_correctness(capsys):
    start = time.perf_counter()
    code = main(["grad-check"])
    elapsed = time.perf_counter() - start
    out = capsys.readouterr().out
    summary = out.strip().splitlines()[-1]
    instances = sum(1 for line in out.splitlines() if line.startswith("instance"))
    ok = code == 0 and instances >= 20 and elapsed < 120
    record("gradient correctness", ok, f"{summary} runtime={elapsed:.1f}s")
    assert ok, out


def test_exact_math_suite():
    rng = np.random.default_rng(0)
    errs = {}
    a = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    h = (a + a.conj().T) / 2
    u = expm_minus_i(h, 0.37)
    errs["unitarity"] = np.max(np.abs(u.conj().T @ u - np.eye(16)))

    spec = AnnealSpec(4, 3, 10, 2.0)
    w = EmbeddingMap.random(spec, 3, 1.0, rng)
    traj = embed_trajectories(spec, w, rng.normal(size=(8, 3)))
    errs["norm"] = np.max(np.abs(np.linalg.norm(traj, axis=-1) - 1))

    worst = 0.0
    for c in centroids_from_states(traj[:, -1], np.arange(8) % 3):
        m = c.matrix
        worst = max(worst, np.max(np.abs(m - m.conj().T)), abs(np.trace(m) - 1), -min(0.0, np.linalg.eigvalsh(m)[0]))
    errs["centroid"] = worst

    v = rng.normal(0, 5, spec.coeff_length)
    n = spec.n_qubits
    hx, hz, j = np.array(spec.fixed_hx), np.array(spec.fixed_hz), np.array(spec.fixed_j)
    flat = np.zeros((3 * n - 1, 3))
    errs["endpoint s=0"] = np.max(np.abs(assemble_hamiltonian(spec, v, 0.0)
                                         - reference_hamiltonian(n, flat, hx, hz, j, 0.0)))
    errs["endpoint s=1"] = np.max(np.abs(assemble_hamiltonian(spec, v, 1.0)
                                         - reference_hamiltonian(n, flat, hx, hz, j, 1.0)))
    c = rng.normal(0, 5, 3)
    errs["schedule boundaries"] = max(abs(schedule_value(c, 0.0)), abs(schedule_value(c, 1.0)))

    zero, one = np.array([1, 0], complex), np.array([0, 1], complex)
    plus = (zero + one) / np.sqrt(2)
    errs["hs orthogonal"] = abs(hs_distance(density_matrix(zero), density_matrix(one)) - 2)
    errs["hs |0>,|+>"] = abs(hs_distance(density_matrix(zero), density_matrix(plus)) - 1)

    limits = {"unitarity": 1e-10, "norm": 1e-10, "centroid": 1e-12, "endpoint s=0": 1e-12,
              "endpoint s=1": 1e-10, "schedule boundaries": 1e-10, "hs orthogonal": 1e-12, "hs |0>,|+>": 1e-12}
    bad = [k for k in limits if not errs[k] < limits[k]]
    record("exact-math suite", not bad, " ".join(f"{k}={errs[k]:.1e}" for k in limits))
    assert not bad, bad


def test_two_class_circles():
    cfg = load("circles2")
    times, rows = [], []
    prepared = prepare(cfg)
    for q in cfg.qubits():
        start = time.perf_counter()
        rows += scaling_sweep(cfg.override(**{"experiment.qubits": [q]}), prepared)["rows"]
        times.append(time.perf_counter() - start)
    ok = all(r["failed"] == 0 and r["train_mean"] >= 0.95 and r["test_mean"] >= 0.95 for r in rows)
    ok = ok and max(times) < 15 * 60
    record("2-class circles", ok, f"train [{fmt(rows, 'train_mean')}] test [{fmt(rows)}] "
                                  f"max runtime per n={max(times) / 60:.1f}min")
    assert ok, rows


def test_three_class_circles():
    start = time.perf_counter()
    cfg = load("circles3")
    prepared = prepare(cfg)
    results = {}
    for loss, floor in (("neg_product", 0.90), ("neg_min_over_spread", 0.95)):
        row = scaling_sweep(cfg.override(**{"train.loss_kind": loss}), prepared)["rows"][0]
        results[loss] = (row, floor)
    elapsed = time.perf_counter() - start
    ok = all(r["failed"] == 0 and r["train_mean"] >= f and r["test_mean"] >= f for r, f in results.values())
    ok = ok and elapsed < 30 * 60
    detail = " ".join(f"{k}: train={r['train_mean']:.4f} test={r['test_mean']:.4f} (>= {f})"
                      for k, (r, f) in results.items())
    record("3-class circles n=5", ok, f"{detail} runtime={elapsed / 60:.1f}min")
    assert ok, results


def test_digits_three_vs_five():
    start = time.perf_counter()
    rows = {r["n_qubits"]: r for r in scaling_sweep(load("digits35"))["rows"]}
    elapsed = time.perf_counter() - start
    gain = rows[4]["test_mean"] - rows[1]["test_mean"]
    ok = (all(r["failed"] == 0 and r["n_runs"] == 8 for r in rows.values())
          and rows[5]["test_mean"] >= 0.93 and gain >= 0.05 and elapsed < 60 * 60)
    record("digits 3 vs 5", ok, f"test [{fmt(rows.values())}] n4-n1={gain:.4f} runtime={elapsed / 60:.1f}min")
    assert ok, rows


def test_digits_one_three_five():
    start = time.perf_counter()
    rows = {r["n_qubits"]: r for r in scaling_sweep(load("digits135"))["rows"]}
    elapsed = time.perf_counter() - start
    ok = (all(r["failed"] == 0 and r["n_runs"] == 8 for r in rows.values())
          and rows[5]["test_mean"] >= 0.90 and 0.65 <= rows[2]["test_mean"] <= 0.90 and elapsed < 90 * 60)
    record("digits 1/3/5", ok, f"test [{fmt(rows.values())}] (n=5 >= 0.90, n=2 in [0.65, 0.90]) "
                               f"runtime={elapsed / 60:.1f}min")
    assert ok, rows


@pytest.fixture(scope="module")
def circles_run(tmp_path_factory):
    """One CLI training run on the 2-class circles config, twice, with overlap snapshots."""
    tmp = tmp_path_factory.mktemp("circles_run")
    outs = []
    for k in range(2):
        out = tmp / f"run{k}"
        assert main(["train", "--config", str(CONFIGS / "circles2.toml"), "--qubits", "3", "--seed", "0",
                     "--out", str(out), "--snapshots"]) == 0
        outs.append(out)
    return outs


def test_linear_inseparability_contrast(circles_run):
    prepared = prepare(load("circles2"))
    base = raw_linear_baseline(prepared.train, prepared.test)[1]
    code = main(["eval", "--checkpoint", str(circles_run[0] / "checkpoint.json"),
               "--config", str(CONFIGS / "circles2.toml"), "--out", str(circles_run[0] / "eval")])
    quantum = json.loads((circles_run[0] / "eval" / "eval.json").read_text())["accuracy"]
    ok = code == 0 and base < 0.70 and quantum >= 0.95
    record("linear-inseparability contrast", ok, f"linear test={base:.4f} (< 0.70) quantum test={quantum:.4f} (>= 0.95)")
    assert ok


def test_overlap_structure(circles_run):
    out = circles_run[0]
    summary = json.loads((out / "provenance.json").read_text())["summary"]
    frames = sorted((out / "overlap").glob("overlap_*.pgm"))
    steps = load("circles2")["anneal.steps"]
    first, last = read_pgm(frames[0]), read_pgm(frames[-1])
    contrast = _contrast_from_csv(out / "overlap" / frames[-1].name.replace(".pgm", ".csv"))
    ok = contrast > 0.2 and len(frames) == steps + 1 and first.shape == last.shape
    record("overlap structure", ok, f"within-between={contrast:.4f} (> 0.2) frames={len(frames)} "
                                    f"(N+1={steps + 1}) epochs={summary['epochs']}")
    assert ok


def _contrast_from_csv(path):
    """Within minus between class mean overlap, diagonal excluded; frames are label-grouped."""
    m = np.loadtxt(path, delimiter=",")
    labels = np.sort(prepare(load("circles2")).train.labels)
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(len(labels), dtype=bool)
    return m[same & off].mean() - m[~same].mean()


def test_determinism(circles_run):
    a, b = circles_run
    names = ["metrics.csv", "checkpoint.json", "provenance.json"]
    same = {n: (a / n).read_bytes() == (b / n).read_bytes() for n in names}
    frames = sorted(p.name for p in (a / "overlap").iterdir() if p.suffix in (".csv", ".pgm"))
    same["overlap"] = all((a / "overlap" / f).read_bytes() == (b / "overlap" / f).read_bytes() for f in frames)
    rows = len(read_metrics(a / "metrics.csv"))
    ok = all(same.values()) and rows == load("circles2")["train.epochs"]
    record("determinism", ok, " ".join(f"{k}={'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
    assert ok, same
