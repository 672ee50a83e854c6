"""``aqvec`` command line: gen-data, train, eval, predict, grad-check, scaling-sweep.

Exit codes: 0 success, 1 invalid input or config, 2 runtime or numerical
failure, 3 grad-check threshold not met.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from aqvec import data as datamod
from aqvec import experiments as ex
from aqvec.classifier import TrainingError
from aqvec.config import ConfigError, RunConfig
from aqvec.data import DatasetError, format_float
from aqvec.evolution import DegenerateGroundStateError
from aqvec.losses import DegenerateEmbeddingError
from aqvec.serialization import Checkpoint, CheckpointError, matrix_csv, metrics_csv, write_json

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2
EXIT_THRESHOLD = 3

log = logging.getLogger("aqvec")


class UsageError(ValueError):
    pass


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig.from_mapping()
    updates = {
        "train.seed": getattr(args, "seed", None),
        "train.epochs": getattr(args, "epochs", None),
        "output.dir": str(args.out) if getattr(args, "out", None) else None,
    }
    qubits = getattr(args, "qubits", None)
    if qubits:
        if len(qubits) == 1:
            updates["anneal.n_qubits"] = qubits[0]
        updates["experiment.qubits"] = qubits
    return cfg.override(**updates)


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


# ---------------------------------------------------------------- gen-data


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    updates = {"data.source": args.kind, "data.seed": args.data_seed}
    if args.kind in ("circles", "spirals"):
        updates.update({"data.n_train": args.train, "data.n_test": args.test, "data.noise_std": args.noise})
        if args.kind == "circles":
            updates["data.classes"] = args.classes
        else:
            updates["data.turns"] = args.turns
    else:
        updates["data.labels"] = args.labels
        updates["data.train_fraction"] = args.train_fraction
    cfg = cfg.override(**updates)
    train_set, test_set, prov = ex.generate_raw(cfg)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    datamod.write_csv(train_set, out / "train.csv")
    datamod.write_csv(test_set, out / "test.csv")
    write_json({"generator": args.kind, "parameters": prov}, out / "provenance.json")
    _emit(f"wrote {len(train_set)} train rows and {len(test_set)} test rows to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- train


def cmd_train(args) -> int:
    cfg = _load_config(args)
    prepared = ex.prepare(cfg)
    out = cfg.out_dir
    try:
        outcome = ex.train_once(cfg, prepared)
    except TrainingError as exc:
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(metrics_csv(exc.history, bool(cfg["output.record_wall_ms"])),
                                         encoding="utf-8")
        raise
    summary = ex.write_training_outputs(cfg, prepared, outcome, out, snapshots=args.snapshots)
    lines = [
        f"train_accuracy = {summary['train_accuracy']!r}",
        f"test_accuracy = {'n/a' if summary['test_accuracy'] is None else summary['test_accuracy']!r}",
        f"final_loss = {summary['final_loss']!r}",
        f"epochs = {summary['epochs']}",
    ]
    if args.snapshots:
        lines.append(f"overlap_frames = {summary['overlap_frames']}")
        lines.append(f"overlap_contrast_final = {summary['overlap_contrast_final']!r}")
    lines.append(f"outputs in {out}")
    _emit("\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------- eval / predict


def _eval_dataset(args, ck: Checkpoint):
    if args.data:
        return datamod.read_csv(args.data, header=args.header), str(args.data)
    if not args.config:
        raise UsageError("eval needs --data <csv> or --config describing the dataset")
    cfg = _load_config(args)
    train_set, test_set, _ = ex.generate_raw(cfg)
    return (train_set if args.split == "train" else test_set), f"{cfg['data.source']}:{args.split}"


def cmd_eval(args) -> int:
    ck = Checkpoint.load(args.checkpoint)
    ds, name = _eval_dataset(args, ck)
    acc, cm, labels, _ = ex.evaluate_checkpoint(ck, ds)
    lines = [f"dataset = {name}", f"samples = {len(ds)}", f"accuracy = {acc!r}",
             "confusion (rows: true, cols: predicted) labels " + ",".join(map(str, labels))]
    lines += [",".join(str(int(v)) for v in row) for row in cm]
    _emit("\n".join(lines))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json({"dataset": name, "samples": len(ds), "accuracy": acc, "labels": labels,
                    "confusion": cm.tolist()}, out / "eval.json")
        (out / "confusion.csv").write_text(matrix_csv(cm), encoding="utf-8")
    return EXIT_OK


def _parse_feature_rows(lines, d: int, source: str, first_line: int = 1) -> np.ndarray:
    """Rows of ``d`` features, optionally followed by a label column that is ignored."""
    rows = []
    for lineno, row in enumerate(csv.reader(lines), start=first_line):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) not in (d, d + 1):
            raise DatasetError(f"{source}: row {lineno} has {len(row)} columns, expected {d} (or {d + 1} with label)")
        try:
            rows.append([float(v) for v in row[:d]])
        except ValueError:
            raise DatasetError(f"{source}: row {lineno} has a non-numeric cell") from None
    return np.array(rows, dtype=float).reshape(len(rows), d)


def cmd_predict(args) -> int:
    ck = Checkpoint.load(args.checkpoint)
    d = ck.w.d
    if args.features is not None:
        x = _parse_feature_rows([args.features], d, "--features")
    elif args.data:
        with open(args.data, encoding="utf-8", newline="") as f:
            lines = f.readlines()
        x = _parse_feature_rows(lines[1:] if args.header else lines, d, str(args.data), 2 if args.header else 1)
    else:
        raise UsageError("predict needs --features or --data")
    pred = ex.predict_checkpoint(ck, x)
    text = "".join(f"{int(p)}\n" for p in pred)
    sys.stdout.write(text)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------- grad-check


def cmd_grad_check(args) -> int:
    from aqvec.gradcheck import run_grad_check, summarize

    cfg = _load_config(args)
    threshold = args.threshold if args.threshold is not None else float(cfg["gradcheck.threshold"])
    kinds = args.losses or cfg["gradcheck.losses"]
    instances = args.instances if args.instances is not None else int(cfg["gradcheck.instances"])
    results = run_grad_check(instances, kinds, int(cfg["gradcheck.seed"]), float(cfg["gradcheck.fd_step"]),
                             int(cfg["gradcheck.max_qubits"]), int(cfg["gradcheck.max_dim"]))
    for r in results:
        _emit(f"instance {r.index:3d} n={r.n_qubits} d={r.d} N={r.steps:2d} {r.coeff_source:18s} "
              f"{r.kind:20s} max_rel_err={r.max_rel_err:.3e}")
    s = summarize(results, threshold)
    _emit(f"{'PASS' if s['passed'] else 'FAIL'} max_rel_err={s['max_rel_err']:.3e} "
          f"threshold={threshold:.1e} instances={s['instances']}")
    return EXIT_OK if s["passed"] else EXIT_THRESHOLD


# ---------------------------------------------------------------- scaling-sweep


def cmd_scaling_sweep(args) -> int:
    cfg = _load_config(args)
    if args.seeds:
        cfg = cfg.override(**{"experiment.seeds": args.seeds})
    res = ex.scaling_sweep(cfg)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    table = ex.sweep_csv(res["rows"])
    (out / "scaling.csv").write_text(table, encoding="utf-8")
    (out / "runs.csv").write_text(ex.runs_csv(res["runs"]), encoding="utf-8")
    write_json({"config": cfg.provenance(), "rows": res["rows"]}, out / "provenance.json")
    if cfg["output.figures"]:
        from aqvec.plotting import plot_scaling

        plot_scaling(res["rows"], out / "scaling.png")
    _emit(table)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser, train_opts: bool = True) -> None:
    p.add_argument("--config", type=Path, help="TOML run configuration")
    p.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    if train_opts:
        p.add_argument("--seed", type=int, help="training seed (overrides train.seed)")
        p.add_argument("--epochs", type=int, help="overrides train.epochs")
        p.add_argument("--qubits", type=int, nargs="+", help="qubit count(s)")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors, so they exit 1 rather than argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aqvec", description="Analog quantum variational embedding classifier.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-run progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write train/test CSVs and a provenance sidecar")
    p.add_argument("kind", choices=["circles", "spirals", "digits"])
    _common(p, train_opts=False)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--train", type=int, default=500)
    p.add_argument("--test", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--turns", type=float, default=1.0)
    p.add_argument("--labels", type=_int_list, help="digit labels, e.g. 3,5")
    p.add_argument("--train-fraction", type=float, default=0.9)
    p.add_argument("--seed", dest="data_seed", type=int, default=7, help="data seed")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train and write metrics, checkpoint and figures")
    _common(p)
    p.add_argument("--snapshots", action="store_true", help="export overlap matrices along the anneal")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy and confusion matrix of a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, help="dataset CSV (features..., label)")
    p.add_argument("--header", action="store_true", help="skip the first CSV line")
    p.add_argument("--split", choices=["train", "test"], default="test",
                   help="which split of the config dataset to use without --data")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="one predicted label per input row")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--features", help="a single comma-separated feature vector")
    group.add_argument("--data", type=Path, help="CSV of feature rows (a trailing label column is ignored)")
    p.add_argument("--header", action="store_true")
    p.add_argument("--output", type=Path, help="also write labels to this file")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("grad-check", help="adjoint gradients against central finite differences")
    _common(p)
    p.add_argument("--threshold", type=float)
    p.add_argument("--instances", type=int)
    p.add_argument("--losses", nargs="+")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("scaling-sweep", help="multi-seed accuracy versus qubit count")
    _common(p)
    p.add_argument("--seeds", type=int, nargs="+", help="training seeds (overrides experiment.seeds)")
    p.set_defaults(func=cmd_scaling_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DegenerateEmbeddingError, DegenerateGroundStateError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ConfigError, DatasetError, CheckpointError, UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        # dimension mismatches and other precondition failures
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
