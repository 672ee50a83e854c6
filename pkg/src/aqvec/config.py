"""Run configuration: a flat TOML document of dotted ``section.key`` settings.

Either form works::

    anneal.n_qubits = 5          # dotted keys at top level
    [train]
    epochs = 120                 # or regular tables

Unknown keys are rejected so a typo cannot silently change an experiment.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from aqvec.classifier import TrainConfig
from aqvec.data import NormalizationMode
from aqvec.evolution import EvolutionGrid
from aqvec.hamiltonian import COEFF_SOURCES, STEP_SAMPLINGS, AnnealSpec
from aqvec.losses import LossKind


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, object] = {
    "anneal.n_qubits": 3,
    "anneal.n_sines": 3,
    "anneal.steps": 10,
    "anneal.t_max": 2.0,
    "anneal.coeff_source": "fields-fixed",
    "anneal.step_sampling": "midpoint",
    "anneal.fixed_hx": None,
    "anneal.fixed_hz": None,
    "anneal.fixed_j": None,
    "train.epochs": 300,
    "train.learning_rate": 0.05,
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.eps": 1e-8,
    "train.loss_kind": "neg_product",
    "train.w_init_scale": 0.1,
    "train.seed": 0,
    "train.full_batch": True,
    "train.batch_size": 64,
    "train.snapshot_every": 0,
    "data.source": "circles",
    "data.seed": 7,
    "data.classes": 2,
    "data.n_train": 500,
    "data.n_test": 100,
    "data.radii": None,
    "data.noise_std": 0.05,
    "data.turns": 1.0,
    "data.labels": None,
    "data.train_fraction": 0.9,
    "data.train_path": None,
    "data.test_path": None,
    "data.path": None,
    "data.header": False,
    "data.normalization": None,
    "data.scale": 16.0,
    "experiment.seeds": None,
    "experiment.qubits": None,
    "output.dir": "runs/default",
    "output.record_wall_ms": False,
    "output.figures": True,
    "output.snapshot_samples": 0,
    "gradcheck.instances": 24,
    "gradcheck.threshold": 1e-4,
    "gradcheck.fd_step": 1e-5,
    "gradcheck.max_qubits": 3,
    "gradcheck.max_dim": 4,
    "gradcheck.losses": None,
    "gradcheck.seed": 0,
}

DATA_SOURCES = ("circles", "spirals", "digits", "csv")


def flatten(tree: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, name + "."))
        else:
            out[name] = value
    return out


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        value = self.values.get(key)
        return default if value is None else value

    @classmethod
    def from_mapping(cls, mapping: dict | None = None) -> "RunConfig":
        flat = flatten(mapping or {})
        unknown = sorted(set(flat) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        values = copy.deepcopy(DEFAULTS)
        values.update(flat)
        cfg = cls(values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, "rb") as f:
                tree = tomllib.load(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_mapping(tree)

    def override(self, **updates) -> "RunConfig":
        values = copy.deepcopy(self.values)
        for key, value in updates.items():
            if value is None:
                continue
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key: {key}")
            values[key] = value
        cfg = RunConfig(values)
        cfg.validate()
        return cfg

    # --- typed views --------------------------------------------------

    def anneal_spec(self, n_qubits: int | None = None) -> AnnealSpec:
        v = self.values
        try:
            return AnnealSpec(
                n_qubits=int(n_qubits if n_qubits is not None else v["anneal.n_qubits"]),
                n_sines=int(v["anneal.n_sines"]),
                steps=int(v["anneal.steps"]),
                t_max=float(v["anneal.t_max"]),
                fixed_hx=v["anneal.fixed_hx"],
                fixed_hz=v["anneal.fixed_hz"],
                fixed_j=v["anneal.fixed_j"],
                coeff_source=v["anneal.coeff_source"],
                step_sampling=v["anneal.step_sampling"],
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid anneal settings: {exc}") from exc

    def grid(self, n_qubits: int | None = None) -> EvolutionGrid:
        return EvolutionGrid.from_spec(self.anneal_spec(n_qubits))

    def train_config(self, seed: int | None = None) -> TrainConfig:
        v = self.values
        try:
            return TrainConfig(
                epochs=int(v["train.epochs"]),
                learning_rate=float(v["train.learning_rate"]),
                beta1=float(v["train.beta1"]),
                beta2=float(v["train.beta2"]),
                eps=float(v["train.eps"]),
                loss_kind=v["train.loss_kind"],
                w_init_scale=float(v["train.w_init_scale"]),
                rng_seed=int(seed if seed is not None else v["train.seed"]),
                full_batch=bool(v["train.full_batch"]),
                batch_size=int(v["train.batch_size"]),
                snapshot_every=int(v["train.snapshot_every"]),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid train settings: {exc}") from exc

    def seeds(self) -> list[int]:
        seeds = self.values["experiment.seeds"]
        return [int(s) for s in seeds] if seeds is not None else [int(self.values["train.seed"])]

    def qubits(self) -> list[int]:
        qubits = self.values["experiment.qubits"]
        return [int(q) for q in qubits] if qubits is not None else [int(self.values["anneal.n_qubits"])]

    def normalization(self) -> NormalizationMode:
        mode = self.values["data.normalization"]
        if mode is None:
            mode = "scale_to_unit" if self.values["data.source"] == "digits" else "none"
        return NormalizationMode(mode)

    @property
    def out_dir(self) -> Path:
        return Path(self.values["output.dir"])

    def validate(self) -> None:
        v = self.values
        if v["data.source"] not in DATA_SOURCES:
            raise ConfigError(f"data.source must be one of {DATA_SOURCES}, got {v['data.source']!r}")
        if v["anneal.coeff_source"] not in COEFF_SOURCES:
            raise ConfigError(f"anneal.coeff_source must be one of {COEFF_SOURCES}")
        if v["anneal.step_sampling"] not in STEP_SAMPLINGS:
            raise ConfigError(f"anneal.step_sampling must be one of {STEP_SAMPLINGS}")
        try:
            LossKind.parse(v["train.loss_kind"])
            self.normalization()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if v["data.source"] == "csv" and not v["data.train_path"]:
            raise ConfigError("data.source = 'csv' needs data.train_path")
        for q in self.qubits():
            self.anneal_spec(q)
        for s in self.seeds():
            self.train_config(s)
        if v["gradcheck.losses"] is not None:
            for kind in v["gradcheck.losses"]:
                try:
                    LossKind.parse(kind)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from exc
        if not (0 < int(v["gradcheck.max_qubits"]) <= 3 and 0 < int(v["gradcheck.max_dim"]) <= 4):
            raise ConfigError("grad-check caps must satisfy max_qubits <= 3 and max_dim <= 4")

    def to_dict(self) -> dict:
        return dict(sorted(self.values.items()))

    def provenance(self) -> dict:
        """Settings that determine results; the output location is left out so reruns elsewhere match."""
        return {k: v for k, v in self.to_dict().items() if k != "output.dir"}
