"""Experiment configuration: INI files, presets, flag overrides and run manifests.

A config file has up to four sections; every key is optional and unknown
keys are rejected::

    [model]
    model = two-qubit
    gamma = 1.0
    alpha_re = 1.0
    phase_k = 1.5707963267948966

    [run]
    dt = 0.01
    t_end = 20000
    trajectories = 130
    seed = 2

    [stats]
    channel = L

    [output]
    out = runs/fig4
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .errors import ConfigurationError
from .model import OneQubitParams, TwoQubitParams, build_one_qubit, build_two_qubit, ModelOperators
from .trajectory import SCHEMES, TrajectoryConfig

MODELS = ("one-qubit", "two-qubit")
CHANNEL_CHOICES = ("R", "L", "both")
OUTPUT_KINDS = ("wtd", "awtd", "g2")
SECTIONS = {
    "model": ("model", "gamma", "gamma2", "alpha_re", "alpha_im", "delta", "delta2",
              "phase_k", "phase_eg", "hamiltonian"),
    "run": ("dt", "t_end", "trajectories", "seed", "burn_in", "scheme", "workers"),
    "stats": ("channel", "bins", "tau_max", "awtd_bins", "awtd_tau_max", "g2_bins",
              "g2_tau_max", "outputs"),
    "output": ("out", "plot"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved parameters of one experiment.

    ``phase_eg=None`` means identical resonant-frame phases for both qubits,
    ``phase_eg = phase_k``.  ``gamma2=None`` copies ``gamma``.  WTD and AWTD
    ranges (``tau_max``, ``awtd_tau_max``) are in units of the mean waiting
    time; ``g2_tau_max`` is absolute.
    """

    model: str = "one-qubit"
    gamma: float = 1.0
    gamma2: float | None = None
    alpha_re: float = 1.0
    alpha_im: float = 0.0
    delta: float = 0.0
    delta2: float = 0.0
    phase_k: float = math.pi / 2
    phase_eg: float | None = None
    hamiltonian: str = "cascaded"
    dt: float = 0.01
    t_end: float = 20000.0
    trajectories: int = 100
    seed: int = 0
    burn_in: float = 10.0
    scheme: str = "exp"
    workers: int = 1
    channel: str = "both"
    bins: int = 100
    tau_max: float = 4.0
    awtd_bins: int = 60
    awtd_tau_max: float = 3.0
    g2_bins: int = 50
    g2_tau_max: float = 5.0
    outputs: tuple[str, ...] = ("wtd", "g2")
    out: str = "run"
    plot: bool = False
    preset: str | None = None

    def __post_init__(self):
        outputs = self.outputs
        if isinstance(outputs, str):
            outputs = tuple(s.strip() for s in outputs.split(",") if s.strip())
        object.__setattr__(self, "outputs", tuple(outputs))
        self.validate()

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigurationError(f"model must be one of {MODELS}")
        if self.channel not in CHANNEL_CHOICES:
            raise ConfigurationError(f"channel must be one of {CHANNEL_CHOICES}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}")
        if self.hamiltonian not in ("cascaded", "symmetric-exchange"):
            raise ConfigurationError("hamiltonian must be 'cascaded' or 'symmetric-exchange'")
        for kind in self.outputs:
            if kind not in OUTPUT_KINDS:
                raise ConfigurationError(f"unknown output {kind!r}; choose from {OUTPUT_KINDS}")
        for name in ("trajectories", "workers", "bins", "awtd_bins", "g2_bins"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1")
        for name in ("dt", "t_end", "tau_max", "awtd_tau_max", "g2_tau_max"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigurationError(f"{name} must be positive")
        if not (0 <= self.burn_in < self.t_end):
            raise ConfigurationError("burn_in must lie in [0, t_end)")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")

    # Model and engine objects.

    @property
    def alpha(self) -> complex:
        return complex(self.alpha_re, self.alpha_im)

    def params(self) -> OneQubitParams | TwoQubitParams:
        if self.model == "one-qubit":
            return OneQubitParams(self.gamma, self.alpha, self.delta)
        phase_eg = self.phase_k if self.phase_eg is None else self.phase_eg
        return TwoQubitParams(
            gamma1=self.gamma,
            gamma2=self.gamma if self.gamma2 is None else self.gamma2,
            alpha=self.alpha,
            delta1=self.delta,
            delta2=self.delta2,
            phase_k=self.phase_k,
            phase_eg1=phase_eg,
            phase_eg2=phase_eg,
        )

    def operators(self) -> ModelOperators:
        p = self.params()
        if isinstance(p, OneQubitParams):
            return build_one_qubit(p)
        return build_two_qubit(p, self.hamiltonian)

    def trajectory_config(self) -> TrajectoryConfig:
        return TrajectoryConfig(dt=self.dt, t_end=self.t_end, scheme=self.scheme,
                                master_seed=self.seed)

    @property
    def channels(self) -> tuple[str, ...]:
        return ("R", "L") if self.channel == "both" else (self.channel,)

    # Serialization.

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["outputs"] = list(self.outputs)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "outputs" in d and isinstance(d["outputs"], list):
            d["outputs"] = tuple(d["outputs"])
        return cls(**d)

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(name: str, raw: str) -> Any:
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    if "None" in kind and raw.lower() in ("", "none"):
        return None
    try:
        if kind.startswith("float"):
            return float(raw)
        if kind.startswith("int"):
            return int(raw, 0)
        if kind.startswith("bool"):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from None
    return raw


def read_ini(path: str | Path) -> dict[str, Any]:
    """Keys of an INI config file, type-coerced, unknown sections and keys rejected."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as f:
            parser.read_file(f)
    except (OSError, configparser.Error) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    values: dict[str, Any] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigurationError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigurationError(f"unknown key {key!r} in [{section}]")
            values[key] = _coerce(key, raw)
    return values


def write_ini(cfg: ExperimentConfig, path: str | Path) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    d = cfg.to_dict()
    for section, keys in SECTIONS.items():
        parser[section] = {}
        for key in keys:
            v = d[key]
            if isinstance(v, list):
                v = ",".join(v)
            parser[section][key] = "none" if v is None else repr(v) if isinstance(v, float) else str(v)
    with open(path, "w", encoding="utf-8") as f:
        parser.write(f)


# Presets pin the stated parameters (α=1, Δ=0, and kΔt=π/2 for two qubits);
# Γ, dt, run length and binning are this package's defaults.
PRESETS: dict[str, dict[str, Any]] = {
    "fig2": dict(model="one-qubit", channel="R", g2_tau_max=10.0, g2_bins=100, outputs=("g2",)),
    "fig3": dict(model="one-qubit", channel="both", t_end=20000.0, trajectories=100, seed=3,
                 outputs=("wtd", "g2")),
    "fig4": dict(model="two-qubit", channel="L", phase_k=math.pi / 2, t_end=20000.0,
                 trajectories=130, seed=4, outputs=("wtd", "awtd", "g2"), g2_tau_max=10.0,
                 g2_bins=100),
    "fig5": dict(model="one-qubit", channel="both", t_end=20000.0, trajectories=100, seed=5,
                 outputs=("g2",)),
}


def resolve(preset: str | None = None, config_path: str | Path | None = None,
            overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Defaults, then preset, then config file, then flags (later wins)."""
    values: dict[str, Any] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        values.update(PRESETS[preset])
        values["preset"] = preset
    if config_path is not None:
        values.update(read_ini(config_path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if "out" not in values and preset is not None:
        values["out"] = f"runs/{preset}"
    return ExperimentConfig.from_dict(values)


# Manifests.

MANIFEST_NAME = "manifest.json"


def write_manifest(path: str | Path, manifest: dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def read_manifest(path: str | Path) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read manifest {path}: {exc}") from None
