"""Experiment configuration: INI files with one section per concern, and presets.

Every key is typed and known; an unknown section or key is an error so that a
misspelt constant never silently falls back to its default.  Times are in
ms, potentials in the same dimensionless units as the neuron constants.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..eqprop_rate import LearningRates, PhaseSchedule
from ..lif import PopulationCode
from ..nonlinearity import ACTIVATIONS, DERIVATIVES, Activation, NeuronConstants


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "rate"  # rate | spiking
    hidden: tuple[int, ...] = (400,)
    neurons_per_dim: int = 1
    bias: bool = True
    bias_value: float = 1.0
    init_scale: float = 0.1
    activation: str = "relu"
    derivative: str = "surrogate"
    constants: NeuronConstants = field(default_factory=NeuronConstants)
    schedule: PhaseSchedule = field(default_factory=PhaseSchedule)
    learning: LearningRates = field(default_factory=lambda: LearningRates(0.1))
    n_train_samples: int = 3000
    eval_every: int = 500
    eval_grid_k: int = 16
    seed: int = 0
    update_mode: str = "batched"  # batched | online
    carry_traces: bool = False
    record_wall_time: bool = False
    output_dir: str = "runs/default"

    def __post_init__(self):
        if self.model not in ("rate", "spiking"):
            raise ConfigError(f"model must be 'rate' or 'spiking', got {self.model!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        if self.derivative not in DERIVATIVES:
            raise ConfigError(f"derivative must be one of {DERIVATIVES}")
        if self.update_mode not in ("batched", "online"):
            raise ConfigError("update_mode must be 'batched' or 'online'")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden layer sizes must be >= 1")
        if self.neurons_per_dim < 1:
            raise ConfigError("neurons_per_dim must be >= 1")
        if self.n_train_samples < 1:
            raise ConfigError("n_train_samples must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.eval_grid_k < 2:
            raise ConfigError("eval_grid_k must be >= 2")
        if not self.init_scale > 0:
            raise ConfigError("init_scale must be > 0")

    @property
    def code(self) -> PopulationCode:
        return PopulationCode(self.neurons_per_dim)

    @property
    def layer_sizes(self) -> list[int]:
        return self.code.layer_sizes(self.hidden)

    def activation_fn(self) -> Activation:
        return Activation(self.activation, self.derivative, self.constants)


# section -> {key: (attribute path, type)}
_LAYOUT = {
    "experiment": {
        "model": ("model", str),
        "seed": ("seed", int),
        "n_train_samples": ("n_train_samples", int),
        "eval_every": ("eval_every", int),
        "eval_grid_k": ("eval_grid_k", int),
        "update_mode": ("update_mode", str),
        "record_wall_time": ("record_wall_time", bool),
    },
    "topology": {
        "hidden": ("hidden", tuple),
        "neurons_per_dim": ("neurons_per_dim", int),
        "bias": ("bias", bool),
        "bias_value": ("bias_value", float),
        "init_scale": ("init_scale", float),
    },
    "activation": {
        "name": ("activation", str),
        "derivative": ("derivative", str),
    },
    "neuron": {f.name: (f"constants.{f.name}", float) for f in fields(NeuronConstants)},
    "schedule": {f.name: (f"schedule.{f.name}", float) for f in fields(PhaseSchedule)},
    "learning": {"eta_base": ("learning.eta_base", float)},
    "spiking": {"carry_traces": ("carry_traces", bool)},
    "output": {"dir": ("output_dir", str)},
}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(raw: str, typ, where: str):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if typ is tuple:
            return tuple(int(v) for v in raw.replace(",", " ").split())
        return typ(raw.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {typ.__name__}") from None


def _get(cfg: ExperimentConfig, path: str):
    obj = cfg
    for part in path.split("."):
        obj = getattr(obj, part)
    return obj


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case-sensitive (R vs r)
    return cp


def to_ini(cfg: ExperimentConfig) -> str:
    cp = _parser()
    for section, keys in _LAYOUT.items():
        cp[section] = {key: _fmt(_get(cfg, path)) for key, (path, _) in keys.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def from_ini(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse INI text on top of ``base`` (defaults when omitted)."""
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    top: dict = {}
    nested: dict[str, dict] = {"constants": {}, "schedule": {}, "learning": {}}
    for section in cp.sections():
        if section not in _LAYOUT:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp[section].items():
            if key not in _LAYOUT[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            path, typ = _LAYOUT[section][key]
            val = _parse(raw, typ, f"[{section}] {key}")
            if "." in path:
                owner, attr = path.split(".")
                nested[owner][attr] = val
            else:
                top[path] = val
    return apply_overrides(base or ExperimentConfig(), top, nested)


def apply_overrides(cfg: ExperimentConfig, top: dict | None = None, nested: dict | None = None) -> ExperimentConfig:
    try:
        kw = dict(top or {})
        for owner, vals in (nested or {}).items():
            if vals:
                kw[owner] = replace(getattr(cfg, owner), **vals)
        return replace(cfg, **kw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return from_ini(Path(path).read_text(), base)


def save(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(to_ini(cfg))


FIG3 = NeuronConstants(tau=15.0, u_rest=20.0, u_reset=0.0, theta=20.0, delta=5.0,
                       tau_s=10.0, tau_r=300.0, u_psp=400.0, R=40.0)
FIG5 = dataclasses.replace(FIG3, tau_s=15.0, tau_r=100.0)


def _fig3(**kw) -> ExperimentConfig:
    base = dict(
        model="rate", hidden=(400,), neurons_per_dim=1, activation="relu", derivative="surrogate",
        constants=FIG3, schedule=PhaseSchedule(t_forward=600.0, t_backward=600.0, beta=1.0, dt=1.0),
        learning=LearningRates(0.1), n_train_samples=3000, eval_every=500,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def _fig5(**kw) -> ExperimentConfig:
    base = dict(
        model="spiking", hidden=(300,), neurons_per_dim=20, constants=FIG5,
        schedule=PhaseSchedule(t_forward=1000.0, t_backward=1000.0, beta=1.0, dt=1.0),
        learning=LearningRates(5e-5), update_mode="online", n_train_samples=4000, eval_every=500,
    )
    base.update(kw)
    return ExperimentConfig(**base)


# 10 per dimension and 100 hidden; fits the 10-minute budget on one core
_REDUCED_BUDGET = dict(n_train_samples=8000, eval_every=1000)

PRESETS = {
    "fig3-relu": lambda: _fig3(),
    "fig3-liffi": lambda: _fig3(activation="liffi"),
    "fig3-nohidden": lambda: _fig3(hidden=()),
    "fig5-spiking": lambda: _fig5(),
    "fig5-spiking-nohidden": lambda: _fig5(hidden=()),
    "fig5-spiking-reduced": lambda: _fig5(hidden=(100,), neurons_per_dim=10, **_REDUCED_BUDGET),
    "fig5-spiking-reduced-nohidden": lambda: _fig5(hidden=(), neurons_per_dim=10, **_REDUCED_BUDGET),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
