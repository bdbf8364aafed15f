"""Configuration dataclasses for every tunable constant of the model.

All configs round-trip through plain dicts (and therefore JSON). Unknown keys
are rejected so that typos in a config file fail loudly.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .engine import NeuronParams
from .plasticity import InhibParams, TripletParams


class ConfigError(ValueError):
    pass


@dataclass
class ScaleConfig:
    n_exc: int = 160
    n_inh: int = 40
    n_input: int = 160

    @classmethod
    def full(cls) -> "ScaleConfig":
        """Full-size populations: 1600 exc + 400 inh, 1600 inputs."""
        return cls(1600, 400, 1600)


@dataclass
class NeuronConfig:
    exc: NeuronParams = field(default_factory=NeuronParams.excitatory)
    inh: NeuronParams = field(default_factory=NeuronParams.inhibitory)


CONNECTION_KINDS = ("input_exc", "input_inh", "exc_exc", "exc_inh", "inh_exc",
                    "inh_inh", "periph_hidden", "hidden_periph")


def default_overrides() -> dict:
    """Calibrated departures from the uniform p = 0.1, U(0, 0.3) wiring."""
    return {
        "inh_exc": {"init_weight_max": 1.0},
        "exc_exc": {"init_weight_max": 0.1},
        "periph_hidden": {"probability": 0.2, "init_weight_max": 0.05},
        "hidden_periph": {"init_weight_max": 0.1},
    }


@dataclass
class ConnectivityConfig:
    probability: float = 0.1
    init_weight_max: float = 0.3
    w_max: float = 1.0
    # per connection kind: {"probability": p, "init_weight_max": w}
    overrides: dict = field(default_factory=default_overrides)

    def __post_init__(self):
        for kind, ov in self.overrides.items():
            if kind not in CONNECTION_KINDS:
                raise ConfigError(f"unknown connection kind {kind!r}")
            bad = set(ov) - {"probability", "init_weight_max"}
            if bad:
                raise ConfigError(f"unknown override keys {sorted(bad)} for {kind}")

    def for_kind(self, kind: str) -> tuple[float, float]:
        ov = self.overrides.get(kind, {})
        return (float(ov.get("probability", self.probability)),
                float(ov.get("init_weight_max", self.init_weight_max)))


@dataclass
class PlasticityConfig:
    eta_pre: float = 1.2e-2
    eta_post: float = 1e-2
    eta_inh: float = 1e-2
    triplet: TripletParams = field(default_factory=TripletParams)
    inhib: InhibParams = field(default_factory=InhibParams)
    normalize_wake: bool = True
    sleep_inhibitory_plasticity: bool = True


@dataclass
class NetworkConfig:
    dt: float = 0.5
    scale: ScaleConfig = field(default_factory=ScaleConfig)
    neurons: NeuronConfig = field(default_factory=NeuronConfig)
    connectivity: ConnectivityConfig = field(default_factory=ConnectivityConfig)
    plasticity: PlasticityConfig = field(default_factory=PlasticityConfig)


@dataclass
class InputConfig:
    peak_rate: float = 60.0  # Hz
    sigma: float = 1.0 / 16.0  # fraction of the ring


@dataclass
class WakeSleepConfig:
    r_sleep: int = 50
    t_sleep: float = 0.0  # s per peripheral population
    present_time: float = 0.25  # s
    rate_multiplier: float = 1.0
    wsa_enabled: bool = False
    normalize_period: float = 0.25  # s, during sleep
    tracker_tau: float = 100.0  # examples
    reset_between_examples: bool = True

    def __post_init__(self):
        if self.r_sleep < 1:
            raise ConfigError("r_sleep must be >= 1")
        if self.t_sleep < 0:
            raise ConfigError("t_sleep must be >= 0")
        if self.wsa_enabled != (self.t_sleep > 0):
            raise ConfigError("wsa_enabled must be true exactly when t_sleep > 0")
        if not self.rate_multiplier > 0:
            raise ConfigError("rate_multiplier must be positive")

    @classmethod
    def with_sleep(cls, t_sleep: float, **kw) -> "WakeSleepConfig":
        return cls(t_sleep=t_sleep, wsa_enabled=t_sleep > 0, **kw)


@dataclass
class EvalConfig:
    n_grid: int = 32
    lattice_step: int = 7  # rank-1 lattice generator for the (a, b) grid
    failure_error: float = 0.25  # error charged for an undecodable response
    band: float = 0.1
    n_probes: int = 6


@dataclass
class ExperimentConfig:
    name: str = "run"
    seed: int = 0
    n_examples: int = 3000
    checkpoint_every: int = 250
    network: NetworkConfig = field(default_factory=NetworkConfig)
    inputs: InputConfig = field(default_factory=InputConfig)
    protocol: WakeSleepConfig = field(default_factory=WakeSleepConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    init_snapshot: str | None = None
    out_dir: str | None = None
    save_heatmaps: bool = True
    snapshot_every_checkpoint: bool = False

    def to_dict(self) -> dict:
        return to_dict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return from_dict(cls, d)

    def digest(self) -> str:
        return config_digest(self.network)


def to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {k: to_dict(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    return obj


def from_dict(cls, d):
    """Build dataclass ``cls`` from a (possibly partial) nested dict."""
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}, got {type(d).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kw = {}
    for k, v in d.items():
        tp = hints[k]
        if dataclasses.is_dataclass(tp):
            kw[k] = from_dict(tp, v)
        else:
            kw[k] = v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {cls.__name__}: {e}") from e


def merge(base: dict, upd: dict) -> dict:
    out = dict(base)
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def save_config(cfg: ExperimentConfig, path: str | Path):
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)


def config_digest(obj) -> str:
    blob = json.dumps(to_dict(obj), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
