"""Training and testing procedures: wake examples, sleep phases, inference."""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import InputConfig, WakeSleepConfig
from .engine import Hook, run
from .plasticity import set_excitatory_sign
from .ring import circular_error, preferred_positions
from .topology import PERIPHERAL, ModularNetwork

__all__ = [
    "RelationExample", "ActivityTracker", "ProtocolError", "DecodeError",
    "ExperimentRecord", "WakeSleepConfig", "sample_example", "gaussian_profile",
    "present_wake_example", "make_sleep_rates", "run_sleep_phase", "train",
    "infer", "decode_population_vector", "circular_error", "evaluation_grid",
    "evaluate",
]


class ProtocolError(RuntimeError):
    pass


class DecodeError(ValueError):
    """Spike counts carry no decodable direction."""


@dataclass(frozen=True)
class RelationExample:
    a: float
    b: float
    c: float

    def __post_init__(self):
        for x in (self.a, self.b, self.c):
            if not 0.0 <= x < 1.0:
                raise ValueError("relation values live in [0, 1)")
        if circular_error((self.a + self.b) % 1.0, self.c) > 1e-12:
            raise ValueError("relation requires c = (a + b) mod 1")

    @classmethod
    def from_ab(cls, a: float, b: float) -> "RelationExample":
        return cls(a, b, (a + b) % 1.0)

    def value(self, pop: str) -> float:
        return {"A": self.a, "B": self.b, "C": self.c}[pop]


def sample_example(rng: np.random.Generator) -> RelationExample:
    a, b = rng.random(2)
    return RelationExample.from_ab(float(a), float(b))


def gaussian_profile(x: float, n: int, peak: float = 60.0,
                     sigma: float = 1.0 / 16.0) -> np.ndarray:
    """Rates of ``n`` generators on a ring, peaked at position ``x``."""
    if not sigma > 0 or n < 2:
        raise ValueError("need sigma > 0 and n >= 2")
    d = circular_error(np.arange(n) / n, x % 1.0)
    return peak * np.exp(-d ** 2 / (2.0 * sigma ** 2))


def decode_population_vector(counts, positions=None) -> float:
    """Circular mean of neuron positions weighted by spike counts.

    Neuron ``i`` sits at ``positions[i]``, by default ``i / n``.
    """
    counts = np.asarray(counts, dtype=float)
    n = len(counts)
    total = counts.sum()
    if total <= 0:
        raise DecodeError("no spikes to decode")
    pos = np.arange(n) / n if positions is None else np.asarray(positions, dtype=float)
    if pos.shape != counts.shape:
        raise ValueError("positions must match counts")
    ok = np.isfinite(pos)
    counts = np.where(ok, counts, 0.0)
    if counts.sum() <= 0:
        raise DecodeError("no spikes from neurons with a defined position")
    ang = 2.0 * np.pi * np.where(ok, pos, 0.0)
    s = float(counts @ np.sin(ang))
    c = float(counts @ np.cos(ang))
    if math.hypot(s, c) <= 1e-9 * total:
        raise DecodeError("zero resultant length")
    return (math.atan2(s, c) / (2.0 * np.pi)) % 1.0


@dataclass
class ActivityTracker:
    """Running mean of the total excitatory rate (Hz) of each peripheral population."""

    tau: float = 100.0
    totals: dict = field(default_factory=dict)

    def update(self, pop: str, total_rate: float):
        prev = self.totals.get(pop)
        if prev is None:
            self.totals[pop] = float(total_rate)
        else:
            a = 1.0 - math.exp(-1.0 / self.tau)
            self.totals[pop] = prev + a * (float(total_rate) - prev)

    def total(self, pop: str) -> float:
        if pop not in self.totals:
            raise ProtocolError(f"no wake activity recorded for population {pop!r}")
        return self.totals[pop]


def tracker_of(net: ModularNetwork, cfg: WakeSleepConfig | None = None) -> ActivityTracker:
    if net.tracker is None:
        net.tracker = ActivityTracker(cfg.tracker_tau if cfg else 100.0)
    return net.tracker


def present_wake_example(net: ModularNetwork, ex: RelationExample, cfg: WakeSleepConfig,
                         inputs: InputConfig = InputConfig()):
    """Drive every peripheral population with its value for one presentation window."""
    if net.rates.sign != 1:
        raise ProtocolError("wake examples require the Hebbian sign")
    tracker = tracker_of(net, cfg)
    if cfg.reset_between_examples:
        net.reset_neurons()
    for pop in net.peripheral:
        grp = net.input_group(pop)
        grp.set_rates(gaussian_profile(ex.value(pop), grp.size, inputs.peak_rate, inputs.sigma))
    res = run(net, cfg.present_time * 1e3)
    for pop in net.peripheral:
        total = res.counts[net.populations[pop].exc].sum() / cfg.present_time
        tracker.update(pop, total)
    # no spikes means no plastic change, so there is nothing to compensate
    if net.config.plasticity.normalize_wake and res.total() > 0:
        net.normalize()
    net.zero_inputs()
    return res


def make_sleep_rates(n: int, tracker: ActivityTracker, pop: str,
                     rng: np.random.Generator) -> np.ndarray:
    """Uniform random rates rescaled to the population's tracked wake activity."""
    total = tracker.total(pop)
    u = rng.random(n)
    s = u.sum()
    if s <= 0 or total <= 0:
        return np.zeros(n)
    return u * (total / s)


def run_sleep_phase(net: ModularNetwork, cfg: WakeSleepConfig, rng: np.random.Generator):
    """One sleep phase: anti-Hebbian dreaming, one population at a time."""
    if not cfg.wsa_enabled:
        raise ProtocolError("sleep phase requested with the wake-sleep algorithm disabled")
    if cfg.t_sleep <= 0:
        return
    tracker = tracker_of(net, cfg)
    keep_inh = net.config.plasticity.sleep_inhibitory_plasticity
    set_excitatory_sign(net, -1)
    net.rates.inhibitory_enabled = keep_inh
    hook = Hook(cfg.normalize_period * 1e3, lambda n: n.normalize())
    try:
        for idx in rng.permutation(len(net.peripheral)):
            pop = net.peripheral[idx]
            net.zero_inputs()
            if cfg.reset_between_examples:
                net.reset_neurons()
            grp = net.input_group(pop)
            grp.set_rates(make_sleep_rates(grp.size, tracker, pop, rng))
            run(net, cfg.t_sleep * 1e3, hooks=[hook])
    finally:
        set_excitatory_sign(net, 1)
        net.rates.inhibitory_enabled = True
        net.zero_inputs()


@dataclass
class ExperimentRecord:
    checkpoints: list = field(default_factory=list)  # dicts, one per checkpoint
    examples_presented: int = 0
    sleep_phases: int = 0
    snapshots: list = field(default_factory=list)

    def series(self, key: str) -> np.ndarray:
        return np.array([c[key] for c in self.checkpoints], dtype=float)

    @property
    def example_counts(self) -> np.ndarray:
        return np.array([c["examples"] for c in self.checkpoints], dtype=int)


def train(net: ModularNetwork, n_examples: int, cfg: WakeSleepConfig,
          rng: np.random.Generator, inputs: InputConfig = InputConfig(),
          checkpoint: Callable | None = None, checkpoint_every: int = 250,
          record: ExperimentRecord | None = None, start: int = 0) -> ExperimentRecord:
    """Alternate wake phases of ``r_sleep`` examples with sleep phases.

    ``checkpoint(net, examples_so_far)`` returns a dict that is appended to the
    record; it runs before training and whenever the count is a multiple of
    ``checkpoint_every`` (after any sleep phase due at that count).
    """
    rec = record if record is not None else ExperimentRecord()
    net.rates.multiplier = cfg.rate_multiplier

    def _ck(k):
        if checkpoint is not None:
            row = dict(checkpoint(net, k))
            row["examples"] = k
            rec.checkpoints.append(row)

    if record is None:
        _ck(start)
    for i in range(1, n_examples + 1):
        present_wake_example(net, sample_example(rng), cfg, inputs)
        rec.examples_presented += 1
        k = start + i
        if cfg.wsa_enabled and k % cfg.r_sleep == 0:
            run_sleep_phase(net, cfg, rng)
            rec.sleep_phases += 1
        if checkpoint_every and k % checkpoint_every == 0:
            _ck(k)
    return rec


@contextmanager
def frozen(net: ModularNetwork, rng: np.random.Generator | None = None):
    """Run with plasticity off and restore every bit of dynamic state afterwards."""
    saved = net.save_state()
    saved_rng = net.rng
    enabled = net.rates.enabled
    if rng is not None:
        net.rng = rng
    net.rates.enabled = False
    try:
        yield net
    finally:
        net.rates.enabled = enabled
        net.rng = saved_rng
        net.restore_state(saved)


def infer_counts(net: ModularNetwork, known: dict, target: str, cfg: WakeSleepConfig,
                 inputs: InputConfig = InputConfig(),
                 rng: np.random.Generator | None = None) -> np.ndarray:
    if len(known) != 2 or target in known:
        raise ValueError("need two known populations distinct from the target")
    with frozen(net, rng):
        net.reset_neurons()
        net.zero_inputs()
        for pop, x in known.items():
            grp = net.input_group(pop)
            grp.set_rates(gaussian_profile(x, grp.size, inputs.peak_rate, inputs.sigma))
        res = run(net, cfg.present_time * 1e3)
        return res.counts[net.populations[target].exc]


def neuron_positions(net: ModularNetwork, pop: str) -> np.ndarray:
    """Preferred stimulus of each excitatory neuron, read from its input weights."""
    m = net.input_matrix(pop)
    return preferred_positions(m.pre, m.post, m.w, m.n_pre, m.n_post)


def infer(net: ModularNetwork, known: dict, target: str, cfg: WakeSleepConfig,
          inputs: InputConfig = InputConfig(), rng: np.random.Generator | None = None) -> float:
    """Decoded value of ``target`` given two clamped populations; NaN on failure.

    Each target neuron votes at its preferred stimulus, so the decoder does not
    depend on how neurons happen to be indexed.
    """
    counts = infer_counts(net, known, target, cfg, inputs, rng)
    try:
        return decode_population_vector(counts, neuron_positions(net, target))
    except DecodeError:
        return math.nan


def evaluation_grid(n: int = 32, step: int = 7) -> list[tuple[RelationExample, str]]:
    """Rank-1 lattice of (a, b) pairs over the torus, held-out population rotating."""
    out = []
    for k in range(n):
        a = (k + 0.5) / n
        b = ((step * k) % n + 0.5) / n
        out.append((RelationExample.from_ab(a, b), PERIPHERAL[k % 3]))
    return out


def evaluate(net: ModularNetwork, cfg: WakeSleepConfig, inputs: InputConfig = InputConfig(),
             rng: np.random.Generator | None = None, grid=None, decoder=None,
             failure_error: float = 0.25) -> dict:
    """Mean circular inference error over ``grid`` (default: 32-point lattice)."""
    grid = evaluation_grid() if grid is None else grid
    rng = np.random.default_rng(0) if rng is None else rng
    errors, failures = [], 0
    for ex, target in grid:
        known = {p: ex.value(p) for p in PERIPHERAL if p != target}
        counts = infer_counts(net, known, target, cfg, inputs, rng)
        try:
            pos = neuron_positions(net, target) if decoder is None else decoder(net, target)
            value = decode_population_vector(counts, pos)
        except DecodeError:
            value = math.nan
        if math.isnan(value):
            failures += 1
            errors.append(failure_error)
        else:
            errors.append(circular_error(value, ex.value(target)))
    return {"error": float(np.mean(errors)), "failures": failures, "errors": errors}
