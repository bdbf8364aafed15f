"""Clock-driven LIF simulation core.

Units: time in ms, potentials in mV, rates in Hz. Synaptic drive is in weight
units and converted to mV by the per-class gains ``j_exc`` / ``j_inh``.

Order of operations inside one step at time ``t``:

1. threshold check on the current membrane value (non-refractory neurons
   with ``v >= v_thresh`` spike, are reset and become refractory),
2. exponential-Euler integration of ``v`` toward ``v_rest + j_exc*g_exc -
   j_inh*g_inh``, refractory neurons clamped at ``v_reset``, then drive decay,
3. Poisson input spikes,
4. delivery of every spike emitted this step (drive increments take effect on
   the next step) with presynaptic plasticity, then postsynaptic plasticity
   for every LIF spike.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Callable, Iterable, NamedTuple

import numpy as np
from numba import njit

from .plasticity import (LearningRates, Rule, SynapseMatrix, inhib_post_kernel,
                         inhib_pre_kernel, normalize_kernel, on_pre,
                         triplet_post_kernel, triplet_pre_kernel)


class ConfigurationError(ValueError):
    """Parameters that cannot be simulated as requested."""


class SimulationFault(FloatingPointError):
    """The membrane potential became non-finite (unstable parameters)."""


@dataclass(frozen=True)
class NeuronParams:
    tau_m: float = 20.0
    v_rest: float = -65.0
    v_reset: float = -65.0
    v_thresh: float = -52.0
    t_refrac: float = 5.0
    tau_syn_exc: float = 5.0
    tau_syn_inh: float = 10.0
    j_exc: float = 40.0  # mV per unit excitatory drive
    j_inh: float = 40.0  # mV per unit inhibitory drive

    def __post_init__(self):
        if not (self.v_reset <= self.v_rest < self.v_thresh):
            raise ConfigurationError("need v_reset <= v_rest < v_thresh")
        for name in ("tau_m", "t_refrac", "tau_syn_exc", "tau_syn_inh"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be strictly positive")

    # calibrated gains for the desk-scale network (160 exc / 40 inh per population)
    @classmethod
    def excitatory(cls, **kw) -> "NeuronParams":
        kw.setdefault("j_exc", 80.0)
        kw.setdefault("j_inh", 700.0)
        return cls(**kw)

    @classmethod
    def inhibitory(cls, **kw) -> "NeuronParams":
        kw.setdefault("tau_m", 10.0)
        kw.setdefault("t_refrac", 2.0)
        kw.setdefault("j_exc", 80.0)
        kw.setdefault("j_inh", 100.0)
        return cls(**kw)


@dataclass
class LifState:
    v: np.ndarray
    g_exc: np.ndarray
    g_inh: np.ndarray
    refrac_until: np.ndarray
    last_spike: np.ndarray

    @classmethod
    def at_rest(cls, n: int, params: NeuronParams) -> "LifState":
        return cls(v=np.full(n, params.v_rest), g_exc=np.zeros(n), g_inh=np.zeros(n),
                   refrac_until=np.full(n, -np.inf), last_spike=np.full(n, -np.inf))

    @property
    def size(self) -> int:
        return len(self.v)

    def reset(self, params: NeuronParams):
        """Back to rest in place: no drive, no refractoriness."""
        self.v[:] = params.v_rest
        self.g_exc[:] = 0.0
        self.g_inh[:] = 0.0
        self.refrac_until[:] = -np.inf

    def arrays(self):
        return [getattr(self, f.name) for f in fields(self)]


@dataclass
class PoissonGroup:
    rates: np.ndarray  # Hz

    @classmethod
    def silent(cls, n: int) -> "PoissonGroup":
        return cls(np.zeros(n))

    @property
    def size(self) -> int:
        return len(self.rates)

    def set_rates(self, rates):
        rates = np.asarray(rates, dtype=float)
        if rates.shape != self.rates.shape:
            raise ValueError(f"expected {self.rates.shape} rates, got {rates.shape}")
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise ValueError("rates must be finite and non-negative")
        self.rates[:] = rates

    def zero(self):
        self.rates[:] = 0.0


class SpikeEvent(NamedTuple):
    group_id: str
    neuron_index: int
    time: float


class SimClock:
    """Integer step counter; ``t`` is always ``step_count * dt``."""

    def __init__(self, dt: float = 0.5, step_count: int = 0):
        if not dt > 0:
            raise ConfigurationError("dt must be positive")
        self.dt = float(dt)
        self.step_count = int(step_count)

    @property
    def t(self) -> float:
        return self.step_count * self.dt

    def advance(self, n_steps: int):
        self.step_count += int(n_steps)

    def steps_for(self, duration: float) -> int:
        n = int(round(duration / self.dt))
        if n < 0 or abs(n * self.dt - duration) > 1e-9 * max(1.0, abs(duration)):
            raise ConfigurationError(f"{duration} ms is not a multiple of dt={self.dt} ms")
        return n


# --------------------------------------------------------------------------
# single-group operations


@njit(cache=True)
def _lif_kernel(v, ge, gi, refrac_until, last_spike, decay_m, v_rest, v_reset,
                v_thresh, t_ref, decay_se, decay_si, j_exc, j_inh, t, out):
    ns = 0
    n = v.shape[0]
    for i in range(n):
        if t >= refrac_until[i] and v[i] >= v_thresh[i]:
            v[i] = v_reset[i]
            refrac_until[i] = t + t_ref[i]
            last_spike[i] = t
            out[ns] = i
            ns += 1
    for i in range(n):
        if t < refrac_until[i]:
            v[i] = v_reset[i]
        else:
            vinf = v_rest[i] + j_exc[i] * ge[i] - j_inh[i] * gi[i]
            v[i] = vinf + (v[i] - vinf) * decay_m[i]
            if not math.isfinite(v[i]):
                return -1
        ge[i] *= decay_se[i]
        gi[i] *= decay_si[i]
    return ns


def _param_arrays(params: NeuronParams, n: int, dt: float):
    return dict(
        decay_m=np.full(n, math.exp(-dt / params.tau_m)),
        v_rest=np.full(n, params.v_rest),
        v_reset=np.full(n, params.v_reset),
        v_thresh=np.full(n, params.v_thresh),
        t_ref=np.full(n, params.t_refrac),
        decay_se=np.full(n, math.exp(-dt / params.tau_syn_exc)),
        decay_si=np.full(n, math.exp(-dt / params.tau_syn_inh)),
        j_exc=np.full(n, params.j_exc),
        j_inh=np.full(n, params.j_inh),
    )


def lif_step(state: LifState, params: NeuronParams, dt: float, t: float = 0.0,
             group_id: str = "") -> list[SpikeEvent]:
    """Advance one group by one step of ``dt``; returns the spikes emitted at ``t``."""
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    p = _param_arrays(params, state.size, dt)
    out = np.empty(state.size, dtype=np.int64)
    ns = _lif_kernel(state.v, state.g_exc, state.g_inh, state.refrac_until,
                     state.last_spike, p["decay_m"], p["v_rest"], p["v_reset"],
                     p["v_thresh"], p["t_ref"], p["decay_se"], p["decay_si"],
                     p["j_exc"], p["j_inh"], float(t), out)
    if ns < 0:
        raise SimulationFault(f"non-finite membrane potential in group {group_id!r}")
    return [SpikeEvent(group_id, int(i), float(t)) for i in out[:ns]]


def _check_rates(rates: np.ndarray, dt: float, name: str = ""):
    if len(rates) and rates.max() * dt * 1e-3 >= 1.0:
        raise ConfigurationError(
            f"rate x dt >= 1 in input {name!r} (max rate {rates.max():.1f} Hz)")


def poisson_step(group: PoissonGroup, dt: float, rng: np.random.Generator,
                 t: float = 0.0, group_id: str = "") -> list[SpikeEvent]:
    """Each generator fires independently with probability ``rate * dt``."""
    _check_rates(group.rates, dt, group_id)
    u = rng.random(group.size)
    idx = np.flatnonzero(u < group.rates * (dt * 1e-3))
    return [SpikeEvent(group_id, int(i), float(t)) for i in idx]


def deliver_spikes(events: Iterable[SpikeEvent], matrix: SynapseMatrix,
                   target: LifState, rates: LearningRates | None = None):
    """Add each spike's weights to the targets' drive.

    When ``rates`` is given the presynaptic plasticity hook of the matrix's rule
    runs after delivery; postsynaptic hooks belong to the target's own spikes.
    """
    drive = target.g_inh if matrix.inhibitory_source else target.g_exc
    for ev in events:
        lo, hi = matrix.pre_ptr[ev.neuron_index], matrix.pre_ptr[ev.neuron_index + 1]
        np.add.at(drive, matrix.post[lo:hi], matrix.w[lo:hi])
        if rates is not None:
            on_pre(matrix, ev.neuron_index, ev.time, rates)


# --------------------------------------------------------------------------
# networks


@dataclass
class LifGroup:
    name: str
    params: NeuronParams
    state: LifState
    excitatory: bool = True

    @property
    def size(self) -> int:
        return self.state.size


@dataclass
class Connection:
    source: str
    target: str
    matrix: SynapseMatrix


@dataclass
class Hook:
    """Callback fired every ``period`` ms of a run, ``callback(network)``."""

    period: float
    callback: Callable


@dataclass
class RunResult:
    counts: dict[str, np.ndarray]
    duration: float
    raster: np.ndarray | None = None
    hook_calls: int = 0

    def total(self) -> int:
        return int(sum(int(c.sum()) for c in self.counts.values()))


class _Layout:
    """Flat arrays backing every group, input and matrix of a network."""

    def __init__(self, net: "Network"):
        dt = net.clock.dt
        self.lif_off = {}
        off = 0
        for g in net.groups.values():
            self.lif_off[g.name] = off
            off += g.size
        self.n_lif = off
        self.in_off = {}
        for name, grp in net.inputs.items():
            self.in_off[name] = off - self.n_lif
            off += grp.size
        self.n_in = off - self.n_lif
        self.n_src = off

        # neuron state and parameters
        names = [f.name for f in fields(LifState)]
        cat = {k: np.concatenate([getattr(g.state, k) for g in net.groups.values()])
               if net.groups else np.zeros(0) for k in names}
        for k in names:
            setattr(self, k, cat[k])
        for g in net.groups.values():
            lo = self.lif_off[g.name]
            for k in names:
                setattr(g.state, k, cat[k][lo:lo + g.size])
        pa = [_param_arrays(g.params, g.size, dt) for g in net.groups.values()]
        for k in ("decay_m", "v_rest", "v_reset", "v_thresh", "t_ref", "decay_se",
                  "decay_si", "j_exc", "j_inh"):
            setattr(self, k, np.concatenate([p[k] for p in pa]) if pa else np.zeros(0))

        self.rates = (np.concatenate([g.rates for g in net.inputs.values()])
                      if net.inputs else np.zeros(0))
        for name, grp in net.inputs.items():
            lo = self.in_off[name]
            grp.rates = self.rates[lo:lo + grp.size]

        # synapses
        mats = [c.matrix for c in net.connections]
        self.n_mat = len(mats)
        syn_off = np.cumsum([0] + [m.nnz for m in mats])
        pre_off = np.cumsum([0] + [m.n_pre for m in mats])
        post_off = np.cumsum([0] + [m.n_post for m in mats])
        self.syn_off, self.pre_off, self.post_off = syn_off, pre_off, post_off

        def src_base(name):
            return self.lif_off[name] if name in self.lif_off else self.n_lif + self.in_off[name]

        i64 = np.int64
        self.w = np.concatenate([m.w for m in mats]) if mats else np.zeros(0)
        self.syn_tgt = np.concatenate(
            [m.post + self.lif_off[c.target] for c, m in zip(net.connections, mats)]
        ).astype(i64) if mats else np.zeros(0, i64)
        self.syn_preslot = np.concatenate(
            [m.pre + pre_off[i] for i, m in enumerate(mats)]).astype(i64) if mats else np.zeros(0, i64)
        self.syn_postslot = np.concatenate(
            [m.post + post_off[i] for i, m in enumerate(mats)]).astype(i64) if mats else np.zeros(0, i64)
        self.preslot_ptr = np.concatenate(
            [m.pre_ptr[:-1] + syn_off[i] for i, m in enumerate(mats)] + [[syn_off[-1]]]).astype(i64)
        self.preslot_mat = np.repeat(np.arange(self.n_mat), [m.n_pre for m in mats]).astype(i64)
        self.post_order = np.concatenate(
            [m.post_order + syn_off[i] for i, m in enumerate(mats)]).astype(i64) if mats else np.zeros(0, i64)
        self.postslot_ptr = np.concatenate(
            [m.post_ptr[:-1] + syn_off[i] for i, m in enumerate(mats)] + [[syn_off[-1]]]).astype(i64)
        self.postslot_mat = np.repeat(np.arange(self.n_mat), [m.n_post for m in mats]).astype(i64)

        # source -> pre slots (all matrices, delivery needs them)
        src_ids, slot_ids = [], []
        for i, (c, m) in enumerate(zip(net.connections, mats)):
            src_ids.append(np.arange(m.n_pre) + src_base(c.source))
            slot_ids.append(np.arange(m.n_pre) + pre_off[i])
        self.src_ptr, self.src_slots = _csr(src_ids, slot_ids, self.n_src)
        # target -> post slots (plastic matrices only)
        tgt_ids, qslot_ids = [], []
        for i, (c, m) in enumerate(zip(net.connections, mats)):
            if m.plastic:
                tgt_ids.append(np.arange(m.n_post) + self.lif_off[c.target])
                qslot_ids.append(np.arange(m.n_post) + post_off[i])
        self.tgt_ptr, self.tgt_slots = _csr(tgt_ids, qslot_ids, self.n_lif)

        self.mat_rule = np.array([int(m.rule) for m in mats], dtype=i64)
        self.mat_inh_src = np.array([m.inhibitory_source for m in mats], dtype=np.bool_)
        self.tau_pre = np.array([m.pre_tau() for m in mats], dtype=float)
        self.tau_post1 = np.array([m.post_taus()[0] for m in mats], dtype=float)
        self.tau_post2 = np.array([m.post_taus()[1] for m in mats], dtype=float)
        self.alpha = np.array([m.inhib.alpha for m in mats], dtype=float)
        self.w_max = np.array([m.w_max for m in mats], dtype=float)

        def cat_trace(attr):
            return np.concatenate([getattr(m, attr) for m in mats]) if mats else np.zeros(0)

        self.pre_tr, self.pre_time = cat_trace("pre_trace"), cat_trace("pre_time")
        self.post_tr1, self.post_tr2 = cat_trace("post_trace1"), cat_trace("post_trace2")
        self.post_time = cat_trace("post_time")
        for i, m in enumerate(mats):
            m.w = self.w[syn_off[i]:syn_off[i + 1]]
            a, b = pre_off[i], pre_off[i + 1]
            m.pre_trace, m.pre_time = self.pre_tr[a:b], self.pre_time[a:b]
            a, b = post_off[i], post_off[i + 1]
            m.post_trace1, m.post_trace2 = self.post_tr1[a:b], self.post_tr2[a:b]
            m.post_time = self.post_time[a:b]

        self.counts = np.zeros(self.n_src, dtype=np.int64)


def _csr(keys: list, vals: list, n: int):
    if keys:
        k = np.concatenate(keys).astype(np.int64)
        v = np.concatenate(vals).astype(np.int64)
    else:
        k = v = np.zeros(0, np.int64)
    order = np.argsort(k, kind="stable")
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(k, minlength=n), out=ptr[1:])
    return ptr, v[order]


@njit(cache=True)
def _simulate(n_steps, step0, dt,
              v, ge, gi, refrac_until, last_spike,
              decay_m, v_rest, v_reset, v_thresh, t_ref, decay_se, decay_si,
              j_exc, j_inh,
              p_spike, active_in, u,
              src_ptr, src_slots, preslot_ptr, preslot_mat,
              tgt_ptr, tgt_slots, postslot_ptr, post_order, postslot_mat,
              w, syn_tgt, syn_preslot, syn_postslot,
              mat_rule, mat_inh_src, tau_pre, tau_post1, tau_post2, alpha, w_max,
              amp_pre, amp_post,
              pre_tr, pre_time, post_tr1, post_tr2, post_time,
              counts, raster, record):
    n_lif = v.shape[0]
    spk = np.empty(n_lif + p_spike.shape[0], dtype=np.int64)
    for i in range(n_steps):
        t = (step0 + i) * dt
        n_lif_spk = _lif_kernel(v, ge, gi, refrac_until, last_spike, decay_m, v_rest,
                                v_reset, v_thresh, t_ref, decay_se, decay_si, j_exc,
                                j_inh, t, spk)
        if n_lif_spk < 0:
            return -1
        ns = n_lif_spk
        for a in range(active_in.shape[0]):
            j = active_in[a]
            if u[i, a] < p_spike[j]:
                spk[ns] = n_lif + j
                ns += 1
        for e in range(ns):
            src = spk[e]
            counts[src] += 1
            if record:
                raster[i, src] = True
            for kk in range(src_ptr[src], src_ptr[src + 1]):
                k = src_slots[kk]
                m = preslot_mat[k]
                lo = preslot_ptr[k]
                hi = preslot_ptr[k + 1]
                if mat_inh_src[m]:
                    for s in range(lo, hi):
                        gi[syn_tgt[s]] += w[s]
                else:
                    for s in range(lo, hi):
                        ge[syn_tgt[s]] += w[s]
                rule = mat_rule[m]
                if rule == 1:
                    triplet_pre_kernel(w, lo, hi, syn_postslot, post_tr1, post_time,
                                       pre_tr, pre_time, k, t, tau_pre[m], tau_post1[m],
                                       amp_pre[m], w_max[m])
                elif rule == 2:
                    inhib_pre_kernel(w, lo, hi, syn_postslot, post_tr1, post_time,
                                     pre_tr, pre_time, k, t, tau_pre[m], amp_pre[m],
                                     alpha[m], w_max[m])
        for e in range(n_lif_spk):
            n = spk[e]
            for qq in range(tgt_ptr[n], tgt_ptr[n + 1]):
                q = tgt_slots[qq]
                m = postslot_mat[q]
                rule = mat_rule[m]
                if rule == 1:
                    triplet_post_kernel(w, post_order, postslot_ptr[q], postslot_ptr[q + 1],
                                        syn_preslot, pre_tr, pre_time, post_tr1, post_tr2,
                                        post_time, q, t, tau_pre[m], tau_post1[m],
                                        tau_post2[m], amp_post[m], w_max[m])
                elif rule == 2:
                    inhib_post_kernel(w, post_order, postslot_ptr[q], postslot_ptr[q + 1],
                                      syn_preslot, pre_tr, pre_time, post_tr1, post_time,
                                      q, t, tau_pre[m], amp_post[m], w_max[m])
    return 0


class Network:
    """Container of LIF groups, Poisson inputs and the matrices between them.

    Adding elements is allowed until the first simulation; after that the
    arrays of every group and matrix are views into one flat layout, so they
    must be modified in place.
    """

    def __init__(self, dt: float = 0.5, seed: int | None = 0,
                 rates: LearningRates | None = None):
        self.clock = SimClock(dt)
        self.groups: dict[str, LifGroup] = {}
        self.inputs: dict[str, PoissonGroup] = {}
        self.connections: list[Connection] = []
        self.rates = rates if rates is not None else LearningRates()
        self.rng = np.random.default_rng(seed)
        self._layout: _Layout | None = None

    # construction -------------------------------------------------------
    def _check_open(self, name):
        if self._layout is not None:
            raise ConfigurationError(f"cannot add {name!r}: network layout is frozen")
        if name in self.groups or name in self.inputs:
            raise ValueError(f"duplicate group name {name!r}")

    def add_lif(self, name: str, n: int, params: NeuronParams,
                excitatory: bool = True) -> LifGroup:
        self._check_open(name)
        g = LifGroup(name, params, LifState.at_rest(n, params), excitatory)
        self.groups[name] = g
        return g

    def add_input(self, name: str, n: int) -> PoissonGroup:
        self._check_open(name)
        g = PoissonGroup.silent(n)
        self.inputs[name] = g
        return g

    def connect(self, source: str, target: str, matrix: SynapseMatrix) -> SynapseMatrix:
        if self._layout is not None:
            raise ConfigurationError(f"cannot add {name!r}: network layout is frozen")
        if target not in self.groups:
            raise ValueError(f"unknown target group {target!r}")
        n_src = (self.groups[source].size if source in self.groups
                 else self.inputs[source].size) if (source in self.groups or source in self.inputs) else None
        if n_src is None:
            raise ValueError(f"unknown source group {source!r}")
        if matrix.shape != (n_src, self.groups[target].size):
            raise ValueError(f"matrix shape {matrix.shape} does not match {source}->{target}")
        self.connections.append(Connection(source, target, matrix))
        return matrix

    @property
    def layout(self) -> _Layout:
        if self._layout is None:
            self._layout = _Layout(self)
        return self._layout

    # queries ------------------------------------------------------------
    def matrix(self, source: str, target: str) -> SynapseMatrix:
        for c in self.connections:
            if c.source == source and c.target == target:
                return c.matrix
        raise KeyError(f"no matrix {source}->{target}")

    def has_matrix(self, source: str, target: str) -> bool:
        return any(c.source == source and c.target == target for c in self.connections)

    def matrices(self, rule: Rule | None = None) -> list[SynapseMatrix]:
        return [c.matrix for c in self.connections if rule is None or c.matrix.rule == rule]

    def group_names(self) -> list[str]:
        return list(self.groups) + list(self.inputs)

    # mutation helpers ---------------------------------------------------
    def zero_inputs(self):
        for g in self.inputs.values():
            g.zero()

    def reset_neurons(self):
        for g in self.groups.values():
            g.state.reset(g.params)

    def normalize(self):
        """Normalize the incoming weights of every matrix with a target sum."""
        lay = self.layout
        for i, c in enumerate(self.connections):
            m = c.matrix
            if m.target_sum is not None and m.rule == Rule.TRIPLET:
                normalize_kernel(lay.w, lay.post_order, lay.postslot_ptr,
                                 lay.post_off[i], lay.post_off[i + 1],
                                 float(m.target_sum), m.w_max)

    # dynamic state ------------------------------------------------------
    _STATE_KEYS = ("v", "g_exc", "g_inh", "refrac_until", "last_spike", "rates",
                   "w", "pre_tr", "pre_time", "post_tr1", "post_tr2", "post_time")

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Live views of every array that evolves during simulation."""
        lay = self.layout
        return {k: getattr(lay, k) for k in self._STATE_KEYS}

    def save_state(self) -> dict:
        st = {k: a.copy() for k, a in self.state_arrays().items()}
        st["step_count"] = self.clock.step_count
        st["rng"] = self.rng.bit_generator.state
        return st

    def restore_state(self, st: dict):
        for k, a in self.state_arrays().items():
            a[:] = st[k]
        self.clock.step_count = st["step_count"]
        self.rng.bit_generator.state = st["rng"]


def run(network: Network, duration: float, hooks: Iterable[Hook] = (),
        record: bool = False) -> RunResult:
    """Advance ``network`` by ``duration`` ms, firing ``hooks`` on their period.

    Returns per-group spike counts accumulated over the run (and a boolean
    step x source raster when ``record`` is set).
    """
    clock = network.clock
    lay = network.layout
    n_total = clock.steps_for(duration)
    hooks = list(hooks)
    periods = []
    for h in hooks:
        try:
            p = clock.steps_for(h.period)
        except ConfigurationError:
            raise ConfigurationError(f"hook period {h.period} ms is off the dt grid") from None
        if p <= 0:
            raise ConfigurationError("hook period must be positive")
        periods.append(p)

    _check_rates(lay.rates, clock.dt, "inputs")
    lay.counts[:] = 0
    raster = np.zeros((n_total, lay.n_src), dtype=np.bool_) if record else np.zeros((0, 0), np.bool_)
    hook_calls = 0
    done = 0
    while done < n_total:
        nxt = n_total
        for p in periods:
            nxt = min(nxt, (done // p + 1) * p)
        seg = nxt - done
        _run_segment(network, lay, seg, raster[done:nxt] if record else raster, record)
        done = nxt
        for h, p in zip(hooks, periods):
            if done % p == 0:
                h.callback(network)
                hook_calls += 1

    counts = {}
    for name, g in network.groups.items():
        lo = lay.lif_off[name]
        counts[name] = lay.counts[lo:lo + g.size].copy()
    for name, g in network.inputs.items():
        lo = lay.n_lif + lay.in_off[name]
        counts[name] = lay.counts[lo:lo + g.size].copy()
    return RunResult(counts, duration, raster if record else None, hook_calls)


def _run_segment(network: Network, lay: _Layout, n_steps: int, raster, record: bool):
    clock = network.clock
    dt = clock.dt
    p_spike = lay.rates * (dt * 1e-3)
    active = np.flatnonzero(p_spike > 0).astype(np.int64)
    u = network.rng.random((n_steps, len(active))) if len(active) else np.zeros((n_steps, 0))
    amp_pre = np.zeros(lay.n_mat)
    amp_post = np.zeros(lay.n_mat)
    for i, c in enumerate(network.connections):
        amp_pre[i], amp_post[i] = network.rates.amplitudes(c.matrix.rule, c.matrix.w_max)
    seg_counts = np.zeros_like(lay.counts)
    status = _simulate(
        n_steps, clock.step_count, dt,
        lay.v, lay.g_exc, lay.g_inh, lay.refrac_until, lay.last_spike,
        lay.decay_m, lay.v_rest, lay.v_reset, lay.v_thresh, lay.t_ref, lay.decay_se,
        lay.decay_si, lay.j_exc, lay.j_inh,
        p_spike, active, u,
        lay.src_ptr, lay.src_slots, lay.preslot_ptr, lay.preslot_mat,
        lay.tgt_ptr, lay.tgt_slots, lay.postslot_ptr, lay.post_order, lay.postslot_mat,
        lay.w, lay.syn_tgt, lay.syn_preslot, lay.syn_postslot,
        lay.mat_rule, lay.mat_inh_src, lay.tau_pre, lay.tau_post1, lay.tau_post2,
        lay.alpha, lay.w_max, amp_pre, amp_post,
        lay.pre_tr, lay.pre_time, lay.post_tr1, lay.post_tr2, lay.post_time,
        seg_counts, raster, record)
    if status < 0:
        raise SimulationFault("non-finite membrane potential; parameters are unstable")
    lay.counts += seg_counts
    clock.advance(n_steps)
