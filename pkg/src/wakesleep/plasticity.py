"""Synaptic learning rules and the sparse synapse container.

Weights live in a fixed sparsity pattern (pre, post, w) sorted by presynaptic
index. Traces are stored per presynaptic and per postsynaptic neuron together
with the time of their last increment and are decayed lazily on access, so a
trace value is only ever touched when a spike needs it.

Trace slots per rule:

    ========  ==================  ===========================
    rule      pre slot            post slots (tr1, tr2)
    ========  ==================  ===========================
    triplet   r1 (tau_plus)       o1 (tau_minus), o2 (tau_y)
    inhib     x_pre (tau_stdp)    x_post (tau_stdp), unused
    static    unused              unused
    ========  ==================  ===========================
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numba import njit


class Rule(IntEnum):
    STATIC = 0
    TRIPLET = 1
    INHIB = 2


class ContractViolation(RuntimeError):
    """A rule-specific update was called on a matrix with a different rule."""


@dataclass(frozen=True)
class TripletParams:
    tau_plus: float = 16.8
    tau_minus: float = 33.7
    tau_y: float = 114.0


@dataclass(frozen=True)
class InhibParams:
    tau_stdp: float = 20.0
    rho_target: float = 10.0  # Hz

    @property
    def alpha(self) -> float:
        return 2.0 * self.rho_target * self.tau_stdp * 1e-3


@dataclass
class LearningRates:
    """Rule amplitudes plus the global excitatory sign and rate multiplier.

    ``sign`` and ``multiplier`` act on the excitatory (triplet) rule only; the
    inhibitory rule always runs at its nominal amplitude. ``enabled`` gates all
    weight changes (traces keep evolving either way).
    """

    eta_pre: float = 1.2e-2
    eta_post: float = 1e-2
    eta_inh: float = 1e-2
    sign: int = 1
    multiplier: float = 1.0
    enabled: bool = True
    inhibitory_enabled: bool = True

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        if not self.multiplier > 0:
            raise ValueError("multiplier must be positive")

    def amplitudes(self, rule: Rule, w_max: float) -> tuple[float, float]:
        """(pre-spike amplitude, post-spike amplitude) for ``rule``."""
        if not self.enabled or rule == Rule.STATIC:
            return 0.0, 0.0
        if rule == Rule.TRIPLET:
            k = self.sign * self.multiplier * w_max
            return k * self.eta_pre, k * self.eta_post
        if not self.inhibitory_enabled:
            return 0.0, 0.0
        return self.eta_inh * w_max, self.eta_inh * w_max


# --------------------------------------------------------------------------
# kernels shared by the per-matrix API and the network simulation loop


@njit(cache=True, inline="always")
def _clip(x, w_max):
    if x < 0.0:
        return 0.0
    if x > w_max:
        return w_max
    return x


@njit(cache=True)
def triplet_pre_kernel(w, lo, hi, syn_post, o1, post_time, r1, pre_time,
                       k, t, tau_plus, tau_minus, amp, w_max):
    # LTD through the fast postsynaptic trace, then bump r1
    if amp != 0.0:
        for s in range(lo, hi):
            q = syn_post[s]
            o = o1[q] * math.exp(-(t - post_time[q]) / tau_minus)
            w[s] = _clip(w[s] - amp * o, w_max)
    r1[k] = r1[k] * math.exp(-(t - pre_time[k]) / tau_plus) + 1.0
    pre_time[k] = t


@njit(cache=True)
def triplet_post_kernel(w, order, lo, hi, syn_pre, r1, pre_time, o1, o2,
                        post_time, q, t, tau_plus, tau_minus, tau_y, amp,
                        w_max):
    # o2 is read before this spike's own increment
    dt_q = t - post_time[q]
    o2_before = o2[q] * math.exp(-dt_q / tau_y)
    if amp != 0.0 and o2_before != 0.0:
        for i in range(lo, hi):
            s = order[i]
            k = syn_pre[s]
            r = r1[k] * math.exp(-(t - pre_time[k]) / tau_plus)
            w[s] = _clip(w[s] + amp * r * o2_before, w_max)
    o1[q] = o1[q] * math.exp(-dt_q / tau_minus) + 1.0
    o2[q] = o2_before + 1.0
    post_time[q] = t


@njit(cache=True)
def inhib_pre_kernel(w, lo, hi, syn_post, x_post, post_time, x_pre, pre_time,
                     k, t, tau, amp, alpha, w_max):
    if amp != 0.0:
        for s in range(lo, hi):
            q = syn_post[s]
            x = x_post[q] * math.exp(-(t - post_time[q]) / tau)
            w[s] = _clip(w[s] + amp * (x - alpha), w_max)
    x_pre[k] = x_pre[k] * math.exp(-(t - pre_time[k]) / tau) + 1.0
    pre_time[k] = t


@njit(cache=True)
def inhib_post_kernel(w, order, lo, hi, syn_pre, x_pre, pre_time, x_post,
                      post_time, q, t, tau, amp, w_max):
    if amp != 0.0:
        for i in range(lo, hi):
            s = order[i]
            k = syn_pre[s]
            x = x_pre[k] * math.exp(-(t - pre_time[k]) / tau)
            w[s] = _clip(w[s] + amp * x, w_max)
    x_post[q] = x_post[q] * math.exp(-(t - post_time[q]) / tau) + 1.0
    post_time[q] = t


@njit(cache=True)
def normalize_kernel(w, order, ptr, q_lo, q_hi, target, w_max):
    """Scale each postsynaptic column in slots [q_lo, q_hi) to sum ``target``.

    Scaling is multiplicative. Entries that would exceed ``w_max`` are pinned
    there and the remainder is spread over the free entries (water filling),
    so the bound and the target sum both hold whenever that is feasible.
    """
    for q in range(q_lo, q_hi):
        lo = ptr[q]
        hi = ptr[q + 1]
        n = hi - lo
        total = 0.0
        peak = 0.0
        for i in range(lo, hi):
            x = w[order[i]]
            total += x
            if x > peak:
                peak = x
        if total <= 0.0 or abs(total - target) <= 1e-12 * target:
            continue
        if n * w_max <= target:
            for i in range(lo, hi):
                w[order[i]] = w_max
            continue
        scale = target / total
        if peak * scale <= w_max:
            for i in range(lo, hi):
                w[order[i]] *= scale
            continue
        pinned = np.zeros(n, dtype=np.bool_)
        n_pinned = 0
        while True:
            free = 0.0
            for j in range(n):
                if not pinned[j]:
                    free += w[order[lo + j]]
            if free <= 0.0:
                # only zero entries remain free; multiplicative scaling stops here
                scale = 1.0
                break
            scale = (target - n_pinned * w_max) / free
            grew = False
            for j in range(n):
                if not pinned[j] and w[order[lo + j]] * scale >= w_max:
                    pinned[j] = True
                    n_pinned += 1
                    grew = True
            if not grew:
                break
        for j in range(n):
            s = order[lo + j]
            if pinned[j]:
                w[s] = w_max
            else:
                w[s] *= scale


# --------------------------------------------------------------------------


class SynapseMatrix:
    """Sparse weights between two neuron groups with per-neuron traces.

    Entries are kept sorted by (pre, post). The sparsity pattern is fixed at
    construction; only magnitudes change.
    """

    def __init__(self, n_pre: int, n_post: int, pre, post, w,
                 rule: Rule = Rule.STATIC, w_max: float = 1.0,
                 triplet: TripletParams = TripletParams(),
                 inhib: InhibParams = InhibParams(),
                 inhibitory_source: bool = False,
                 target_sum: float | None = None, name: str = ""):
        pre = np.asarray(pre, dtype=np.int64)
        post = np.asarray(post, dtype=np.int64)
        w = np.asarray(w, dtype=np.float64)
        if not (pre.shape == post.shape == w.shape):
            raise ValueError("pre, post and w must have the same length")
        if len(pre) and (pre.min() < 0 or pre.max() >= n_pre
                         or post.min() < 0 or post.max() >= n_post):
            raise ValueError("synapse index out of range")
        order = np.lexsort((post, pre))
        self.n_pre = int(n_pre)
        self.n_post = int(n_post)
        self.pre = pre[order]
        self.post = post[order]
        self.w = np.clip(w[order], 0.0, w_max)
        self.rule = Rule(rule)
        self.w_max = float(w_max)
        self.triplet = triplet
        self.inhib = inhib
        self.inhibitory_source = bool(inhibitory_source)
        self.target_sum = target_sum
        self.name = name

        self.pre_ptr = np.zeros(self.n_pre + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.pre, minlength=self.n_pre), out=self.pre_ptr[1:])
        self.post_order = np.argsort(self.post, kind="stable").astype(np.int64)
        self.post_ptr = np.zeros(self.n_post + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.post, minlength=self.n_post), out=self.post_ptr[1:])

        self.pre_trace = np.zeros(self.n_pre)
        self.pre_time = np.zeros(self.n_pre)
        self.post_trace1 = np.zeros(self.n_post)
        self.post_trace2 = np.zeros(self.n_post)
        self.post_time = np.zeros(self.n_post)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_pre, self.n_post

    @property
    def nnz(self) -> int:
        return len(self.w)

    @property
    def plastic(self) -> bool:
        return self.rule != Rule.STATIC

    def __repr__(self):
        return (f"SynapseMatrix({self.name!r}, shape={self.shape}, nnz={self.nnz}, "
                f"rule={self.rule.name})")

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.pre, self.post] = self.w
        return out

    def column_sums(self) -> np.ndarray:
        return np.bincount(self.post, weights=self.w, minlength=self.n_post)

    def pre_tau(self) -> float:
        if self.rule == Rule.TRIPLET:
            return self.triplet.tau_plus
        return self.inhib.tau_stdp

    def post_taus(self) -> tuple[float, float]:
        if self.rule == Rule.TRIPLET:
            return self.triplet.tau_minus, self.triplet.tau_y
        return self.inhib.tau_stdp, self.inhib.tau_stdp

    def trace_values(self, t: float) -> dict[str, np.ndarray]:
        """All traces decayed to time ``t`` (read-only view of the lazy state)."""
        a = self.pre_tau()
        b, c = self.post_taus()
        pre = self.pre_trace * np.exp(-(t - self.pre_time) / a)
        p1 = self.post_trace1 * np.exp(-(t - self.post_time) / b)
        p2 = self.post_trace2 * np.exp(-(t - self.post_time) / c)
        if self.rule == Rule.TRIPLET:
            return {"r1": pre, "o1": p1, "o2": p2}
        return {"x_pre": pre, "x_post": p1}

    def reset_traces(self):
        for arr in (self.pre_trace, self.pre_time, self.post_trace1,
                    self.post_trace2, self.post_time):
            arr[:] = 0.0

    def copy_weights(self) -> np.ndarray:
        return self.w.copy()


def _require(matrix: SynapseMatrix, rule: Rule):
    if matrix.rule != rule:
        raise ContractViolation(
            f"{rule.name} update called on {matrix.rule.name} matrix {matrix.name!r}")


def triplet_on_pre(matrix: SynapseMatrix, pre_index: int, t: float,
                   rates: LearningRates):
    """Presynaptic spike: depression through o1, then r1 += 1."""
    _require(matrix, Rule.TRIPLET)
    amp, _ = rates.amplitudes(Rule.TRIPLET, matrix.w_max)
    tp = matrix.triplet
    triplet_pre_kernel(matrix.w, matrix.pre_ptr[pre_index], matrix.pre_ptr[pre_index + 1],
                       matrix.post, matrix.post_trace1, matrix.post_time,
                       matrix.pre_trace, matrix.pre_time, pre_index, float(t),
                       tp.tau_plus, tp.tau_minus, amp, matrix.w_max)


def triplet_on_post(matrix: SynapseMatrix, post_index: int, t: float,
                    rates: LearningRates):
    """Postsynaptic spike: potentiation through r1 x o2, then o1, o2 += 1."""
    _require(matrix, Rule.TRIPLET)
    _, amp = rates.amplitudes(Rule.TRIPLET, matrix.w_max)
    tp = matrix.triplet
    triplet_post_kernel(matrix.w, matrix.post_order, matrix.post_ptr[post_index],
                        matrix.post_ptr[post_index + 1], matrix.pre,
                        matrix.pre_trace, matrix.pre_time, matrix.post_trace1,
                        matrix.post_trace2, matrix.post_time, post_index, float(t),
                        tp.tau_plus, tp.tau_minus, tp.tau_y, amp, matrix.w_max)


def inhib_on_pre(matrix: SynapseMatrix, pre_index: int, t: float,
                 rates: LearningRates):
    _require(matrix, Rule.INHIB)
    amp, _ = rates.amplitudes(Rule.INHIB, matrix.w_max)
    ip = matrix.inhib
    inhib_pre_kernel(matrix.w, matrix.pre_ptr[pre_index], matrix.pre_ptr[pre_index + 1],
                     matrix.post, matrix.post_trace1, matrix.post_time,
                     matrix.pre_trace, matrix.pre_time, pre_index, float(t),
                     ip.tau_stdp, amp, ip.alpha, matrix.w_max)


def inhib_on_post(matrix: SynapseMatrix, post_index: int, t: float,
                  rates: LearningRates):
    _require(matrix, Rule.INHIB)
    _, amp = rates.amplitudes(Rule.INHIB, matrix.w_max)
    ip = matrix.inhib
    inhib_post_kernel(matrix.w, matrix.post_order, matrix.post_ptr[post_index],
                      matrix.post_ptr[post_index + 1], matrix.pre,
                      matrix.pre_trace, matrix.pre_time, matrix.post_trace1,
                      matrix.post_time, post_index, float(t), ip.tau_stdp, amp,
                      matrix.w_max)


def on_pre(matrix: SynapseMatrix, pre_index: int, t: float, rates: LearningRates):
    """Dispatch a presynaptic spike to the matrix's rule (no-op when static)."""
    if matrix.rule == Rule.TRIPLET:
        triplet_on_pre(matrix, pre_index, t, rates)
    elif matrix.rule == Rule.INHIB:
        inhib_on_pre(matrix, pre_index, t, rates)


def on_post(matrix: SynapseMatrix, post_index: int, t: float, rates: LearningRates):
    if matrix.rule == Rule.TRIPLET:
        triplet_on_post(matrix, post_index, t, rates)
    elif matrix.rule == Rule.INHIB:
        inhib_on_post(matrix, post_index, t, rates)


def set_excitatory_sign(network, sign: int):
    """Switch every triplet matrix of ``network`` to Hebbian (+1) or anti-Hebbian (-1)."""
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    network.rates.sign = int(sign)


def normalize_incoming(matrix: SynapseMatrix, target_sum: float | None = None):
    """Rescale each postsynaptic neuron's incoming weights to ``target_sum``.

    Columns whose weights are all zero are left alone.
    """
    target = matrix.target_sum if target_sum is None else target_sum
    if target is None or not target > 0:
        raise ValueError("target_sum must be positive")
    normalize_kernel(matrix.w, matrix.post_order, matrix.post_ptr, 0, matrix.n_post,
                     float(target), matrix.w_max)
