"""Weight-structure and activity metrics for trained networks.

Matrices are compared after sorting neurons by the stimulus their input
weights prefer. Positions along a sorted axis are ranks divided by the axis
length, so a healthy topographic matrix concentrates on the diagonal and a
collapsed one spreads into wide blocks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import InputConfig, WakeSleepConfig
from .engine import run
from .plasticity import SynapseMatrix
from .protocol import frozen, make_sleep_rates, tracker_of
from .ring import circular_error, preferred_positions
from .topology import HIDDEN, ModularNetwork


def preferred_stimulus(input_matrix: SynapseMatrix, neuron: int) -> float:
    """Circular mean of generator positions weighted by the neuron's input weights.

    NaN when the neuron has no input synapse.
    """
    m = input_matrix
    sel = m.post == neuron
    if not sel.any():
        return math.nan
    return float(preferred_positions(m.pre[sel], np.zeros(sel.sum(), dtype=np.int64),
                                     m.w[sel], m.n_pre, 1)[0])


def preferred_stimuli(input_matrix: SynapseMatrix) -> np.ndarray:
    m = input_matrix
    return preferred_positions(m.pre, m.post, m.w, m.n_pre, m.n_post)


@dataclass(frozen=True)
class SortOrder:
    permutation: np.ndarray
    preferred: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.permutation)
        if not np.array_equal(np.sort(p), np.arange(len(p))):
            raise ValueError("sort order must be a permutation")

    @classmethod
    def from_preferences(cls, preferred) -> "SortOrder":
        pref = np.asarray(preferred, dtype=float)
        key = np.where(np.isnan(pref), np.inf, pref)
        return cls(np.argsort(key, kind="stable"), pref)

    @classmethod
    def identity(cls, n: int) -> "SortOrder":
        return cls(np.arange(n), np.arange(n) / n)

    def __len__(self):
        return len(self.permutation)


def sort_order(net: ModularNetwork, pop: str) -> SortOrder:
    return SortOrder.from_preferences(preferred_stimuli(net.input_matrix(pop)))


def resort(matrix: SynapseMatrix, order: SortOrder, pre_order: SortOrder | None = None) -> np.ndarray:
    """Dense view with columns (and rows, if ``pre_order`` is given) permuted."""
    if len(order) != matrix.n_post:
        raise ValueError(f"order has {len(order)} entries, matrix has {matrix.n_post} columns")
    if pre_order is not None and len(pre_order) != matrix.n_pre:
        raise ValueError(f"pre order has {len(pre_order)} entries, matrix has {matrix.n_pre} rows")
    dense = matrix.dense()
    if pre_order is not None:
        dense = dense[pre_order.permutation]
    return dense[:, order.permutation]


def _band_mask(n_rows: int, n_cols: int, band: float) -> np.ndarray:
    r = np.arange(n_rows)[:, None] / n_rows
    c = np.arange(n_cols)[None, :] / n_cols
    return circular_error(r, c) <= band + 1e-12


def diag_concentration(sorted_matrix, band: float = 0.1) -> float:
    """Fraction of the weight lying within ``band`` of the diagonal (ring distance)."""
    if not 0 < band <= 0.5:
        raise ValueError("band must lie in (0, 0.5]")
    m = np.asarray(sorted_matrix, dtype=float)
    total = m.sum()
    if total <= 0:
        return 0.0
    return float(m[_band_mask(*m.shape, band)].sum() / total)


def cluster_blocks(sorted_matrix, band: float = 0.1, tiles: int = 8,
                   factor: float = 2.0) -> np.ndarray:
    """Boolean mask of off-band tiles whose mean weight exceeds ``factor`` x the global mean."""
    m = np.asarray(sorted_matrix, dtype=float)
    nr, nc = m.shape
    mask = np.zeros(m.shape, dtype=bool)
    mean = m.mean()
    if mean <= 0:
        return mask
    re = np.linspace(0, nr, tiles + 1).astype(int)
    ce = np.linspace(0, nc, tiles + 1).astype(int)
    off = ~_band_mask(nr, nc, band)
    for i in range(tiles):
        for j in range(tiles):
            rs, cs = slice(re[i], re[i + 1]), slice(ce[j], ce[j + 1])
            rc = (re[i] + re[i + 1]) / 2 / nr
            cc = (ce[j] + ce[j + 1]) / 2 / nc
            if circular_error(rc, cc) <= band:
                continue
            if m[rs, cs].mean() > factor * mean:
                mask[rs, cs] = off[rs, cs]
    return mask


def block_mass(sorted_matrix, band: float = 0.1, tiles: int = 8, factor: float = 2.0) -> float:
    m = np.asarray(sorted_matrix, dtype=float)
    total = m.sum()
    if total <= 0:
        return 0.0
    return float(m[cluster_blocks(m, band, tiles, factor)].sum() / total)


def participation_ratio(rates) -> float:
    """(sum r)^2 / (N sum r^2); NaN when every rate is zero."""
    r = np.asarray(rates, dtype=float)
    sq = float(np.sum(r * r))
    if sq <= 0:
        return math.nan
    return float(r.sum() ** 2 / (len(r) * sq))


@dataclass
class ClusterReport:
    diag_concentration: float
    input_diag_concentration: float
    participation_ratio: float
    block_mass: float


def cluster_report(net: ModularNetwork, pop: str, band: float = 0.1,
                   participation: float = math.nan) -> ClusterReport:
    order = sort_order(net, pop)
    rec = resort(net.recurrent_matrix(pop), order, order)
    inp = resort(net.input_matrix(pop), order)
    return ClusterReport(diag_concentration(rec, band), diag_concentration(inp, band),
                         participation, block_mass(rec, band))


@dataclass
class ProbeResult:
    population: str
    probe_rates: np.ndarray
    evoked_rates: np.ndarray
    participation_ratio: float


def attractor_probe(net: ModularNetwork, n_probes: int, rng: np.random.Generator,
                    cfg: WakeSleepConfig = WakeSleepConfig(), populations=None,
                    probe_rates=None) -> list[ProbeResult]:
    """Present random sleep-like input to one population at a time, plasticity off.

    Populations are visited in rotation. The network is left bit-identical.
    """
    pops = list(populations or net.peripheral)
    out = []
    tracker = tracker_of(net, cfg)
    with frozen(net, rng):
        for k in range(n_probes):
            pop = pops[k % len(pops)]
            grp = net.input_group(pop)
            rates = (make_sleep_rates(grp.size, tracker, pop, rng) if probe_rates is None
                     else np.asarray(probe_rates, dtype=float))
            net.reset_neurons()
            net.zero_inputs()
            grp.set_rates(rates)
            res = run(net, cfg.present_time * 1e3)
            evoked = res.counts[net.populations[pop].exc] / cfg.present_time
            out.append(ProbeResult(pop, rates.copy(), evoked, participation_ratio(evoked)))
    return out


def mean_participation(probes: list[ProbeResult]) -> float:
    vals = [p.participation_ratio for p in probes]
    vals = [v for v in vals if not math.isnan(v)]
    return float(np.mean(vals)) if vals else math.nan


def hidden_coordinates(net: ModularNetwork, hidden: str = HIDDEN) -> np.ndarray:
    """(n_hidden, n_peripheral) preferred values of each hidden neuron's strongest partners.

    For every peripheral population the partner is the excitatory neuron with
    the largest mean of the two directed weights (absent synapses count as 0).
    Rows of NaN mark hidden neurons without any peripheral connection.
    """
    h = net.populations[hidden]
    n_h = net.groups[h.exc].size
    coords = np.full((n_h, len(net.peripheral)), np.nan)
    for j, pop in enumerate(net.peripheral):
        p = net.populations[pop]
        strength = np.zeros((net.groups[p.exc].size, n_h))
        linked = np.zeros_like(strength, dtype=bool)
        if net.has_matrix(p.exc, h.exc):
            m = net.matrix(p.exc, h.exc)
            np.add.at(strength, (m.pre, m.post), m.w / 2)
            linked[m.pre, m.post] = True
        if net.has_matrix(h.exc, p.exc):
            m = net.matrix(h.exc, p.exc)
            np.add.at(strength, (m.post, m.pre), m.w / 2)
            linked[m.post, m.pre] = True
        pref = preferred_stimuli(net.input_matrix(pop))
        best = np.argmax(strength, axis=0)  # first maximum = lowest index
        has = linked.any(axis=0)
        coords[has, j] = pref[best[has]]
    return coords


def plane_residual(coords) -> float:
    """Mean circular distance of x_C from (x_A + x_B) mod 1 over defined rows."""
    c = np.asarray(coords, dtype=float)
    ok = ~np.isnan(c).any(axis=1)
    if not ok.any():
        return math.nan
    c = c[ok]
    return float(np.mean(circular_error((c[:, 0] + c[:, 1]) % 1.0, c[:, 2])))


def response_tuning(net: ModularNetwork, pop: str, n_stim: int = 16,
                    cfg: WakeSleepConfig = WakeSleepConfig(),
                    inputs: InputConfig = InputConfig(), rng=None) -> np.ndarray:
    """(n_stim, n_exc) evoked rates of one population driven alone by Gaussian input."""
    from .protocol import gaussian_profile

    rng = np.random.default_rng(0) if rng is None else rng
    out = []
    with frozen(net, rng):
        for k in range(n_stim):
            net.reset_neurons()
            net.zero_inputs()
            grp = net.input_group(pop)
            grp.set_rates(gaussian_profile(k / n_stim, grp.size, inputs.peak_rate, inputs.sigma))
            res = run(net, cfg.present_time * 1e3)
            out.append(res.counts[net.populations[pop].exc] / cfg.present_time)
    return np.array(out)
