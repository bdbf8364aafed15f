import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wakesleep.engine import Network, NeuronParams
from wakesleep.plasticity import (ContractViolation, InhibParams, LearningRates, Rule,
                                  SynapseMatrix, TripletParams, inhib_on_post, inhib_on_pre,
                                  normalize_incoming, on_post, on_pre, set_excitatory_sign,
                                  triplet_on_post, triplet_on_pre)

TP = TripletParams()
ETA_PRE, ETA_POST, ETA_INH = 1.2e-2, 1e-2, 1e-2


def single(rule=Rule.TRIPLET, w=0.5):
    return SynapseMatrix(1, 1, [0], [0], [w], rule=rule)


# ------------------------------------------------------------- closed forms

def test_ltd_needs_a_post_trace():
    m = single()
    triplet_on_pre(m, 0, 3.0, LearningRates())
    assert m.w[0] == 0.5


def test_ltd_closed_form():
    m = single()
    r = LearningRates()
    triplet_on_post(m, 0, 0.0, r)
    assert m.w[0] == 0.5  # r1 = 0: no potentiation
    triplet_on_pre(m, 0, 10.0, r)
    expected = -ETA_PRE * math.exp(-10 / 33.7)
    assert m.w[0] - 0.5 == pytest.approx(expected, rel=1e-12)


def test_ltd_sign_flip():
    m = single()
    r = LearningRates(sign=-1)
    triplet_on_post(m, 0, 0.0, r)
    triplet_on_pre(m, 0, 10.0, r)
    assert m.w[0] - 0.5 == pytest.approx(ETA_PRE * math.exp(-10 / 33.7), rel=1e-12)


def test_pair_without_triplet_gives_no_ltp():
    m = single()
    r = LearningRates()
    triplet_on_pre(m, 0, 0.0, r)
    triplet_on_post(m, 0, 5.0, r)
    assert m.w[0] == 0.5


def test_triplet_ltp_closed_form():
    m = single()
    r = LearningRates()
    triplet_on_post(m, 0, 0.0, r)
    triplet_on_pre(m, 0, 5.0, r)
    w_mid = m.w[0]
    triplet_on_post(m, 0, 15.0, r)
    expected = ETA_POST * math.exp(-10 / 16.8) * math.exp(-15 / 114.0)
    assert m.w[0] - w_mid == pytest.approx(expected, rel=1e-12)


def test_inhib_pure_depression_on_empty_trace():
    m = single(Rule.INHIB)
    inhib_on_pre(m, 0, 1.0, LearningRates())
    alpha = 2 * 10.0 * 20e-3
    assert alpha == InhibParams().alpha
    assert m.w[0] - 0.5 == pytest.approx(-ETA_INH * alpha, rel=1e-12)


def test_inhib_post_potentiates_by_pre_trace():
    m = single(Rule.INHIB)
    r = LearningRates()
    inhib_on_pre(m, 0, 0.0, r)
    w1 = m.w[0]
    inhib_on_post(m, 0, 7.0, r)
    assert m.w[0] - w1 == pytest.approx(ETA_INH * math.exp(-7 / 20.0), rel=1e-12)


def test_inhib_linear_in_eta():
    a, b = single(Rule.INHIB), single(Rule.INHIB)
    ra, rb = LearningRates(eta_inh=1e-3), LearningRates(eta_inh=2e-3)
    for m, r in ((a, ra), (b, rb)):
        inhib_on_post(m, 0, 0.0, r)
        inhib_on_pre(m, 0, 3.0, r)
    assert b.w[0] - 0.5 == pytest.approx(2 * (a.w[0] - 0.5), rel=1e-12)


def test_inhib_rule_ignores_sign_and_multiplier():
    a, b = single(Rule.INHIB), single(Rule.INHIB)
    inhib_on_pre(a, 0, 1.0, LearningRates())
    inhib_on_pre(b, 0, 1.0, LearningRates(sign=-1, multiplier=10.0))
    assert a.w[0] == b.w[0]


def test_wrong_rule_is_contract_violation():
    for fn in (triplet_on_pre, triplet_on_post):
        with pytest.raises(ContractViolation):
            fn(single(Rule.INHIB), 0, 0.0, LearningRates())
    for fn in (inhib_on_pre, inhib_on_post):
        with pytest.raises(ContractViolation):
            fn(single(Rule.TRIPLET), 0, 0.0, LearningRates())


def test_static_dispatch_is_noop():
    m = single(Rule.STATIC)
    on_pre(m, 0, 1.0, LearningRates(multiplier=100))
    on_post(m, 0, 2.0, LearningRates(multiplier=100))
    assert m.w[0] == 0.5


def test_clipping():
    m = single(w=0.999)
    r = LearningRates(multiplier=1000.0)
    for t in (0.0, 1.0, 2.0, 3.0):
        triplet_on_pre(m, 0, t, r)
        triplet_on_post(m, 0, t + 0.5, r)
    assert m.w[0] == 1.0
    n = single(w=0.001)
    triplet_on_post(n, 0, 0.0, r)
    triplet_on_pre(n, 0, 1.0, r)
    assert n.w[0] == 0.0


# ------------------------------------------------------------- scripted trains

def _scripted(seed, n_pre=3, n_post=2, n_events=60, horizon=500.0):
    r = np.random.default_rng(seed)
    times = np.sort(r.uniform(0, horizon, n_events))
    kinds = r.integers(0, 2, n_events)  # 0 pre, 1 post
    idx = [int(r.integers(0, n_pre if k == 0 else n_post)) for k in kinds]
    return list(zip(times.tolist(), kinds.tolist(), idx))


def _full(n_pre, n_post, w0, rule):
    pre, post = np.meshgrid(np.arange(n_pre), np.arange(n_post), indexing="ij")
    return SynapseMatrix(n_pre, n_post, pre.ravel(), post.ravel(),
                         np.full(n_pre * n_post, w0), rule=rule)


def _trace(spikes, t, tau):
    """All-to-all trace: sum of exponentials over every earlier spike."""
    return sum(math.exp(-(t - s) / tau) for s in spikes if s < t)


def _triplet_oracle(events, n_pre, n_post, w0, eta_pre, eta_post):
    w = np.full((n_pre, n_post), w0)
    pre_sp = [[] for _ in range(n_pre)]
    post_sp = [[] for _ in range(n_post)]
    for t, kind, i in events:
        if kind == 0:
            for j in range(n_post):
                w[i, j] -= eta_pre * _trace(post_sp[j], t, TP.tau_minus)
            pre_sp[i].append(t)
        else:
            o2 = _trace(post_sp[i], t, TP.tau_y)
            for k in range(n_pre):
                w[k, i] += eta_post * _trace(pre_sp[k], t, TP.tau_plus) * o2
            post_sp[i].append(t)
    return w


def _inhib_oracle(events, n_pre, n_post, w0, eta):
    tau, alpha = 20.0, InhibParams().alpha
    w = np.full((n_pre, n_post), w0)
    pre_sp = [[] for _ in range(n_pre)]
    post_sp = [[] for _ in range(n_post)]
    for t, kind, i in events:
        if kind == 0:
            for j in range(n_post):
                w[i, j] += eta * (_trace(post_sp[j], t, tau) - alpha)
            pre_sp[i].append(t)
        else:
            for k in range(n_pre):
                w[k, i] += eta * _trace(pre_sp[k], t, tau)
            post_sp[i].append(t)
    return w


def _replay(m, events, rates, pre_fn, post_fn):
    for t, kind, i in events:
        (pre_fn if kind == 0 else post_fn)(m, i, t, rates)


@pytest.mark.parametrize("seed", range(5))
def test_triplet_matches_trace_oracle(seed):
    ev = _scripted(seed)
    r = LearningRates(eta_pre=1e-3, eta_post=1e-3)
    m = _full(3, 2, 0.5, Rule.TRIPLET)
    _replay(m, ev, r, triplet_on_pre, triplet_on_post)
    want = _triplet_oracle(ev, 3, 2, 0.5, 1e-3, 1e-3)
    np.testing.assert_allclose(m.dense(), want, rtol=1e-10, atol=0)


@pytest.mark.parametrize("seed", range(5))
def test_inhib_matches_trace_oracle(seed):
    ev = _scripted(seed)
    r = LearningRates(eta_inh=1e-3)
    m = _full(3, 2, 0.5, Rule.INHIB)
    _replay(m, ev, r, inhib_on_pre, inhib_on_post)
    np.testing.assert_allclose(m.dense(), _inhib_oracle(ev, 3, 2, 0.5, 1e-3), rtol=1e-10, atol=0)


@given(st.integers(0, 10_000))
def test_sign_reversal_negates_deltas_exactly(seed):
    # around 0.75 every partial sum stays in [0.5, 1), where rounding is
    # symmetric, so an exact negation of each delta gives an exact mirror
    ev = _scripted(seed, n_events=30)
    a, b = _full(3, 2, 0.75, Rule.TRIPLET), _full(3, 2, 0.75, Rule.TRIPLET)
    _replay(a, ev, LearningRates(eta_pre=1e-3, eta_post=1e-3), triplet_on_pre, triplet_on_post)
    _replay(b, ev, LearningRates(eta_pre=1e-3, eta_post=1e-3, sign=-1),
            triplet_on_pre, triplet_on_post)
    assert np.array_equal(a.w - 0.75, -(b.w - 0.75))


@given(st.integers(0, 10_000), st.floats(0.1, 20.0))
def test_multiplier_scales_deltas(seed, mult):
    ev = _scripted(seed, n_events=30)
    a, b = _full(3, 2, 0.5, Rule.TRIPLET), _full(3, 2, 0.5, Rule.TRIPLET)
    _replay(a, ev, LearningRates(eta_pre=1e-5, eta_post=1e-5), triplet_on_pre, triplet_on_post)
    _replay(b, ev, LearningRates(eta_pre=1e-5, eta_post=1e-5, multiplier=mult),
            triplet_on_pre, triplet_on_post)
    np.testing.assert_allclose(b.w - 0.5, mult * (a.w - 0.5), rtol=1e-9, atol=1e-15)


def test_sign_switch_leaves_no_state():
    net = Network()
    set_excitatory_sign(net, -1)
    set_excitatory_sign(net, 1)
    assert net.rates == LearningRates()
    with pytest.raises(ValueError):
        set_excitatory_sign(net, 0)


# ------------------------------------------------------------- lazy traces

@pytest.mark.parametrize("rule", [Rule.TRIPLET, Rule.INHIB])
def test_lazy_traces_equal_dense_stepping(rule):
    dt = 0.5
    r = np.random.default_rng(7)
    n_steps = 2000  # 1 s
    pre_spk = r.random((n_steps, 2)) < 0.02
    post_spk = r.random((n_steps, 2)) < 0.02
    m = _full(2, 2, 0.5, rule)
    taus = (m.pre_tau(), *m.post_taus())
    d = [math.exp(-dt / tau) for tau in taus]
    dense_pre, dense_p1, dense_p2 = np.zeros(2), np.zeros(2), np.zeros(2)
    rates = LearningRates(enabled=False)
    worst = 0.0
    for k in range(n_steps):
        t = k * dt
        if k:
            dense_pre *= d[0]
            dense_p1 *= d[1]
            dense_p2 *= d[2]
        for i in np.flatnonzero(pre_spk[k]):
            on_pre(m, int(i), t, rates)
            dense_pre[i] += 1
        for j in np.flatnonzero(post_spk[k]):
            on_post(m, int(j), t, rates)
            dense_p1[j] += 1
            dense_p2[j] += 1
        if k % 97 == 0 or k == n_steps - 1:
            tv = list(m.trace_values(t).values())
            for lazy, dense in zip(tv, (dense_pre, dense_p1, dense_p2)):
                ok = dense > 0
                if ok.any():
                    worst = max(worst, float(np.max(np.abs(lazy[ok] - dense[ok]) / dense[ok])))
    assert worst <= 1e-12
    assert np.all(m.w == 0.5)  # disabled rates touch traces only


def test_inhib_zero_drift_at_target_rate():
    # independent Poisson pre and post trains, post at rho_target: E[dw] = 0
    r = np.random.default_rng(11)
    horizon = 100_000.0  # 100 s
    rho = InhibParams().rho_target
    pre_rate = 20.0
    drifts = []
    for rep in range(4):
        pre = np.cumsum(r.exponential(1000.0 / pre_rate, int(horizon * pre_rate / 1000 * 1.2)))
        post = np.cumsum(r.exponential(1000.0 / rho, int(horizon * rho / 1000 * 1.2)))
        ev = sorted([(t, 0, 0) for t in pre[pre < horizon]] + [(t, 1, 0) for t in post[post < horizon]])
        m = single(Rule.INHIB, w=0.5)
        rates = LearningRates(eta_inh=1e-7)
        _replay(m, ev, rates, inhib_on_pre, inhib_on_post)
        drifts.append((m.w[0] - 0.5) / 1e-7)
    # per-pre-spike drift in units of eta: expected 0; the depression term
    # alone would give -alpha * n_pre = -0.4 * 2000 = -800
    assert abs(np.mean(drifts)) < 80


# ------------------------------------------------------------- normalization

def _col_matrix(ws, w_max=1.0):
    n = len(ws)
    return SynapseMatrix(n, 1, np.arange(n), np.zeros(n, int), ws, rule=Rule.TRIPLET, w_max=w_max)


def test_normalize_unchanged_at_target():
    m = _col_matrix([0.1, 0.2, 0.3])
    normalize_incoming(m, 0.6)
    np.testing.assert_allclose(m.w, [0.1, 0.2, 0.3], rtol=1e-15)


def test_normalize_halves():
    m = _col_matrix([0.2, 0.4, 0.6])
    normalize_incoming(m, 0.6)
    np.testing.assert_allclose(m.w, [0.1, 0.2, 0.3], rtol=1e-14)


def test_normalize_zero_column_untouched():
    m = SynapseMatrix(2, 2, [0, 1], [0, 0], [0.0, 0.0], rule=Rule.TRIPLET)
    normalize_incoming(m, 1.0)
    assert np.all(m.w == 0)


def test_normalize_rejects_bad_target():
    with pytest.raises(ValueError):
        normalize_incoming(_col_matrix([0.1]), 0.0)


def test_normalize_pins_at_wmax():
    # scaling by 3 would push 0.5 past w_max; it pins and the rest absorb the excess
    m = _col_matrix([0.5, 0.1, 0.1, 0.1])
    normalize_incoming(m, 2.4)
    assert m.w[0] == 1.0
    np.testing.assert_allclose(m.w[1:], [0.4667, 0.4667, 0.4667], atol=1e-4)
    assert m.w.sum() == pytest.approx(2.4, rel=1e-12)


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=30), st.floats(0.05, 1.5))
def test_normalize_postcondition_and_idempotence(ws, frac):
    m = _col_matrix(ws)
    if m.w.sum() <= 0:
        return
    target = frac * min(len(ws), 1 + m.w.sum())
    target = min(target, 0.999 * len(ws))
    normalize_incoming(m, target)
    assert m.w.sum() == pytest.approx(target, rel=1e-9)
    assert m.w.min() >= 0 and m.w.max() <= 1.0
    once = m.w.copy()
    normalize_incoming(m, target)
    np.testing.assert_allclose(m.w, once, rtol=1e-12, atol=1e-15)


def test_network_normalize_uses_stored_targets():
    net = Network()
    net.add_lif("E", 4, NeuronParams())
    net.add_input("X", 6)
    r = np.random.default_rng(0)
    pre, post = np.nonzero(np.ones((6, 4), bool))
    m = SynapseMatrix(6, 4, pre, post, r.uniform(0, 0.5, 24), rule=Rule.TRIPLET, target_sum=1.3)
    s = SynapseMatrix(6, 4, pre, post, r.uniform(0, 0.5, 24), rule=Rule.STATIC, target_sum=1.3)
    net.connect("X", "E", m)
    net.connect("E", "E", SynapseMatrix(4, 4, [0], [1], [0.2]))
    net.add_input("Y", 6)
    net.connect("Y", "E", s)
    before = s.w.copy()
    net.normalize()
    np.testing.assert_allclose(m.column_sums(), 1.3, rtol=1e-12)
    assert np.array_equal(s.w, before)  # static matrices keep their values


def test_matrix_validation():
    with pytest.raises(ValueError):
        SynapseMatrix(2, 2, [0, 2], [0, 0], [0.1, 0.1])
    with pytest.raises(ValueError):
        SynapseMatrix(2, 2, [0], [0, 1], [0.1])


def test_weights_clipped_at_construction():
    m = SynapseMatrix(2, 1, [0, 1], [0, 0], [-0.5, 3.0], w_max=1.0)
    assert m.w.tolist() == [0.0, 1.0]
