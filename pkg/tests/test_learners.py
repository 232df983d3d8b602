import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tdlab.envs import make_boyan, make_random
from tdlab.errors import ConfigError
from tdlab.learners import (
    ALGOS,
    LearnerState,
    Sample,
    attd_increment,
    attd_increment_counted,
    attd_increment_naive_counted,
    get_algo,
    htd_update,
    project_ball,
    step_attd,
    step_extended_baselines,
    step_gtd,
    step_gtd2,
    step_offpolicy_td,
    step_projected_attd,
    step_tdc,
    tdc_update,
    tdrc_update,
    td_update,
    vtrace_update,
)
from tdlab.mdp import FeatureMap, Transition, make_rng, sample_trajectory
from tdlab.oracle import compute_oracle
from tdlab.window import TransitionWindow

ONE = FeatureMap(np.ones((1, 1)))
LOOP = Transition(0, 0, 1.0, 0, 1.0)


def test_td_hand_step():
    st_ = step_offpolicy_td(LearnerState.zeros(1), LOOP, 0.1, ONE, 0.0)
    np.testing.assert_array_equal(st_.w, [0.1])
    assert st_.t == 1 and not st_.diverged


def test_td_fixed_point_gives_zero_update():
    # 1-state loop with gamma = 0.5 and R = 1: w* = 1 / (1 - 0.5) = 2
    state = LearnerState.zeros(1, w_init=[2.0])
    out = step_offpolicy_td(state, LOOP, 0.3, ONE, 0.5)
    np.testing.assert_array_equal(out.w, [2.0])


def test_divergence_flag():
    state = LearnerState(w=np.array([1.0]), guard=10.0)
    out = step_offpolicy_td(state, Transition(0, 0, 100.0, 0, 1.0), 1.0, ONE, 0.0)
    assert out.diverged


def test_gtd_two_step_hand_simulation():
    state = LearnerState.zeros(1, aux=True)
    s1 = step_gtd(state, LOOP, 0.5, ONE, 0.0)
    np.testing.assert_array_equal(s1.nu_aux, [0.5])
    np.testing.assert_array_equal(s1.w, [0.0])
    s2 = step_gtd(s1, LOOP, 0.5, ONE, 0.0)
    np.testing.assert_array_equal(s2.nu_aux, [0.75])
    np.testing.assert_array_equal(s2.w, [0.25])


def test_gtd_needs_aux():
    with pytest.raises(ConfigError):
        step_gtd(LearnerState.zeros(1), LOOP, 0.5, ONE, 0.0)


def _random_sample(seed, n=7, K=4, rho=None):
    rng = make_rng(seed, "sample")
    r = rng.normal(size=n)
    rho = rng.uniform(0, 3, size=n) if rho is None else np.full(n, rho)
    return Sample(
        rng.normal(size=(n, K)), r, rng.normal(size=(n, K)), rho,
        rng.normal(size=(n, K)), rng.normal(size=(n, K)), rng.uniform(0, 3, size=n),
    ), rng.normal(size=(n, K)), rng.normal(size=(n, K))


def test_gtd_family_first_step_with_zero_aux():
    s, w, _ = _random_sample(0)
    h0 = np.zeros_like(w)
    w_gtd2, _ = ALGOS["gtd2"].update(w, h0, s, 0.1, 0.9)
    np.testing.assert_array_equal(w_gtd2, w)
    w_gtd, _ = ALGOS["gtd"].update(w, h0, s, 0.1, 0.9)
    np.testing.assert_array_equal(w_gtd, w)
    w_tdc, _ = tdc_update(w, h0, s, 0.1, 0.9)
    w_td, _ = td_update(w, None, s, 0.1, 0.9)
    np.testing.assert_allclose(w_tdc, w_td, rtol=0, atol=1e-15)


def test_gtd2_tdc_fixed_point_zero_update():
    state = LearnerState(w=np.array([2.0]), nu_aux=np.zeros(1))
    for step in (step_gtd2, step_tdc):
        out = step(state, LOOP, 0.4, ONE, 0.5)
        np.testing.assert_array_equal(out.w, [2.0])
        np.testing.assert_array_equal(out.nu_aux, [0.0])


def test_tdrc_zero_reg_is_tdc():
    s, w, h = _random_sample(1)
    a = tdrc_update(w, h, s, 0.05, 0.9, reg=0.0)
    b = tdc_update(w, h, s, 0.05, 0.9)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_tdrc_regularises_aux():
    s, w, h = _random_sample(1)
    _, h_reg = tdrc_update(w, h, s, 0.05, 0.9, reg=1.0)
    _, h_tdc = tdc_update(w, h, s, 0.05, 0.9)
    np.testing.assert_allclose(h_reg, h_tdc - 0.05 * h, atol=1e-15)


def test_vtrace_clips_ratio():
    s, w, _ = _random_sample(2, rho=3.0)
    clipped, _ = vtrace_update(w, None, s, 0.1, 0.9)
    unit, _ = td_update(w, None, s._replace(rho=np.ones(7)), 0.1, 0.9)
    np.testing.assert_array_equal(clipped, unit)


def test_on_policy_extended_baselines_equal_td_bitwise():
    inst = make_boyan()
    X, gamma = inst.X, inst.mdp.discount
    traj = sample_trajectory(inst.mdp, inst.mu, inst.pi, 0, 500, make_rng(0, "onpolicy"))
    td = LearnerState.zeros(4)
    others = {k: LearnerState.zeros(4, aux=k == "htd") for k in ("htd", "vtrace")}
    for t in range(500):
        tr = traj.transition(t)
        assert tr.rho == 1.0
        td = step_offpolicy_td(td, tr, 0.05, X, gamma)
        for k in others:
            others[k] = step_extended_baselines(k, others[k], tr, 0.05, X, gamma)
            np.testing.assert_array_equal(others[k].w, td.w)


def test_htd_reduces_to_td_when_rho_is_one():
    s, w, h = _random_sample(3, rho=1.0)
    np.testing.assert_array_equal(htd_update(w, h, s, 0.1, 0.9)[0], td_update(w, h, s, 0.1, 0.9)[0])


def test_extended_unknown_kind():
    with pytest.raises(ConfigError):
        step_extended_baselines("etd", LearnerState.zeros(1), LOOP, 0.1, ONE, 0.0)


def test_attd_zero_gap_form():
    s, w, _ = _random_sample(4)
    g = 0.9
    s0 = s._replace(xk=s.x, xk1=s.xn, rhok=s.rho)
    inc = attd_increment(w, s0, g)
    for i in range(7):
        x, xn, rho = s.x[i], s.xn[i], s.rho[i]
        delta = s.r[i] + g * xn @ w[i] - x @ w[i]
        expected = rho**2 * np.outer(x - g * xn, x) @ x * delta
        np.testing.assert_allclose(inc[i], expected, rtol=1e-12, atol=1e-12)


def test_attd_matches_outer_product_form():
    s, w, _ = _random_sample(5)
    g = 0.95
    inc = attd_increment(w, s, g)
    for i in range(7):
        delta = s.r[i] + g * s.xn[i] @ w[i] - s.x[i] @ w[i]
        M = s.rhok[i] * np.outer(s.xk[i] - g * s.xk1[i], s.xk[i])
        np.testing.assert_allclose(inc[i], M @ (s.rho[i] * delta * s.x[i]), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("f", [0, 1, 5])
def test_attd_one_state_any_gap(f):
    win = TransitionWindow(1)
    for _ in range(f + 2):
        win.push([1.0], 1.0, 1.0)
    out = step_attd(LearnerState.zeros(1), win, f, 0.1, 0.0)
    np.testing.assert_allclose(out.w, [0.1], rtol=1e-15)


def test_projection_examples():
    np.testing.assert_array_equal(project_ball([3.0, 4.0], 10.0), [3.0, 4.0])
    np.testing.assert_allclose(project_ball([3.0, 4.0], 1.0), [0.6, 0.8], rtol=1e-15)
    np.testing.assert_array_equal(project_ball([3.0, 4.0], np.inf), [3.0, 4.0])
    with pytest.raises(ConfigError):
        project_ball([1.0], 0.0)


@settings(max_examples=100, deadline=None)
@given(
    arrays(np.float64, st.integers(1, 6), elements=st.floats(-1e6, 1e6)),
    st.floats(1e-3, 1e3),
)
def test_projection_properties(v, B):
    p = project_ball(v, B)
    assert np.linalg.norm(p) <= B * (1 + 1e-12)
    np.testing.assert_allclose(project_ball(p, B), p, rtol=1e-12, atol=1e-300)
    if np.linalg.norm(v) <= B:
        np.testing.assert_array_equal(p, v)


def _stream_window(inst, n, seed):
    traj = sample_trajectory(inst.mdp, inst.mu, inst.pi, 0, n, make_rng(seed, "proj"))
    win = TransitionWindow(inst.n_features)
    for t in range(n):
        win.push(inst.X.X[traj.states[t]], traj.rho[t], traj.rewards[t])
    return win


def test_projected_infinite_radius_matches_plain():
    inst = make_random(0, 4, 2, 3, 0.9)
    win = _stream_window(inst, 400, 0)
    a = b = LearnerState.zeros(3)
    for t in range(300):
        a = step_attd(a, win, 7, 0.05, 0.9)
        b = step_projected_attd(b, win, 7, 0.05, 0.9, np.inf)
        np.testing.assert_array_equal(a.w, b.w)


def test_projected_stays_in_ball_and_warns():
    inst = make_random(1, 4, 2, 3, 0.9)
    oq = compute_oracle(inst.mdp, inst.pi, inst.mu, inst.X)
    win = _stream_window(inst, 400, 1)
    B = 0.5 * np.linalg.norm(oq.w_star)
    state = LearnerState.zeros(3)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for t in range(300):
            state = step_projected_attd(state, win, 7, 1.0, 0.9, B, w_star=oq.w_star)
            assert np.linalg.norm(state.w) <= B * (1 + 1e-12)
    assert any("projection radius" in str(c.message) for c in caught)


@pytest.mark.parametrize("K", [8, 64, 512])
def test_mac_counts_linear(K):
    rng = make_rng(K, "macs")
    args = [rng.normal(size=K), rng.normal(size=K), 0.3, rng.normal(size=K), 2.0,
            rng.normal(size=K), rng.normal(size=K), 0.5]
    inc, macs = attd_increment_counted(*args, 0.9)
    assert macs == 5 * K + 4
    w, x, r, xn, rho, xk, xk1, rhok = args
    s = Sample(x, np.float64(r), xn, np.float64(rho), xk, xk1, np.float64(rhok))
    np.testing.assert_allclose(inc, attd_increment(w, s, 0.9), rtol=1e-12, atol=1e-12)
    if K <= 64:
        naive, naive_macs = attd_increment_naive_counted(*args, 0.9)
        np.testing.assert_allclose(naive, inc, rtol=1e-10, atol=1e-12)
        assert naive_macs > K * K


def test_mac_ratio_tracks_feature_ratio():
    counts = {}
    for K in (8, 64, 512):
        z = np.ones(K)
        counts[K] = attd_increment_counted(z, z, 0.0, z, 1.0, z, z, 1.0, 0.9)[1]
    assert counts[512] / counts[64] <= 1.2 * 8
    assert counts[64] / counts[8] <= 1.2 * 8


def test_registry():
    assert set(ALGOS) == {"td", "vtrace", "gtd", "gtd2", "tdc", "tdrc", "htd", "attd", "pattd"}
    assert get_algo("attd").uses_gap and get_algo("pattd").projected
    with pytest.raises(ConfigError):
        get_algo("q")


def test_learner_state_shape_check():
    with pytest.raises(ConfigError):
        LearnerState.zeros(3, w_init=[1.0, 2.0])
