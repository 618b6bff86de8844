import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from advdyn.core import ModelParams
from advdyn.integrator import (IntegratorConfig, Termination, Trajectory, detect_extinction,
                               integrate, integrate_batch)
from advdyn.models import contributor_field, supporter_field


def decay(t, y):
    return -y


def oscillator(t, y):
    return np.stack([y[..., 1], -y[..., 0]], axis=-1)


def lotka_volterra(t, y):
    x, z = y[..., 0], y[..., 1]
    return np.stack([1.5 * x - x * z, -3 * z + x * z], axis=-1)


def test_config_validation():
    for kw in ({"rel_tol": 0}, {"abs_tol": -1}, {"t_end": 0}, {"sample_interval": np.nan},
               {"max_step": 0}, {"max_steps": 0}):
        with pytest.raises(ValueError):
            IntegratorConfig(**kw)


def test_sample_grid():
    cfg = IntegratorConfig(t_end=1.0, sample_interval=0.1)
    t = cfg.sample_times()
    assert len(t) == 11 and t[-1] == 1.0
    t = IntegratorConfig(t_end=1.05, sample_interval=0.1).sample_times()
    assert t[-1] == 1.05 and t[-2] == pytest.approx(1.0)


def test_exponential_decay():
    tr = integrate(decay, [1.0], IntegratorConfig(t_end=1.0))
    assert tr.termination == Termination.REACHED_T_END
    assert tr.final_time == 1.0
    assert abs(tr.final_state[0] - np.exp(-1)) <= 10 * 1e-6 * np.exp(-1)
    np.testing.assert_allclose(tr.states[:, 0], np.exp(-tr.times), rtol=1e-5)


def test_harmonic_oscillator_samples():
    tr = integrate(oscillator, [1.0, 0.0], IntegratorConfig(t_end=20.0, rel_tol=1e-9, abs_tol=1e-12))
    np.testing.assert_allclose(tr.states[:, 0], np.cos(tr.times), atol=1e-7)
    np.testing.assert_allclose(tr.states[:, 1], -np.sin(tr.times), atol=1e-7)


def test_against_scipy_oracle():
    cfg = IntegratorConfig(t_end=10.0, rel_tol=1e-8, abs_tol=1e-10)
    tr = integrate(lotka_volterra, [10.0, 5.0], cfg)
    ref = solve_ivp(lambda t, y: lotka_volterra(t, y[None])[0], (0, 10), [10.0, 5.0],
                    method="DOP853", rtol=1e-12, atol=1e-12, t_eval=tr.times)
    np.testing.assert_allclose(tr.states, ref.y.T, rtol=1e-5, atol=1e-6)


def test_supporter_against_scipy_oracle():
    p = ModelParams(lethality_R=1, lethality_B=1, capacity_R=2, capacity_B=2)
    f = supporter_field(p)
    cfg = IntegratorConfig(t_end=1.0)
    tr = integrate(f, [2, 1, 1, 1, 3], cfg)
    ref = solve_ivp(lambda t, y: f(t, y[None])[0], (0, 1), [2, 1, 1, 1, 3],
                    method="DOP853", rtol=1e-12, atol=1e-12, t_eval=tr.times)
    np.testing.assert_allclose(tr.states, ref.y.T, atol=1e-5)


def test_observed_order_at_least_four():
    # fixed steps: loose tolerances, step size set by the cap
    f = supporter_field(ModelParams(lethality_R=1, lethality_B=1, capacity_R=2, capacity_B=2))
    y0 = [2, 1, 1, 1, 3]
    ref = solve_ivp(lambda t, y: f(t, y[None])[0], (0, 1), y0, method="DOP853",
                    rtol=1e-13, atol=1e-13).y[:, -1]
    errs = []
    for h in (0.1, 0.05, 0.025):
        cfg = IntegratorConfig(t_end=1.0, max_step=h, rel_tol=1.0, abs_tol=1.0, sample_interval=0.1)
        tr = integrate(f, y0, cfg)
        assert tr.accepted_steps - round(1 / h) in (0, 1)  # last step may be a sliver
        errs.append(np.abs(tr.final_state - ref).max())
    assert errs[0] / errs[1] >= 4 and errs[1] / errs[2] >= 4


def test_tolerance_controls_error():
    tight = integrate(decay, [1.0], IntegratorConfig(t_end=5.0, rel_tol=1e-10, abs_tol=1e-12, max_step=5))
    loose = integrate(decay, [1.0], IntegratorConfig(t_end=5.0, rel_tol=1e-4, abs_tol=1e-6, max_step=5))
    exact = np.exp(-5.0)
    assert abs(tight.final_state[0] - exact) < abs(loose.final_state[0] - exact)
    assert tight.accepted_steps > loose.accepted_steps


def test_deterministic_bit_identical():
    p = ModelParams(transfer_B=1, transfer_R=1, capacity_R=1, capacity_B=10)
    a = integrate(contributor_field(p), [20, 20, 10, 10, 10], IntegratorConfig(t_end=5))
    b = integrate(contributor_field(p), [20, 20, 10, 10, 10], IntegratorConfig(t_end=5))
    assert np.array_equal(a.states, b.states) and np.array_equal(a.times, b.times)


def test_batch_rows_independent():
    # vectorised transcendental loops may differ from scalar ones in the last
    # bit, so rows agree with single runs to round-off, not bitwise
    p = ModelParams(lethality_R=np.array([1.0, 5.0, 10.0]), lethality_B=1.0,
                    capacity_R=np.array([0.5, 1.0, 2.0]), capacity_B=1.0)
    y0 = np.tile([1.5, 1.5, 1.0, 2.0, 3.0], (3, 1))
    cfg = IntegratorConfig(t_end=10)
    res = integrate_batch(supporter_field(p), y0, cfg)
    for i in range(3):
        pi = ModelParams(lethality_R=p.lethality_R[i], capacity_R=p.capacity_R[i])
        single = integrate(supporter_field(pi), y0[i], cfg)
        tr = res.trajectory(i)
        np.testing.assert_allclose(tr.states, single.states, rtol=1e-8, atol=1e-9)
        assert tr.accepted_steps == single.accepted_steps


def test_times_increasing_and_states_finite():
    p = ModelParams(lethality_R=10, lethality_B=1, capacity_R=0.5, capacity_B=1)
    tr = integrate(supporter_field(p), [1.5, 1.5, 1, 2, 3], IntegratorConfig())
    assert np.all(np.diff(tr.times) > 0)
    assert np.isfinite(tr.states).all()


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 20), st.floats(0.1, 20), st.floats(0.05, 3), st.floats(0.05, 3),
       st.floats(0.2, 3), st.floats(0.2, 3), st.booleans())
def test_positivity(k1, k2, c1, c2, B0, R0, contributor):
    if contributor:
        p = ModelParams(transfer_B=k1 / 10, transfer_R=k2 / 10, capacity_R=c1, capacity_B=c2)
        f = contributor_field(p)
    else:
        p = ModelParams(lethality_R=k1, lethality_B=k2, capacity_R=c1, capacity_B=c2)
        f = supporter_field(p)
    y0 = np.array([B0, R0, 1.0, 2.0, 3.0])
    tr = integrate(f, y0, IntegratorConfig(t_end=10))
    assert tr.states.min() >= -1e-6 * y0.sum()


def test_step_failure_reported():
    # y' = y**2 blows up at t = 1
    tr = integrate(lambda t, y: y * y, [1.0], IntegratorConfig(t_end=2.0))
    assert tr.termination in (Termination.STEP_FAILURE, Termination.DIVERGED)
    assert tr.final_time < 1.0 + 1e-6
    assert np.all(np.diff(tr.times) > 0)


def test_guard_marks_divergence():
    guard = lambda t, y: y[..., 0] > 10.0
    tr = integrate(lambda t, y: y, [1.0], IntegratorConfig(t_end=5.0), guard=guard)
    assert tr.termination == Termination.DIVERGED
    assert tr.final_time == pytest.approx(np.log(10), abs=0.1)


def test_stop_on_extinction():
    p = ModelParams(transfer_B=1, transfer_R=1, capacity_R=10, capacity_B=100)
    cfg = IntegratorConfig(t_end=50)
    full = integrate(contributor_field(p), [20, 20, 10, 10, 10], cfg)
    stop = integrate(contributor_field(p), [20, 20, 10, 10, 10], cfg, stop_on_extinction=True)
    assert full.termination == Termination.REACHED_T_END
    assert stop.termination == Termination.EXTINCTION_RED
    assert stop.final_time < 2.0
    t, side = detect_extinction(full)
    assert side == "red" and abs(t - stop.final_time) < 0.02


def test_stiff_switch_keeps_results_consistent():
    p = ModelParams(transfer_B=1.7, transfer_R=1.7, capacity_R=1.375, capacity_B=1.375)
    y0 = [1.3, 0.5, 1, 2, 3]
    a = integrate(contributor_field(p), y0, IntegratorConfig(t_end=1.0))
    b = integrate(contributor_field(p), y0, IntegratorConfig(t_end=1.0, stiff_switch=False))
    assert np.isfinite(a.stiff_switch_time)
    assert np.isnan(b.stiff_switch_time)
    assert a.accepted_steps < b.accepted_steps
    np.testing.assert_allclose(a.final_state, b.final_state, rtol=1e-5, atol=1e-7)


def test_detect_extinction_ramp():
    t = np.linspace(0, 4, 401)
    R = np.clip(1 - t / 2, 0, None) + 0.0
    states = np.column_stack([np.ones_like(t), R, t * 0, t * 0, t * 0])
    t_ext, side = detect_extinction(Trajectory(t, states), threshold=1e-3)
    assert side == "red" and t_ext == pytest.approx(2.0, abs=0.01)


def test_detect_extinction_none_and_errors():
    t = np.linspace(0, 1, 11)
    tr = Trajectory(t, np.ones((11, 5)))
    assert detect_extinction(tr) is None
    with pytest.raises(ValueError):
        detect_extinction(tr, threshold=0)


def test_trajectory_csv(tmp_path):
    tr = integrate(supporter_field(ModelParams()), [1, 1, 1, 1, 1], IntegratorConfig(t_end=0.05))
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "B", "R", "g", "gamma", "Gamma", "G_total"]
    assert len(rows) == len(tr) + 1
    assert float(rows[-1][0]) == 0.05
    assert float(rows[1][6]) == 3.0
