import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from advdyn.core import ModelParams, smooth_step
from advdyn.models import (AlphaState, EXPONENT_CAP, alpha_forced_autonomous_rhs,
                           alpha_integro_rhs, alpha_linear_rhs, alpha_overflow,
                           contributor_rhs, linear_characteristic_discriminant,
                           perturbation_from_alpha, perturbation_rhs,
                           reduced_contributor_rhs, reduced_supporter_rhs, supporter_rhs)

pop = st.floats(1e-3, 30.0, allow_nan=False)
coef = st.floats(0.0, 20.0, allow_nan=False)
capf = st.floats(0.05, 20.0, allow_nan=False)


# -- supporter model -----------------------------------------------------------

def test_supporter_hand_value():
    p = ModelParams(lethality_R=1, lethality_B=1, capacity_R=2, capacity_B=2)
    d = supporter_rhs([2, 1, 1, 1, 3], p)
    np.testing.assert_allclose(d, [-0.5, -1.0, 1.5, 0.0, -1.5], atol=1e-12)


def test_supporter_hand_value_independent():
    # B' = -kL_R g/(gamma+1) R, R' = -kL_B gamma/(g+1) B,
    # g' = g Gamma R (1 - R/kC_R), gamma' = gamma Gamma B (1 - B/kC_B)
    p = ModelParams(lethality_R=2.5, lethality_B=0.5, capacity_R=3.0, capacity_B=0.7)
    B, R, g, ga, G = 1.3, 2.2, 0.4, 1.7, 2.9
    exp = [-2.5 * g / (ga + 1) * R, -0.5 * ga / (g + 1) * B,
           g * G * R * (1 - R / 3.0), ga * G * B * (1 - B / 0.7)]
    exp.append(-exp[2] - exp[3])
    np.testing.assert_allclose(supporter_rhs([B, R, g, ga, G], p), exp, rtol=1e-12)


@given(pop, pop, coef, coef, coef, coef, coef, capf, capf)
def test_supporter_green_conserved(B, R, g, ga, G, kl1, kl2, kc1, kc2):
    p = ModelParams(lethality_R=kl1, lethality_B=kl2, capacity_R=kc1, capacity_B=kc2)
    d = supporter_rhs([B, R, g, ga, G], p)
    assert d[2] + d[3] + d[4] == 0.0


@given(pop, pop, coef, coef, capf, capf)
def test_supporter_no_support_no_attrition(B, R, G, kl, kc1, kc2):
    p = ModelParams(lethality_R=kl, lethality_B=kl, capacity_R=kc1, capacity_B=kc2)
    d = supporter_rhs([B, R, 0.0, 0.0, G], p)
    assert d[0] == 0.0 and d[1] == 0.0


@given(pop, pop, coef, coef, capf)
def test_supporter_symmetric_manifold(B, g, G, kl, kc):
    p = ModelParams(lethality_R=kl, lethality_B=kl, capacity_R=kc, capacity_B=kc)
    d = supporter_rhs([B, B, g, g, G], p)
    assert d[0] == d[1]
    assert d[2] == d[3]


@given(pop, pop, pop, pop, coef, coef, coef, capf, capf)
def test_supporter_relabeling(B, R, g, ga, G, kl1, kl2, kc1, kc2):
    p = ModelParams(lethality_R=kl1, lethality_B=kl2, capacity_R=kc1, capacity_B=kc2)
    d = supporter_rhs([B, R, g, ga, G], p)
    ds = supporter_rhs([R, B, ga, g, G], p.swapped())
    np.testing.assert_allclose(ds, d[[1, 0, 3, 2, 4]], rtol=1e-12, atol=1e-12)


@settings(max_examples=200)
@given(pop, pop, coef, capf)
def test_supporter_matches_reduced_on_manifold(B, g, kl, kc):
    G0 = 2 * g + 1.0
    p = ModelParams(lethality_R=kl, lethality_B=kl, capacity_R=kc, capacity_B=kc)
    d = supporter_rhs([B, B, g, g, G0 - 2 * g], p)
    r = reduced_supporter_rhs([B, g], kl, kc, G0)
    np.testing.assert_allclose([d[0], d[2]], r, rtol=1e-6, atol=1e-6)


def test_supporter_rejects_nonfinite():
    with pytest.raises(ValueError):
        supporter_rhs([np.nan, 1, 1, 1, 1], ModelParams())


# -- contributor model ---------------------------------------------------------

def test_contributor_hand_value():
    p = ModelParams(transfer_B=1, transfer_R=1, capacity_R=10, capacity_B=10)
    d = contributor_rhs([20, 20, 10, 10, 10], p)
    np.testing.assert_allclose(d, [-10, -10, -2010, -2010, 4000], rtol=1e-12)


def test_contributor_hand_value_independent():
    # B' = -R + kT_B gamma, R' = -B + kT_R g,
    # g' = g Gamma R (1 - R/kC_R) - kT_R g, gamma' = gamma Gamma B (1 - B/kC_B) - kT_B gamma
    p = ModelParams(transfer_B=0.3, transfer_R=1.9, capacity_R=1.1, capacity_B=4.0)
    B, R, g, ga, G = 2.0, 0.6, 1.4, 0.8, 3.3
    fg, fga = g * G * R * (1 - R / 1.1), ga * G * B * (1 - B / 4.0)
    exp = [-R + 0.3 * ga, -B + 1.9 * g, fg - 1.9 * g, fga - 0.3 * ga, -fg - fga]
    np.testing.assert_allclose(contributor_rhs([B, R, g, ga, G], p), exp, rtol=1e-12)


@given(pop, pop, coef, coef, coef, coef, coef, capf, capf)
def test_contributor_green_decay_identity(B, R, g, ga, G, kt1, kt2, kc1, kc2):
    p = ModelParams(transfer_B=kt1, transfer_R=kt2, capacity_R=kc1, capacity_B=kc2)
    d = contributor_rhs([B, R, g, ga, G], p)
    decay = kt1 * ga * smooth_step(ga) + kt2 * g * smooth_step(g)
    assert d[2] + d[3] + d[4] + decay == pytest.approx(0.0, abs=1e-9 * (1 + abs(d).max()))


@given(pop, coef)
def test_contributor_sourceless_attrition(B, G):
    d = contributor_rhs([B, B, 0.0, 0.0, G], ModelParams())
    assert d[0] == d[1] == pytest.approx(-B * smooth_step(B))


@given(pop, pop, coef, coef, capf)
def test_contributor_symmetric_manifold(B, g, G, kt, kc):
    p = ModelParams(transfer_B=kt, transfer_R=kt, capacity_R=kc, capacity_B=kc)
    d = contributor_rhs([B, B, g, g, G], p)
    assert d[0] == d[1]
    assert d[2] == d[3]


@settings(max_examples=200)
@given(pop, pop, pop, coef, capf)
def test_contributor_matches_reduced_on_manifold(B, g, G, kt, kc):
    p = ModelParams(transfer_B=kt, transfer_R=kt, capacity_R=kc, capacity_B=kc)
    d = contributor_rhs([B, B, g, g, G], p)
    r = reduced_contributor_rhs([B, g, G], kt, kc)
    scale = 1 + np.abs(r).max()
    np.testing.assert_allclose([d[0], d[2], d[4]], r, atol=1e-6 * scale)


# -- reduced systems -----------------------------------------------------------

def test_reduced_supporter_examples():
    np.testing.assert_allclose(reduced_supporter_rhs([1.5, 1.0], 1.0, 1.5, 5.0), [-0.75, 0.0])
    np.testing.assert_array_equal(reduced_supporter_rhs([1.5, 0.0], 1.0, 1.5, 5.0), [0.0, 0.0])
    assert reduced_supporter_rhs([0.7, 2.5], 1.0, 1.5, 5.0)[1] == 0.0


def test_reduced_supporter_errors():
    with pytest.raises(ValueError):
        reduced_supporter_rhs([1.0, -1.0], 1.0, 1.0, 5.0)
    with pytest.raises(ValueError):
        reduced_supporter_rhs([1.0, 1.0], 1.0, 1.0, 0.0)


def test_reduced_contributor_examples():
    np.testing.assert_allclose(reduced_contributor_rhs([1, 3, 20], 1, 1), [2, -3, 0])
    np.testing.assert_allclose(reduced_contributor_rhs([2.5, 0, 7], 1.3, 0.4), [-2.5, 0, 0])
    d = reduced_contributor_rhs([0.8, 1.5, 4.0], 1.7, 0.8)
    assert d[2] == 0.0 and d[1] == pytest.approx(-1.7 * 1.5)


def test_perturbation_examples():
    np.testing.assert_allclose(perturbation_rhs([0, 3, 20], 1, 1), [2, -3, 0])
    # eps < 0: the flow part of g' (everything but -kT g) is positive
    assert perturbation_rhs([-0.1, 2, 5], 1.0, 1)[1] + 1.0 * 2 > 0
    assert perturbation_rhs([0.1, 2, 5], 1, 1)[2] > 0


@given(st.floats(-0.05, 0.05), st.floats(0.1, 5), st.floats(0.1, 30), coef, capf)
def test_perturbation_is_linearised_reduced(eps, g, G, kt, kc):
    r = reduced_contributor_rhs([kc + eps, g, G], kt, kc)
    q = perturbation_rhs([eps, g, G], kt, kc)
    assert q[0] == pytest.approx(r[0], abs=1e-12 * (1 + abs(r[0])))
    # flow terms differ by g Gamma eps^2 / kC only
    bound = g * G * eps * eps / kc
    assert abs(q[1] - r[1]) <= bound * (1 + 1e-9) + 1e-12
    assert abs(q[2] - r[2]) <= 2 * bound * (1 + 1e-9) + 1e-12


def test_perturbation_rejects_nonfinite():
    with pytest.raises(ValueError):
        perturbation_rhs([np.inf, 1, 1], 1, 1)


# -- alpha forms ---------------------------------------------------------------

def test_alpha_integro_initial_acceleration():
    d = alpha_integro_rhs([0, 0, 0], 1, 1, 3, 20)
    np.testing.assert_allclose(d, [0, 2, 0], atol=1e-12)


@given(coef.filter(lambda v: v > 0.01), capf, st.floats(0, 10), st.floats(0, 30))
def test_alpha_initial_acceleration_general(kt, kc, g0, G0):
    for rhs in (alpha_integro_rhs, alpha_forced_autonomous_rhs, alpha_linear_rhs):
        assert rhs([0, 0, 0], kt, kc, g0, G0)[1] == pytest.approx(kt * g0 - kc, abs=1e-9 * (1 + kt * G0))


def test_forced_autonomous_drops_memory_only():
    s = [0.1, -0.2, 0.3]
    a = alpha_integro_rhs(s, 1.0, 1.0, 3.0, 20.0, t=0.5)
    b = alpha_forced_autonomous_rhs(s, 1.0, 1.0, 3.0, 20.0, t=0.5)
    assert a[0] == b[0] and a[2] == b[2]
    # the memory term adds 2 q / kT to the exponent
    np.testing.assert_allclose((a[1] - b[1]),
                               -10 * (np.exp(0.04 + 0.2 + 0.6) - np.exp(0.04 + 0.2)), rtol=1e-12)


def test_forced_autonomous_no_forcing_is_homogeneous():
    d = alpha_forced_autonomous_rhs([0.2, 0.1, 0.0], 1.0, 0.0 + 1.0, 0.0, 0.0)
    np.testing.assert_allclose(d, [0.1, -1.0 - 2 * 0.1 - 0.2, 0.01])


def test_alpha_linear_coefficients():
    a, ad, t = 0.3, -0.4, 1.7
    kt, kc, g0, G0 = 1.5, 0.8, 3.0, 20.0
    d = alpha_linear_rhs([a, ad, 0.0], kt, kc, g0, G0, t=t)
    exp = kt * (g0 - kc * t) - kc - (kt + 1) * ad - (kt + kc * G0) * a
    assert d[1] == pytest.approx(exp)
    assert d[2] == pytest.approx(ad * ad)


def test_linear_homogeneous_frequency():
    D = linear_characteristic_discriminant(1, 1, 20)
    assert D < 0
    roots = np.roots([1, 2, 1 + 20])
    assert abs(roots[0].imag) == pytest.approx(np.sqrt(80) / 2)
    assert np.sqrt(-D) / 2 == pytest.approx(4.47213595, rel=1e-8)


@given(coef, capf, st.floats(0, 50))
def test_discriminant_sign_matches_roots(kt, kc, G0):
    D = linear_characteristic_discriminant(kt, kc, G0)
    assume(abs(D) > 1e-6)
    roots = np.roots([1, kt + 1, kt + kc * G0])
    assert (D < 0) == bool(np.any(np.abs(roots.imag) > 0))


def test_alpha_overflow_guard():
    guard = alpha_overflow(1.0, 1.0)
    assert not guard(0.0, np.array([[0.0, 0.0, 0.0]]))[0]
    assert guard(0.0, np.array([[0.0, 0.0, EXPONENT_CAP]]))[0]
    assert np.isfinite(alpha_integro_rhs([0, 0, 1e4], 1, 1, 3, 20)).all()


def test_alpha_state_invariant():
    with pytest.raises(ValueError):
        AlphaState(0.0, 0.0, -1.0)


def test_perturbation_from_alpha_at_start():
    np.testing.assert_allclose(perturbation_from_alpha(0.0, [0, 0, 0], 1, 1, 3, 20), [0, 3, 20])
