import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from advdyn.core import (ModelParams, PopulationState, SmoothStepParams, smooth_step,
                         support_modulation)

pos = st.floats(0.0, 50.0, allow_nan=False)
cap = st.floats(1e-3, 50.0, allow_nan=False)


def test_smooth_step_matches_mpmath():
    p = SmoothStepParams()
    for x in [0.0, 1e-6, 3.9e-6, 4e-6, 4.2e-6, 1e-5, 0.5, 20.0]:
        a = mp.mpf(p.steepness)
        ref = 0.5 * (mp.tanh(a * (mp.mpf(x) - 4 / a)) + 1)
        assert smooth_step(x, p) == pytest.approx(float(ref), abs=1e-15)


def test_smooth_step_half_at_threshold():
    p = SmoothStepParams()
    assert smooth_step(p.threshold, p) == pytest.approx(0.5)
    assert p.threshold == pytest.approx(4e-6)


@given(st.floats(-1.0, 100.0, allow_nan=False))
def test_smooth_step_bounded_and_monotone(x):
    v = smooth_step(x)
    assert 0.0 <= v <= 1.0
    assert smooth_step(x + 1e-7) >= v


def test_smooth_step_broadcasts():
    x = np.linspace(0, 1, 7)
    assert smooth_step(x).shape == (7,)


@pytest.mark.parametrize("kw", [{"steepness": 0}, {"steepness": -1},
                                {"extinction_offset_scale": 0}])
def test_smooth_step_params_reject(kw):
    with pytest.raises(ValueError):
        SmoothStepParams(**kw)


def test_support_modulation_values():
    assert support_modulation(1.0, 1.0) == pytest.approx(0.5)
    assert support_modulation(0.0, 5.0) == 0.0
    np.testing.assert_allclose(support_modulation(np.array([2.0, 3.0]), 1.0, 1.0), [1.0, 1.5])


def test_support_modulation_rejects_nonpositive_denominator():
    with pytest.raises(ValueError):
        support_modulation(1.0, -1.0)


@pytest.mark.parametrize("name,value", [("lethality_R", -1.0), ("transfer_B", np.nan),
                                        ("capacity_R", 0.0), ("capacity_B", -2.0),
                                        ("standing_population", 1e-9)])
def test_model_params_validation(name, value):
    with pytest.raises(ValueError):
        ModelParams(**{name: value})


def test_model_params_accepts_arrays():
    p = ModelParams(capacity_R=np.array([0.5, 1.0]))
    assert p.capacity_R.shape == (2,)
    with pytest.raises(ValueError):
        ModelParams(capacity_R=np.array([0.5, 0.0]))


def test_model_params_dict_round_trip():
    p = ModelParams(lethality_R=3.0, capacity_B=0.7, step=SmoothStepParams(1e5, 2.0))
    assert ModelParams.from_dict(p.to_dict()) == p


def test_model_params_unknown_key():
    with pytest.raises(KeyError, match="lethality_X"):
        ModelParams.from_dict({"lethality_X": 1.0})


@given(pos, pos, pos, pos, cap, cap)
def test_params_swap_is_involution(a, b, c, d, e, f):
    p = ModelParams(a, b, c, d, e, f)
    assert p.swapped().swapped() == p
    assert p.swapped().lethality_R == p.lethality_B
    assert p.swapped().capacity_B == p.capacity_R
    assert p.swapped().transfer_R == p.transfer_B


def test_population_state_validation():
    PopulationState(0, -5e-7, 0, 0, 0)
    with pytest.raises(ValueError):
        PopulationState(-1e-3, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        PopulationState(np.inf, 0, 0, 0, 0)


@given(st.lists(pos, min_size=5, max_size=5))
def test_population_state_array_round_trip(v):
    s = PopulationState.from_array(v)
    np.testing.assert_array_equal(np.asarray(s), v)
    assert s.swapped().swapped() == s
    assert s.total_green() == pytest.approx(v[2] + v[3] + v[4])


def test_population_state_from_array_shape():
    with pytest.raises(ValueError):
        PopulationState.from_array([1, 2, 3])
