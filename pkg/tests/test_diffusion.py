import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fvd.diffusion import (
    NoiseSchedule, ScheduleError, build_linear_schedule, ddim_sigma, ddim_step, scaled_linear_bounds,
    tweedie_estimate,
)

# Golden constants from an independent 40-digit mpmath evaluation.
ALPHA_BAR_1000 = 4.0358297653756833e-5
DDIM_T2_X1 = 0.98247229052970838
SIGMA_T2_ETA1 = 0.22941573387056177


def test_single_step_schedule():
    s = build_linear_schedule(1, 0.5, 0.5)
    assert s.beta[1:].tolist() == [0.5]
    assert s.alpha_bar.tolist() == [1.0, 0.5]


def test_constant_beta_products():
    s = NoiseSchedule.from_betas([0.1, 0.1])
    np.testing.assert_allclose(s.alpha_bar, [1.0, 0.9, 0.81], rtol=0, atol=1e-15)


def test_thousand_step_golden():
    s = build_linear_schedule(1000, 1e-4, 0.02)
    assert np.all(np.diff(s.alpha_bar) < 0)
    assert s.alpha_bar[-1] < 0.01
    assert s.alpha_bar[-1] == pytest.approx(ALPHA_BAR_1000, rel=1e-10)


@pytest.mark.parametrize("lo,hi", [(0.0, 0.02), (0.02, 0.01), (1e-4, 1.0), (-1e-4, 0.02)])
def test_bad_beta_bounds(lo, hi):
    with pytest.raises(ScheduleError):
        build_linear_schedule(10, lo, hi)


def test_scaled_bounds():
    lo, hi = scaled_linear_bounds(200)
    assert (lo, hi) == pytest.approx((5e-4, 0.1))
    assert build_linear_schedule(200, lo, hi).alpha_bar[-1] < 1e-4


def test_tweedie_examples():
    s = NoiseSchedule.from_betas([0.75])  # alpha_bar[1] = 0.25
    out = tweedie_estimate(np.array([1.0]), np.array([1.0]), 1, s)
    assert out[0] == pytest.approx((1 - np.sqrt(0.75)) / 0.5, abs=1e-15)
    assert out[0] == pytest.approx(0.2679, abs=1e-4)


def test_tweedie_inverts_forward():
    s = build_linear_schedule(50)
    rng = np.random.default_rng(0)
    x0, e = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    t = 30
    ab = s.alpha_bar[t]
    xt = np.sqrt(ab) * x0 + np.sqrt(1 - ab) * e
    np.testing.assert_allclose(tweedie_estimate(xt, e, t, s), x0, atol=1e-12)


def test_tweedie_corrupt_schedule():
    s = NoiseSchedule.from_betas([0.5])
    object.__setattr__(s, "alpha_bar", np.array([1.0, 0.0]))
    with pytest.raises(ScheduleError):
        tweedie_estimate(np.ones(1), np.ones(1), 1, s)


def test_sigma():
    s = NoiseSchedule.from_betas([0.1, 0.1])
    assert ddim_sigma(2, 0.0, s) == 0.0
    assert ddim_sigma(2, 1.0, s) == pytest.approx(SIGMA_T2_ETA1, rel=1e-14)
    with pytest.raises(ScheduleError):
        ddim_sigma(0, 0.5, s)
    with pytest.raises(ScheduleError):
        ddim_sigma(1, 1.5, s)


def test_ddim_golden_and_noise_independence():
    s = NoiseSchedule.from_betas([0.1, 0.1])
    a = ddim_step(np.array([1.0]), np.array([0.5]), 2, 0.0, np.array([3.0]), s)
    b = ddim_step(np.array([1.0]), np.array([0.5]), 2, 0.0, None, s)
    assert a[0] == b[0]
    assert a[0] == pytest.approx(DDIM_T2_X1, rel=1e-14)


def test_last_step_is_tweedie():
    s = build_linear_schedule(10)
    x, e = np.array([0.3, -1.2]), np.array([0.1, 0.4])
    assert np.array_equal(ddim_step(x, e, 1, 0.0, None, s), tweedie_estimate(x, e, 1, s))


def test_incompatible_eta_detected():
    # sigma can exceed 1 - alpha_bar[t-1] only for a non-monotone alpha_bar
    s = NoiseSchedule(T=2, beta=np.array([0.0, 0.5, 0.9]), alpha_bar=np.array([1.0, 0.01, 0.9]))
    with pytest.raises(ScheduleError):
        ddim_step(np.ones(1), np.ones(1), 2, 1.0, np.zeros(1), s)


@settings(max_examples=60, deadline=None)
@given(T=st.integers(1, 300), lo=st.floats(1e-5, 0.05), span=st.floats(0, 0.5))
def test_schedule_property(T, lo, span):
    s = build_linear_schedule(T, lo, lo + span)
    assert s.alpha_bar[0] == 1.0
    assert np.all(np.diff(s.alpha_bar) < 0)
    assert np.all(s.alpha_bar > 0)


@settings(max_examples=60, deadline=None)
@given(t=st.integers(1, 100), eta=st.floats(0, 1))
def test_sigma_respects_variance_budget(t, eta):
    s = build_linear_schedule(100, 5e-3, 0.2)
    sig = ddim_sigma(t, eta, s)
    assert 0 <= sig * sig <= 1 - s.alpha_bar[t - 1] + 1e-15


@pytest.mark.parametrize("T", [1, 5, 20, 21, 1000])
def test_scaled_bounds_valid_for_short_schedules(T):
    s = build_linear_schedule(T, *scaled_linear_bounds(T))
    assert np.all(s.alpha_bar[1:] > 0)
