import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fvd.diffusion import build_linear_schedule
from fvd.priors import (
    GaussianMixture, default_two_mode_prior, eps_prediction, marginal_at_t, sample_prior,
)

SCHED = build_linear_schedule(200, 5e-4, 0.1)


def fd_eps(prior, x, t, h=1e-5):
    m = marginal_at_t(prior, t, SCHED)
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (m.log_pdf(x + e)[0] - m.log_pdf(x - e)[0]) / (2 * h)
    return -np.sqrt(1 - SCHED.alpha_bar[t]) * g


def test_validation():
    with pytest.raises(ValueError):
        GaussianMixture([0.5, 0.4], [[0.0], [1.0]], [[1.0], [1.0]])
    with pytest.raises(ValueError):
        GaussianMixture([1.0], [[0.0]], [[0.0]])
    with pytest.raises(ValueError):
        GaussianMixture([1.0], [[0.0]], [[1.0, 1.0]])


def test_marginal_identity_and_limit():
    p = default_two_mode_prior()
    assert marginal_at_t(p, 0, SCHED) is p
    far = marginal_at_t(p, 200, SCHED)
    np.testing.assert_allclose(far.means, 0, atol=0.02)
    np.testing.assert_allclose(far.variances, 1, atol=1e-4)


def test_marginal_hand_values():
    from fvd.diffusion import NoiseSchedule
    s = NoiseSchedule.from_betas([0.5])
    m = marginal_at_t(GaussianMixture([1.0], [[2.0]], [[0.25]]), 1, s)
    assert m.means[0, 0] == pytest.approx(np.sqrt(0.5) * 2)
    assert m.means[0, 0] == pytest.approx(1.4142, abs=1e-4)
    assert m.variances[0, 0] == pytest.approx(0.625)


def test_standard_normal_eps():
    p = GaussianMixture([1.0], [[0.0]], [[1.0]])
    x = np.array([[0.7], [-2.0]])
    for t in (1, 50, 200):
        np.testing.assert_allclose(eps_prediction(p, x, t, SCHED), np.sqrt(1 - SCHED.alpha_bar[t]) * x, atol=1e-14)


def test_symmetry_point():
    assert eps_prediction(default_two_mode_prior(), np.array([0.0]), 40, SCHED)[0] == 0.0


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        eps_prediction(default_two_mode_prior(), np.array([np.nan]), 3, SCHED)


def test_shape_preserved():
    p = default_two_mode_prior()
    assert eps_prediction(p, np.array([0.3]), 5, SCHED).shape == (1,)
    assert eps_prediction(p, np.zeros((4, 1)), 5, SCHED).shape == (4, 1)


@settings(max_examples=80, deadline=None)
@given(x=st.floats(-6, 6), t=st.integers(1, 200))
def test_eps_matches_finite_difference_1d(x, t):
    p = default_two_mode_prior()
    xs = np.array([x])
    ref = fd_eps(p, xs, t)
    got = eps_prediction(p, xs, t, SCHED)
    assert np.linalg.norm(got - ref) <= 1e-5 * max(np.linalg.norm(ref), 1e-3)


def test_eps_matches_finite_difference_2d():
    p = GaussianMixture([0.2, 0.8], [[-1.0, 2.0], [1.0, 0.0]], [[0.3, 1.2], [0.8, 0.4]])
    rng = np.random.default_rng(1)
    for _ in range(30):
        x, t = rng.normal(size=2) * 2, int(rng.integers(1, 201))
        ref = fd_eps(p, x, t)
        assert np.linalg.norm(eps_prediction(p, x, t, SCHED) - ref) <= 1e-5 * max(np.linalg.norm(ref), 1e-3)


def test_sampling_degenerate_and_frequencies():
    rng = np.random.default_rng(0)
    pin = GaussianMixture([1.0], [[1.5]], [[1e-300]])
    assert sample_prior(pin, rng)[0] == pytest.approx(1.5)
    two = GaussianMixture([0.5, 0.5], [[-3.0], [3.0]], [[1.0], [1.0]])
    xs = sample_prior(two, rng, 100_000)
    assert abs(np.mean(xs > 0) - 0.5) <= 0.01


def test_sampling_moments():
    xs = sample_prior(GaussianMixture([1.0], [[1.0]], [[4.0]]), np.random.default_rng(2), 100_000)
    assert abs(xs.mean() - 1) <= 0.02
    assert abs(xs.var() - 4) <= 0.1


def test_mixture_moments():
    p = default_two_mode_prior()
    assert p.mean()[0] == pytest.approx(0.0)
    assert p.marginal_variance()[0] == pytest.approx(4.25)
