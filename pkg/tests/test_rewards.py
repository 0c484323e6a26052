import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fvd.priors import GaussianMixture
from fvd.rewards import ClassLogitReward, QuadraticReward, TabulatedReward, eval_reward


def unit(mu):
    return GaussianMixture([1.0], [[mu]], [[1.0]])


def test_quadratic_peak_and_value():
    r = QuadraticReward([2.0], 1.0)
    assert eval_reward(r, [2.0]) == 0.0
    assert eval_reward(r, [0.0]) == pytest.approx(-2.0)
    assert r(np.array([[2.0], [3.0]])).tolist() == [0.0, -0.5]


def test_single_class_is_zero():
    r = ClassLogitReward([unit(0.0)], [1.0], 0)
    assert np.all(r(np.linspace(-5, 5, 11)[:, None]) == 0.0)


def test_symmetric_two_class():
    r = ClassLogitReward([unit(-1.0), unit(1.0)], [0.5, 0.5], 1)
    assert eval_reward(r, [0.0]) == pytest.approx(math.log(0.5), abs=1e-15)


def test_class_logit_far_tail_stays_finite():
    r = ClassLogitReward([unit(-1.0), unit(1.0)], [0.5, 0.5], 1)
    v = eval_reward(r, [-60.0])
    assert np.isfinite(v) and v == pytest.approx(-120.0 - math.log(1 + math.exp(-120)), rel=1e-12)


@settings(max_examples=150, deadline=None)
@given(x=st.floats(-30, 30), p=st.floats(0.05, 0.95), c=st.integers(0, 1))
def test_class_logit_is_log_posterior(x, p, c):
    classes = [unit(-1.5), unit(1.5)]
    r = ClassLogitReward(classes, [p, 1 - p], c)
    v = eval_reward(r, [x])
    assert v <= 0
    # independent two-class Bayes rule in logit form
    logit = math.log(p / (1 - p)) + (-(x + 1.5) ** 2 + (x - 1.5) ** 2) / 2
    ref = -math.log1p(math.exp(-logit)) if logit > -700 else logit
    ref = ref if c == 0 else (-math.log1p(math.exp(logit)) if logit < 700 else -logit)
    assert v == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_tabulated():
    r = TabulatedReward([0.0, 1.0, 2.0], [0.0, -1.0, 0.5])
    assert r(np.array([[-3.0], [0.5], [1.5], [9.0]])).tolist() == [0.0, -0.5, -0.25, 0.5]
    with pytest.raises(ValueError):
        TabulatedReward([0.0, 0.0], [1.0, 2.0])


@pytest.mark.parametrize("reward", [
    QuadraticReward([0.0], 1.0),
    ClassLogitReward([unit(0.0)], [1.0], 0),
    TabulatedReward([0.0, 1.0], [0.0, 1.0]),
])
def test_nonfinite_rejected(reward):
    with pytest.raises(ValueError):
        eval_reward(reward, [np.inf])


def test_validation():
    with pytest.raises(ValueError):
        QuadraticReward([0.0], 0.0)
    with pytest.raises(ValueError):
        ClassLogitReward([unit(0.0), unit(1.0)], [0.5, 0.5], 2)
