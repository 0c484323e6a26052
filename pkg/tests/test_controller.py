import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fvd.controller import ControllerState, learning_rate, rm_update


def test_learning_rate():
    assert learning_rate(ControllerState()) == 0.5
    assert learning_rate(ControllerState(gamma=0.0, k=40)) == 0.5
    assert learning_rate(ControllerState(eta0=0.5, gamma=0.1, k=5)) == pytest.approx(1 / 3)


def test_update_examples():
    s = ControllerState(lam=1.0, alpha_star=0.5, eta0=0.5, gamma=0.1)
    same = rm_update(s, 0.5, 1.0)
    assert same.lam == 1.0 and same.k == 1
    assert rm_update(s, 0.7, 1.0).lam == pytest.approx(0.9)
    low = ControllerState(lam=0.05, lambda_min=0.0)
    assert rm_update(low, 1.0, 1.0).lam == 0.0


def test_gating():
    s = ControllerState()
    assert rm_update(s, 0.9, 1e-6) is s
    off = ControllerState(enabled=False)
    assert rm_update(off, 0.9, 1.0) is off


def test_validation():
    with pytest.raises(ValueError):
        ControllerState(alpha_star=1.0)
    with pytest.raises(ValueError):
        ControllerState(lam=11.0)
    with pytest.raises(ValueError):
        rm_update(ControllerState(), 1.5, 1.0)


@settings(max_examples=200, deadline=None)
@given(alphas=st.lists(st.floats(0, 1), min_size=1, max_size=60), stds=st.floats(0, 2))
def test_lambda_stays_clipped(alphas, stds):
    s = ControllerState(lam=1.0, lambda_min=0.2, lambda_max=3.0)
    for a in alphas:
        s = rm_update(s, a, stds)
        assert 0.2 <= s.lam <= 3.0


@settings(max_examples=100, deadline=None)
@given(a=st.floats(0, 1), lam=st.floats(0.5, 9.5))
def test_update_direction(a, lam):
    s = ControllerState(lam=lam)
    new = rm_update(s, a, 1.0).lam
    assert np.sign(s.lam - new) == np.sign(a - s.alpha_star) or new in (s.lambda_min, s.lambda_max)
