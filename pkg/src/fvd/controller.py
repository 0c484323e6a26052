"""Robbins-Monro adaptation of the alignment strength toward a target absorption rate."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class ControllerState:
    lam: float = 1.0
    alpha_star: float = 0.5
    eta0: float = 0.5
    gamma: float = 0.1
    k: int = 0
    lambda_min: float = 0.0
    lambda_max: float = 10.0
    delta_floor: float = 1e-3
    enabled: bool = True

    def __post_init__(self):
        if not 0 < self.alpha_star < 1:
            raise ValueError(f"alpha_star must lie in (0, 1), got {self.alpha_star}")
        if not self.eta0 > 0 or self.gamma < 0 or self.delta_floor < 0 or self.k < 0:
            raise ValueError("need eta0 > 0, gamma >= 0, delta_floor >= 0, k >= 0")
        if not self.lambda_min <= self.lam <= self.lambda_max:
            raise ValueError(
                f"lambda={self.lam} outside clip bounds [{self.lambda_min}, {self.lambda_max}]"
            )


def learning_rate(state: ControllerState) -> float:
    """``eta_k = eta0 / (1 + gamma * k)``."""
    return state.eta0 / (1.0 + state.gamma * state.k)


def rm_update(state: ControllerState, alpha_t: float, log_potential_std: float) -> ControllerState:
    """One gated, clipped Robbins-Monro step.

    Too many deaths (``alpha_t > alpha_star``) lowers lambda. When the
    controller is disabled or the log-potential spread is below the floor the
    state is returned untouched.
    """
    if not 0.0 <= alpha_t <= 1.0:
        raise ValueError(f"alpha_t must lie in [0, 1], got {alpha_t}")
    if log_potential_std < 0:
        raise ValueError("log_potential_std must be >= 0")
    if not state.enabled or log_potential_std < state.delta_floor:
        return state
    lam = state.lam - learning_rate(state) * (alpha_t - state.alpha_star)
    lam = float(np.clip(lam, state.lambda_min, state.lambda_max))
    return replace(state, lam=lam, k=state.k + 1)
