"""Discrete-time noise schedules, the DDIM transition and the Tweedie estimate.

Timesteps count down from ``T`` to ``1``. ``alpha_bar[0]`` is fixed to 1 so the
last DDIM step lands exactly on the clean-sample estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ScheduleError(ValueError):
    """Raised for invalid schedule parameters or incompatible (schedule, eta) pairs."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule.

    ``beta`` has length ``T + 1`` with an unused ``beta[0] = 0`` slot so that
    ``beta[t]`` reads like the math; ``alpha_bar`` has length ``T + 1``.
    """

    T: int
    beta: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        alpha_bar = np.asarray(self.alpha_bar, dtype=np.float64)
        if self.T < 1:
            raise ScheduleError(f"T must be >= 1, got {self.T}")
        if beta.shape != (self.T + 1,) or alpha_bar.shape != (self.T + 1,):
            raise ScheduleError("beta and alpha_bar must both have length T + 1")
        if not np.all((beta[1:] > 0) & (beta[1:] < 1)):
            raise ScheduleError("beta[t] must lie in (0, 1) for t = 1..T")
        if alpha_bar[0] != 1.0:
            raise ScheduleError("alpha_bar[0] must be exactly 1")
        beta.setflags(write=False)
        alpha_bar.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha_bar", alpha_bar)

    @classmethod
    def from_betas(cls, betas) -> "NoiseSchedule":
        """Build a schedule from ``beta_1..beta_T``."""
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size == 0:
            raise ScheduleError("need a non-empty 1D sequence of betas")
        if not np.all((betas > 0) & (betas < 1)):
            raise ScheduleError("every beta must lie in (0, 1)")
        alpha_bar = np.empty(betas.size + 1)
        alpha_bar[0] = 1.0
        alpha_bar[1:] = np.cumprod(1.0 - betas)
        return cls(T=int(betas.size), beta=np.concatenate([[0.0], betas]), alpha_bar=alpha_bar)

    def _check_t(self, t: int, lo: int = 1) -> None:
        if not lo <= t <= self.T:
            raise ScheduleError(f"timestep {t} outside [{lo}, {self.T}]")


def build_linear_schedule(T: int = 200, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linearly spaced betas from ``beta_start`` to ``beta_end`` over ``t = 1..T``."""
    if T < 1:
        raise ScheduleError(f"T must be >= 1, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise ScheduleError(
            f"need 0 < beta_start <= beta_end < 1, got beta_start={beta_start}, beta_end={beta_end}"
        )
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, T))


def scaled_linear_bounds(T: int) -> tuple[float, float]:
    """The 1000-step ``[1e-4, 0.02]`` bounds rescaled by ``1000 / T``.

    Keeps ``alpha_bar[T]`` near zero for short schedules; at ``T = 200`` the
    unscaled bounds would leave ``alpha_bar[T]`` around 0.13. ``beta_end`` is
    capped at 0.999 so very short schedules (``T <= 20``) stay valid.
    """
    scale = 1000.0 / T
    return min(1e-4 * scale, 0.999), min(0.02 * scale, 0.999)


def tweedie_estimate(x_t, eps, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Posterior-mean reconstruction ``(x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t)``.

    Works on single states ``(d,)`` or batches ``(K, d)``.
    """
    sched._check_t(t)
    ab = sched.alpha_bar[t]
    if not ab > 0:
        raise ScheduleError(f"alpha_bar[{t}] = {ab} is not positive; schedule is corrupt")
    x_t = np.asarray(x_t, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x_t.shape != eps.shape:
        raise ValueError(f"shape mismatch: x_t {x_t.shape} vs eps {eps.shape}")
    return (x_t - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)


def ddim_sigma(t: int, eta: float, sched: NoiseSchedule) -> float:
    """Noise scale ``eta * sqrt((1 - abar_{t-1}) beta_t / (1 - abar_t))``."""
    if t == 0:
        raise ScheduleError("ddim_sigma is undefined at t = 0")
    sched._check_t(t)
    if not 0.0 <= eta <= 1.0:
        raise ScheduleError(f"eta must lie in [0, 1], got {eta}")
    one_minus = 1.0 - sched.alpha_bar[t]
    if not one_minus > 0:
        raise ScheduleError(f"1 - alpha_bar[{t}] must be positive")
    return float(eta * np.sqrt((1.0 - sched.alpha_bar[t - 1]) * sched.beta[t] / one_minus))


def ddim_step(x_t, eps, t: int, eta: float, noise, sched: NoiseSchedule) -> np.ndarray:
    """One DDIM transition ``x_t -> x_{t-1}``.

    ``noise`` is a standard-normal draw of the same shape as ``x_t``; it is
    ignored (may be None) when ``eta == 0``.
    """
    sigma = ddim_sigma(t, eta, sched)
    ab_prev = sched.alpha_bar[t - 1]
    x0_hat = tweedie_estimate(x_t, eps, t, sched)
    dir_var = 1.0 - ab_prev - sigma * sigma
    if dir_var < 0:
        raise ScheduleError(f"1 - alpha_bar[{t - 1}] - sigma^2 = {dir_var} < 0 at t={t}, eta={eta}")
    out = np.sqrt(ab_prev) * x0_hat + np.sqrt(dir_var) * np.asarray(eps, dtype=np.float64)
    if sigma > 0:
        noise = np.asarray(noise, dtype=np.float64)
        if noise.shape != out.shape:
            raise ValueError(f"noise shape {noise.shape} does not match state shape {out.shape}")
        out = out + sigma * noise
    return out
