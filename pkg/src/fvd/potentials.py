"""Exponential per-step potentials, survival probabilities and the terminal correction.

Everything stays in log-space: ``lambda * r`` can be large.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PotentialConfig:
    lam: float
    resample_steps: tuple[int, ...]

    def __post_init__(self):
        steps = tuple(sorted({int(s) for s in self.resample_steps}, reverse=True))
        if not len(steps) >= 1:
            raise ValueError("need at least one resampling step")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        object.__setattr__(self, "resample_steps", steps)

    @property
    def n_resample(self) -> int:
        return len(self.resample_steps)

    @property
    def per_step_strength(self) -> float:
        return self.lam / self.n_resample


def default_resample_steps(T: int, n: int = 4) -> tuple[int, ...]:
    """``n`` evenly spaced barriers in ``(0, T)``, largest first.

    Barrier ``k`` (1-based) sits at ``round(k * T / (n + 1))``; ``t = T`` is
    excluded because the Tweedie estimate there is almost pure noise.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return ()
    if n > T - 1 and T > 1:
        raise ValueError(f"cannot place {n} barriers strictly inside (0, {T})")
    steps = {max(1, int(round(k * T / (n + 1)))) for k in range(1, n + 1)}
    if len(steps) != n:
        raise ValueError(f"cannot place {n} distinct barriers for T={T}")
    return tuple(sorted(steps, reverse=True))


def log_potential(cfg: PotentialConfig, reward):
    """``log G_t = (lambda / |T|) * r``."""
    return cfg.per_step_strength * np.asarray(reward, dtype=np.float64)


def survival_probs(cfg: PotentialConfig, rewards) -> np.ndarray:
    """``s_i = exp((lambda/|T|) (r_i - r_max))``; every arg-max gets exactly 1.

    Underflow is floored at the smallest normal float so ``s`` stays in ``(0, 1]``.
    """
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("rewards must be a non-empty 1D sequence")
    if not np.all(np.isfinite(r)):
        raise ValueError("rewards must be finite")
    return np.maximum(np.exp(cfg.per_step_strength * (r - r.max())), np.finfo(np.float64).tiny)


def expected_absorption(cfg: PotentialConfig, rewards) -> float:
    """Mean death probability ``(1/K) sum_i (1 - s_i)``."""
    r = np.asarray(rewards, dtype=np.float64)
    survival_probs(cfg, r)  # validation
    # -expm1 keeps precision under weak selection pressure
    return float(np.mean(-np.expm1(cfg.per_step_strength * (r - r.max()))))


def absorption_upper_bound(cfg: PotentialConfig, rewards) -> float:
    r = np.asarray(rewards, dtype=np.float64)
    return float(-np.expm1(-cfg.per_step_strength * (r.max() - r.min())))


def terminal_log_correction(accumulated_log_potentials, terminal_reward, lam: float):
    """``log G_0 = lambda * r(x_0) - sum_s log G_s``.

    The plain difference can be off by an ulp, so the result is nudged until
    ``accumulated + correction == lambda * r`` holds exactly in float64
    (whenever some float achieves that).
    """
    acc = np.asarray(accumulated_log_potentials, dtype=np.float64)
    target = lam * np.asarray(terminal_reward, dtype=np.float64)
    acc, target = np.broadcast_arrays(acc, target)
    corr = target - acc
    for _ in range(4):
        miss = (acc + corr) != target
        if not np.any(miss):
            break
        direction = np.where(acc + corr < target, np.inf, -np.inf)
        corr = np.where(miss, np.nextafter(corr, direction), corr)
    return corr[()] if corr.ndim == 0 else corr
