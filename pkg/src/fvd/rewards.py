"""Scalar rewards ``r: X -> R``.

All rewards take a batch ``(K, d)`` (or a single ``(d,)`` state) and return
one value per state. They know nothing about timesteps: the engine decides
whether to feed Tweedie estimates or final samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .priors import GaussianMixture, _as_batch


@dataclass(frozen=True)
class QuadraticReward:
    """``-||x - target||^2 / (2 * scale)``; maximal (zero) at ``target``."""

    target: np.ndarray
    scale: float = 1.0
    kind: str = field(default="quadratic", init=False)

    def __post_init__(self):
        object.__setattr__(self, "target", np.atleast_1d(np.asarray(self.target, dtype=np.float64)))
        if not self.scale > 0:
            raise ValueError(f"quadratic scale must be > 0, got {self.scale}")

    @property
    def dim(self) -> int:
        return self.target.size

    def __call__(self, x) -> np.ndarray:
        x = _checked(x, self.dim)
        return -np.sum((x - self.target) ** 2, axis=1) / (2.0 * self.scale)


@dataclass(frozen=True)
class ClassLogitReward:
    """``log p(c | x)`` from Bayes' rule over class-conditional mixtures."""

    classes: Sequence[GaussianMixture]
    class_priors: np.ndarray
    target_class: int
    kind: str = field(default="class_logit", init=False)

    def __post_init__(self):
        priors = np.atleast_1d(np.asarray(self.class_priors, dtype=np.float64))
        if len(self.classes) == 0 or priors.size != len(self.classes):
            raise ValueError("need one prior per class and at least one class")
        if np.any(priors <= 0) or abs(priors.sum() - 1.0) > 1e-12:
            raise ValueError("class priors must be positive and sum to 1")
        if not 0 <= self.target_class < len(self.classes):
            raise ValueError(f"target_class {self.target_class} out of range")
        if len({c.dim for c in self.classes}) != 1:
            raise ValueError("all class mixtures must share one dimension")
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "class_priors", priors)

    @property
    def dim(self) -> int:
        return self.classes[0].dim

    def __call__(self, x) -> np.ndarray:
        x = _checked(x, self.dim)
        joint = np.stack([c.log_pdf(x) for c in self.classes], axis=1) + np.log(self.class_priors)
        out = joint[:, self.target_class] - logsumexp(joint, axis=1)
        # log-probabilities are <= 0; rounding can leave +1e-16
        return np.minimum(out, 0.0)


@dataclass(frozen=True)
class TabulatedReward:
    """1D piecewise-linear reward; constant extrapolation beyond the grid."""

    grid: np.ndarray
    values: np.ndarray
    kind: str = field(default="tabulated", init=False)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise ValueError("grid and values must be 1D of equal length >= 2")
        if np.any(np.diff(g) <= 0):
            raise ValueError("tabulated grid must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("tabulated values must be finite")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    dim = 1

    def __call__(self, x) -> np.ndarray:
        x = _checked(x, 1)
        return np.interp(x[:, 0], self.grid, self.values)


RewardSpec = QuadraticReward | ClassLogitReward | TabulatedReward


def _checked(x, dim: int) -> np.ndarray:
    x = _as_batch(x, dim)
    if not np.all(np.isfinite(x)):
        raise ValueError("reward input contains non-finite entries")
    return x


def eval_reward(spec, x) -> np.ndarray | float:
    """Evaluate ``spec`` at ``x``; a single ``(d,)`` state gives a float."""
    x_arr = np.asarray(x, dtype=np.float64)
    out = spec(x_arr)
    if x_arr.ndim == 1 and x_arr.size == spec.dim:
        return float(out[0])
    return out
