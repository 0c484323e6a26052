"""Analytic diagonal Gaussian-mixture priors with exact noise prediction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.special import logsumexp

from .diffusion import NoiseSchedule

LOG_2PI = float(np.log(2.0 * np.pi))


class Denoiser(Protocol):
    """Anything that predicts the injected noise for a batch of states."""

    dim: int

    def eps_prediction(self, x_t: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray: ...


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray  # (M,)
    means: np.ndarray  # (M, d)
    variances: np.ndarray  # (M, d), diagonal

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        mu = np.asarray(self.means, dtype=np.float64)
        var = np.asarray(self.variances, dtype=np.float64)
        if mu.ndim == 1:
            mu = mu[:, None]
        if var.ndim == 1:
            var = var[:, None]
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1D sequence")
        if mu.shape[0] != w.size or var.shape != mu.shape:
            raise ValueError(
                f"inconsistent shapes: weights {w.shape}, means {mu.shape}, variances {var.shape}"
            )
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be positive and sum to 1 (sum={w.sum()!r})")
        if np.any(var <= 0) or not np.all(np.isfinite(var)) or not np.all(np.isfinite(mu)):
            raise ValueError("variances must be positive and all parameters finite")
        for a in (w, mu, var):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.size

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def marginal_variance(self) -> np.ndarray:
        """Per-axis variance of the mixture (law of total variance)."""
        m = self.mean()
        return self.weights @ (self.variances + (self.means - m) ** 2)

    def component_log_pdf(self, x) -> np.ndarray:
        """``log N(x; mu_k, diag v_k)`` for every component, shape ``(K, M)``."""
        x = _as_batch(x, self.dim)
        diff = x[:, None, :] - self.means[None, :, :]
        quad = np.sum(diff * diff / self.variances[None], axis=-1)
        logdet = np.sum(np.log(self.variances), axis=-1)
        return -0.5 * (quad + logdet[None] + self.dim * LOG_2PI)

    def log_pdf(self, x) -> np.ndarray:
        return logsumexp(self.component_log_pdf(x) + np.log(self.weights)[None], axis=1)

    def score(self, x) -> np.ndarray:
        """Gradient of ``log_pdf`` with log-sum-exp responsibilities."""
        x = _as_batch(x, self.dim)
        log_r = self.component_log_pdf(x) + np.log(self.weights)[None]
        log_r -= logsumexp(log_r, axis=1, keepdims=True)
        resp = np.exp(log_r)
        per_comp = (self.means[None] - x[:, None, :]) / self.variances[None]
        return np.einsum("km,kmd->kd", resp, per_comp)

    # Denoiser protocol
    def eps_prediction(self, x_t, t: int, sched: NoiseSchedule) -> np.ndarray:
        return eps_prediction(self, x_t, t, sched)


def _as_batch(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :] if x.size == dim else x[:, None]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"expected states of dimension {dim}, got shape {x.shape}")
    return x


def marginal_at_t(prior: GaussianMixture, t: int, sched: NoiseSchedule) -> GaussianMixture:
    """Law of ``x_t`` when ``x_0 ~ prior`` under the forward kernel."""
    if not 0 <= t <= sched.T:
        raise ValueError(f"timestep {t} outside [0, {sched.T}]")
    ab = sched.alpha_bar[t]
    if t == 0:
        return prior
    return GaussianMixture(
        weights=prior.weights,
        means=np.sqrt(ab) * prior.means,
        variances=ab * prior.variances + (1.0 - ab),
    )


def eps_prediction(prior: GaussianMixture, x_t, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Exact denoiser ``-sqrt(1 - abar_t) * grad log p_t(x_t)``.

    Returns an array with the same shape as ``x_t``.
    """
    if not 1 <= t <= sched.T:
        raise ValueError(f"timestep {t} outside [1, {sched.T}]")
    x_arr = np.asarray(x_t, dtype=np.float64)
    if not np.all(np.isfinite(x_arr)):
        raise ValueError("x_t contains non-finite entries")
    score = marginal_at_t(prior, t, sched).score(x_arr)
    eps = -np.sqrt(1.0 - sched.alpha_bar[t]) * score
    return eps.reshape(x_arr.shape)


def sample_prior(prior: GaussianMixture, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Ancestral draws: component by weight, then a diagonal Gaussian.

    With ``n=None`` a single ``(d,)`` state is returned, otherwise ``(n, d)``.
    """
    size = 1 if n is None else n
    comp = rng.choice(prior.n_components, size=size, p=prior.weights)
    z = rng.standard_normal((size, prior.dim))
    x = prior.means[comp] + np.sqrt(prior.variances[comp]) * z
    return x[0] if n is None else x


def default_two_mode_prior() -> GaussianMixture:
    """Equal-weight 1D mixture with modes at -2 and +2 and variance 0.25."""
    return GaussianMixture(weights=[0.5, 0.5], means=[[-2.0], [2.0]], variances=[[0.25], [0.25]])
