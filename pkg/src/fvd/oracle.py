"""Brute-force ground truths: gridded tilted targets and exact resampling laws."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import logsumexp, ndtr

from .priors import GaussianMixture


class CoverageError(ValueError):
    pass


@dataclass(frozen=True)
class GridDistribution:
    """Probabilities on a Cartesian lattice (1D or 2D).

    ``axes[k]`` holds the strictly increasing coordinates of axis ``k``;
    ``probs`` has shape ``tuple(len(a) for a in axes)`` and sums to 1. Each
    grid point owns the cell between the midpoints to its neighbours.
    """

    axes: tuple[np.ndarray, ...]
    probs: np.ndarray

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=np.float64) for a in self.axes)
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != tuple(a.size for a in axes):
            raise ValueError("probs shape does not match the grid")
        if any(np.any(np.diff(a) <= 0) for a in axes):
            raise ValueError("grid axes must be strictly increasing")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-10:
            raise ValueError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "probs", probs)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def points(self) -> np.ndarray:
        """All lattice points, shape ``(n_points, dim)`` in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def edges(self) -> tuple[np.ndarray, ...]:
        return tuple(_cell_edges(a) for a in self.axes)

    def marginal_mean(self) -> np.ndarray:
        return self.probs.ravel() @ self.points

    def marginal_var(self) -> np.ndarray:
        m = self.marginal_mean()
        return self.probs.ravel() @ (self.points - m) ** 2

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw a cell by probability, then a uniform point inside it."""
        flat = rng.choice(self.probs.size, size=n, p=self.probs.ravel())
        idx = np.unravel_index(flat, self.probs.shape)
        out = np.empty((n, self.dim))
        for k, (e, i) in enumerate(zip(self.edges(), idx)):
            lo, hi = e[i], e[i + 1]
            out[:, k] = lo + (hi - lo) * rng.random(n)
        return out


def _cell_edges(a: np.ndarray) -> np.ndarray:
    mid = 0.5 * (a[1:] + a[:-1])
    return np.concatenate([[a[0] - (mid[0] - a[0])], mid, [a[-1] + (a[-1] - mid[-1])]])


def _trapezoid_weights(a: np.ndarray) -> np.ndarray:
    w = np.zeros_like(a)
    d = np.diff(a)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def default_grid(prior: GaussianMixture, n_points: int | None = None, width: float = 6.0):
    """Axes spanning ``mean +/- width * sd`` of the prior on each axis.

    Defaults to 2048 points in 1D and 256 per axis in 2D.
    """
    if prior.dim > 2:
        raise ValueError("grid oracles support at most two dimensions")
    if n_points is None:
        n_points = 2048 if prior.dim == 1 else 256
    m = prior.mean()
    sd = np.sqrt(prior.marginal_variance())
    return tuple(np.linspace(m[k] - width * sd[k], m[k] + width * sd[k], n_points) for k in range(prior.dim))


def prior_mass_in_box(prior: GaussianMixture, lo, hi) -> float:
    lo, hi = np.asarray(lo), np.asarray(hi)
    sd = np.sqrt(prior.variances)
    per_axis = ndtr((hi - prior.means) / sd) - ndtr((lo - prior.means) / sd)
    return float(prior.weights @ np.prod(per_axis, axis=1))


def tilted_target(prior: GaussianMixture, reward, lam: float, grid=None,
                  min_coverage: float = 0.9999) -> GridDistribution:
    """Grid approximation of ``p(x) exp(lam * r(x))``, trapezoid-normalized."""
    axes = default_grid(prior) if grid is None else tuple(np.atleast_1d(np.asarray(a, float)) for a in grid)
    if len(axes) != prior.dim:
        raise ValueError("grid dimension does not match the prior")
    mass = prior_mass_in_box(prior, [a[0] for a in axes], [a[-1] for a in axes])
    if mass < min_coverage:
        raise CoverageError(f"grid covers only {mass:.6f} of the prior mass (need {min_coverage})")
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    log_dens = prior.log_pdf(pts)
    if lam != 0:
        log_dens = log_dens + lam * np.asarray(reward(pts), dtype=np.float64)
    trap = np.ones(1)
    for a in axes:
        trap = np.multiply.outer(trap, _trapezoid_weights(a))
    log_w = log_dens + np.log(trap.reshape(-1))
    probs = np.exp(log_w - logsumexp(log_w))
    return GridDistribution(axes=axes, probs=(probs / probs.sum()).reshape(mesh[0].shape))


def coarsen(target: GridDistribution, bins_per_axis: int | None):
    """Merge consecutive cells into about ``bins_per_axis`` blocks per axis.

    Returns ``(edges, probs)``. ``None`` keeps the native cells.
    """
    edges = target.edges()
    probs = target.probs
    if bins_per_axis is None:
        return edges, probs
    new_edges = []
    for k, e in enumerate(edges):
        n_cells = e.size - 1
        size = max(1, int(np.ceil(n_cells / bins_per_axis)))
        starts = np.arange(0, n_cells, size)
        probs = np.add.reduceat(probs, starts, axis=k)
        new_edges.append(np.concatenate([e[starts], [e[-1]]]))
    return tuple(new_edges), probs


def tv_distance(samples, target: GridDistribution, weights=None, bins_per_axis: int | None = 64) -> float:
    """Half the L1 distance between the binned (optionally weighted) samples and ``target``.

    Samples outside the grid fall into an overflow cell with zero target mass.
    ``bins_per_axis`` aggregates native cells so that Monte Carlo noise does
    not swamp the comparison; pass ``None`` for the native cells.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != target.dim:
        raise ValueError("sample dimension does not match the grid")
    w = np.ones(x.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (x.shape[0],) or np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be nonnegative, one per sample, not all zero")
    w = w / w.sum()
    edges, probs = coarsen(target, bins_per_axis)
    inside = np.ones(x.shape[0], dtype=bool)
    idx = []
    for k, e in enumerate(edges):
        i = np.searchsorted(e, x[:, k], side="right") - 1
        inside &= (x[:, k] >= e[0]) & (x[:, k] <= e[-1])
        idx.append(np.clip(i, 0, e.size - 2))
    emp = np.zeros(probs.shape)
    np.add.at(emp, tuple(i[inside] for i in idx), w[inside])
    overflow = float(w[~inside].sum())
    return float(0.5 * (np.abs(emp - probs).sum() + overflow))


def multinomial_distinct_distribution(K: int) -> dict[int, Fraction]:
    """Exact law of the number of distinct ancestors in ``K`` uniform draws from ``K``.

    Enumerates all ``K**K`` equiprobable outcomes with rational arithmetic.
    """
    if not 2 <= K <= 6:
        raise ValueError(f"K must lie in [2, 6] for enumeration, got {K}")
    counts = Counter(len(set(outcome)) for outcome in itertools.product(range(K), repeat=K))
    total = K**K
    return {c: Fraction(n, total) for c, n in sorted(counts.items())}


def expected_distinct_closed_form(K: int) -> Fraction:
    """``K (1 - (1 - 1/K)^K)`` as an exact rational."""
    return K * (1 - (1 - Fraction(1, K)) ** K)


def distribution_mean(dist: dict) -> Fraction | float:
    return sum(k * p for k, p in dist.items())


def distribution_variance(dist: dict):
    m = distribution_mean(dist)
    return sum(p * (k - m) ** 2 for k, p in dist.items())


def fv_survivor_count_distribution(surv) -> dict[int, float]:
    """Exact Poisson-binomial law of the number of survivors, by convolution."""
    s = np.asarray(surv, dtype=np.float64)
    if s.ndim != 1 or np.any(s <= 0) or np.any(s > 1):
        raise ValueError("survival probabilities must be a 1D sequence in (0, 1]")
    if s.size > 10_000:
        raise ValueError("at most 10^4 particles")
    pmf = np.zeros(s.size + 1)
    pmf[0] = 1.0
    for n, p in enumerate(s, start=1):
        pmf[1:n + 1] = pmf[1:n + 1] * (1.0 - p) + pmf[0:n] * p
        pmf[0] *= 1.0 - p
    return {k: float(v) for k, v in enumerate(pmf)}
