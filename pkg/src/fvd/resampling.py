"""Fleming-Viot birth-death selection and the multinomial SMC baseline.

Randomness comes in as explicit ``np.random.Generator`` objects; see
:mod:`fvd.rng` for how the engine keys them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .diffusion import NoiseSchedule, ddim_step


class DegenerateWeightsError(ValueError):
    pass


class InvariantError(RuntimeError):
    """A should-be-impossible state, e.g. a barrier with no survivors."""


@dataclass
class ResampleEvent:
    step: int
    death_mask: np.ndarray
    revived: list[int]
    donors: dict[int, int]
    alpha_t: float
    killed_ranks: np.ndarray
    lambda_used: float
    extra: dict = field(default_factory=dict)

    def check(self) -> None:
        K = self.death_mask.size
        n_dead = int(self.death_mask.sum())
        if abs(self.alpha_t - n_dead / K) > 0:
            raise InvariantError(f"step {self.step}: alpha_t={self.alpha_t} but {n_dead}/{K} dead")
        if any(self.death_mask[j] for j in self.donors.values()):
            raise InvariantError(f"step {self.step}: a donor is itself dead")
        if any(self.death_mask[i] for i in self.revived):
            raise InvariantError(f"step {self.step}: a revived particle is still dead")

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "n_dead": int(self.death_mask.sum()),
            "dead": np.flatnonzero(self.death_mask).tolist(),
            "revived": list(self.revived),
            "donors": {str(k): int(v) for k, v in sorted(self.donors.items())},
            "alpha_t": self.alpha_t,
            "killed_ranks": self.killed_ranks.tolist(),
            "lambda_used": self.lambda_used,
        }


def fv_death_draw(surv, rng: np.random.Generator) -> np.ndarray:
    """Independent deaths ``d_i = 1[u_i > s_i]`` with ``u_i ~ U(0, 1)``.

    ``u`` is drawn from ``[0, 1)``, so ``s_i = 1`` can never die.
    """
    s = np.asarray(surv, dtype=np.float64)
    if np.any(s <= 0) or np.any(s > 1):
        raise ValueError("survival probabilities must lie in (0, 1]")
    u = rng.random(s.size)
    return u > s


def enforce_cap(death_mask, log_potentials, alpha_max: float) -> tuple[np.ndarray, list[int]]:
    """Revive the highest-potential dead until at most ``floor(alpha_max * K)`` remain dead.

    Ties in log-potential go to the lowest index.
    """
    if not 0 < alpha_max <= 1:
        raise ValueError(f"alpha_max must lie in (0, 1], got {alpha_max}")
    mask = np.array(death_mask, dtype=bool, copy=True)
    logg = np.asarray(log_potentials, dtype=np.float64)
    K = mask.size
    cap = int(np.floor(alpha_max * K))
    excess = int(mask.sum()) - cap
    if excess <= 0:
        return mask, []
    dead = np.flatnonzero(mask)
    # lexsort: last key is primary -> descending potential, then ascending index
    order = np.lexsort((dead, -logg[dead]))
    revived = dead[order[:excess]]
    mask[revived] = False
    return mask, sorted(int(i) for i in revived)


def donor_assign(death_mask, rng: np.random.Generator) -> dict[int, int]:
    """Each dead particle gets a uniformly chosen survivor, drawn in index order."""
    mask = np.asarray(death_mask, dtype=bool)
    dead = np.flatnonzero(mask)
    if dead.size == 0:
        return {}
    alive = np.flatnonzero(~mask)
    if alive.size == 0:
        raise InvariantError("no survivors to act as donors")
    picks = rng.integers(0, alive.size, size=dead.size)
    return {int(i): int(alive[p]) for i, p in zip(dead, picks)}


def rebirth(donor_x_t, denoiser, t: int, rebirth_eta: float, rng_or_noise, sched: NoiseSchedule):
    """Stochastic DDIM step from the donor's noisy state.

    ``rng_or_noise`` is either a Generator (fresh standard-normal noise is
    drawn) or a pre-drawn noise array.
    """
    x = np.asarray(donor_x_t, dtype=np.float64)
    if isinstance(rng_or_noise, np.random.Generator):
        noise = rng_or_noise.standard_normal(x.shape)
    else:
        noise = np.asarray(rng_or_noise, dtype=np.float64)
    eps = denoiser.eps_prediction(x, t, sched)
    return ddim_step(x, eps, t, rebirth_eta, noise, sched)


def normalize_log_weights(log_weights) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=np.float64)
    if lw.ndim != 1 or lw.size == 0:
        raise ValueError("log_weights must be a non-empty 1D sequence")
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise ValueError("log_weights must not contain NaN or +inf")
    if np.all(lw == -np.inf):
        raise DegenerateWeightsError("all weights are zero")
    p = np.exp(lw - logsumexp(lw))
    return p / p.sum()


def multinomial_resample(log_weights, rng: np.random.Generator) -> np.ndarray:
    """``K`` i.i.d. ancestor indices from the normalized categorical."""
    p = normalize_log_weights(log_weights)
    return rng.choice(p.size, size=p.size, p=p)


def final_subsample(rewards, tau: float, n_eval: int, rng: np.random.Generator) -> np.ndarray:
    """``n_eval`` i.i.d. indices with probability proportional to ``exp(r_i / tau)``."""
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if n_eval < 1:
        raise ValueError(f"n_eval must be >= 1, got {n_eval}")
    p = normalize_log_weights(np.asarray(rewards, dtype=np.float64) / tau)
    return rng.choice(p.size, size=n_eval, p=p)


def weighted_subsample(log_weights, n_eval: int, rng: np.random.Generator) -> np.ndarray:
    if n_eval < 1:
        raise ValueError(f"n_eval must be >= 1, got {n_eval}")
    p = normalize_log_weights(log_weights)
    return rng.choice(p.size, size=n_eval, p=p)
