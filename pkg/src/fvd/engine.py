"""Fleming-Viot diffusion sampling and the multinomial SMC baseline."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from . import __version__, rng as rngs
from .controller import ControllerState, rm_update
from .diagnostics import death_stats, distinct_lineages, killed_reward_ranks, mmd_rbf, pairwise_diversity
from .diffusion import NoiseSchedule, build_linear_schedule, ddim_step, scaled_linear_bounds, tweedie_estimate
from .oracle import tilted_target, tv_distance
from .potentials import PotentialConfig, default_resample_steps, log_potential, survival_probs, terminal_log_correction
from .priors import GaussianMixture
from .resampling import (
    InvariantError,
    ResampleEvent,
    donor_assign,
    enforce_cap,
    final_subsample,
    fv_death_draw,
    multinomial_resample,
    weighted_subsample,
)

METHODS = ("fvd", "smc_multinomial")
TERMINAL_MODES = ("temperature_subsample", "terminal_correction_reweight")
ALL_METRICS = ("mean_reward", "mmd", "diversity", "tv_oracle", "final_lineages")
STEP_COLUMNS = ("step", "alpha_t", "lambda", "n_dead", "n_revived", "distinct_lineages", "mean_reward", "std_log_g")


class EngineError(RuntimeError):
    """An invariant broke mid-run; the message names the step."""


@dataclass(frozen=True)
class RunConfig:
    prior: GaussianMixture
    reward: Any
    K: int = 1000
    T: int = 200
    beta_start: float | None = None
    beta_end: float | None = None
    lambda0: float = 1.0
    n_resample: int = 4
    resample_steps: tuple[int, ...] | None = None
    adaptive: bool = True
    alpha_star: float = 0.5
    eta0: float = 0.5
    gamma: float = 0.1
    lambda_min: float = 0.0
    lambda_max: float = 10.0
    delta_floor: float = 1e-3
    rebirth_eta: float = 0.4
    alpha_max: float = 0.9
    tau: float = 1.0
    n_eval: int = 100
    method: str = "fvd"
    terminal_mode: str = "temperature_subsample"
    seed: int = 0
    workers: int = 1
    metrics: tuple[str, ...] = ALL_METRICS
    metric_max_samples: int = 2000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.terminal_mode not in TERMINAL_MODES:
            raise ValueError(f"terminal_mode must be one of {TERMINAL_MODES}, got {self.terminal_mode!r}")
        if self.K < 1 or self.workers < 1 or self.n_eval < 1:
            raise ValueError("K, workers and n_eval must be positive")
        if self.reward.dim != self.prior.dim:
            raise ValueError(f"reward dimension {self.reward.dim} != prior dimension {self.prior.dim}")
        if not 0.0 <= self.rebirth_eta <= 1.0:
            raise ValueError("rebirth_eta must lie in [0, 1]")
        if not 0 < self.alpha_max <= 1 or not self.tau > 0:
            raise ValueError("need 0 < alpha_max <= 1 and tau > 0")
        unknown = set(self.metrics) - set(ALL_METRICS)
        if unknown:
            raise ValueError(f"unknown metrics {sorted(unknown)}")
        steps = self.barriers()
        if steps and self.K < 2:
            raise ValueError("resampling needs K >= 2")
        if any(not 1 <= s <= self.T for s in steps):
            raise ValueError(f"resample steps must lie in [1, {self.T}]")
        self.controller()  # validates controller fields
        self.schedule()

    def schedule(self) -> NoiseSchedule:
        lo, hi = scaled_linear_bounds(self.T)
        lo = lo if self.beta_start is None else self.beta_start
        hi = hi if self.beta_end is None else self.beta_end
        return build_linear_schedule(self.T, lo, hi)

    def barriers(self) -> tuple[int, ...]:
        if self.resample_steps is not None:
            return tuple(sorted(set(self.resample_steps), reverse=True))
        return default_resample_steps(self.T, self.n_resample)

    def controller(self) -> ControllerState:
        return ControllerState(
            lam=self.lambda0, alpha_star=self.alpha_star, eta0=self.eta0, gamma=self.gamma,
            lambda_min=self.lambda_min, lambda_max=self.lambda_max,
            delta_floor=self.delta_floor, enabled=self.adaptive,
        )


class Particle(NamedTuple):
    x: np.ndarray
    lineage_id: int
    cum_log_potential: float


@dataclass
class Population:
    x: np.ndarray  # (K, d)
    lineage: np.ndarray  # (K,) int
    cum_log_potential: np.ndarray  # (K,)

    @classmethod
    def fresh(cls, x: np.ndarray) -> "Population":
        K = x.shape[0]
        return cls(x=x, lineage=np.arange(K), cum_log_potential=np.zeros(K))

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, i: int) -> Particle:
        return Particle(self.x[i], int(self.lineage[i]), float(self.cum_log_potential[i]))

    def copy(self) -> "Population":
        return Population(self.x.copy(), self.lineage.copy(), self.cum_log_potential.copy())


@dataclass
class RunReport:
    config: RunConfig
    events: list[ResampleEvent]
    lambda_trace: list[float]
    final_states: np.ndarray
    final_rewards: np.ndarray
    final_log_weights: np.ndarray
    lineage: np.ndarray
    cum_log_potential: np.ndarray
    selected: np.ndarray
    per_step_stats: list[dict]
    metrics: dict[str, float] = field(default_factory=dict)

    def selection_weights(self) -> np.ndarray:
        lw = self.final_log_weights
        w = np.exp(lw - lw.max())
        return w / w.sum()

    def to_dict(self) -> dict:
        return {
            "version": f"fvd {__version__}",
            "config": config_to_dict(self.config),
            "lambda_trace": self.lambda_trace,
            "per_step_stats": self.per_step_stats,
            "events": [ev.to_dict() for ev in self.events],
            "metrics": {k: _json_float(v) for k, v in self.metrics.items()},
            "selected": self.selected.tolist(),
            "final": {
                "states": self.final_states.tolist(),
                "rewards": self.final_rewards.tolist(),
                "log_weights": self.final_log_weights.tolist(),
                "lineage": self.lineage.tolist(),
                "cum_log_potential": self.cum_log_potential.tolist(),
            },
        }


def _json_float(v):
    v = float(v)
    return v if np.isfinite(v) else None


def config_to_dict(cfg: RunConfig) -> dict:
    """Serializable view of the resolved config. ``workers`` is omitted: it never changes results."""
    from .config import prior_to_dict, reward_to_dict

    out = {}
    for f in dataclasses.fields(cfg):
        if f.name == "workers":
            continue
        v = getattr(cfg, f.name)
        if f.name == "prior":
            v = prior_to_dict(v)
        elif f.name == "reward":
            v = reward_to_dict(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    out["resolved_resample_steps"] = list(cfg.barriers())
    return out


def _map_rows(fn, x: np.ndarray, workers: int) -> np.ndarray:
    """Apply a row-wise function, optionally split over threads.

    Every row is computed by the same code regardless of the split, so the
    output does not depend on ``workers``.
    """
    if workers <= 1 or x.shape[0] < 2 * workers:
        return fn(x)
    chunks = np.array_split(np.arange(x.shape[0]), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda idx: fn(x[idx]), chunks))
    return np.concatenate(parts, axis=0)


def propagate_step(population: Population, t: int, sched: NoiseSchedule, denoiser, workers: int = 1) -> Population:
    """Advance every particle by one deterministic DDIM step."""
    eps = _map_rows(lambda xb: denoiser.eps_prediction(xb, t, sched), population.x, workers)
    x_next = ddim_step(population.x, eps, t, 0.0, None, sched)
    return Population(x_next, population.lineage.copy(), population.cum_log_potential.copy())


def run_fvd(cfg: RunConfig) -> RunReport:
    if cfg.method != "fvd":
        raise ValueError("run_fvd needs method='fvd'")
    return _run(cfg)


def run_smc_baseline(cfg: RunConfig) -> RunReport:
    if cfg.method != "smc_multinomial":
        raise ValueError("run_smc_baseline needs method='smc_multinomial'")
    return _run(cfg)


def run(cfg: RunConfig) -> RunReport:
    return _run(cfg)


def _run(cfg: RunConfig) -> RunReport:
    sched = cfg.schedule()
    barriers = set(cfg.barriers())
    denoiser = cfg.prior
    reward = cfg.reward
    K, d, w = cfg.K, cfg.prior.dim, cfg.workers

    x = rngs.stream(cfg.seed, rngs.INIT, cfg.T).standard_normal((K, d))
    pop = Population.fresh(x)
    ctrl = cfg.controller()
    lambda_trace = [ctrl.lam]
    events: list[ResampleEvent] = []
    stats: list[dict] = []

    for t in range(cfg.T, 0, -1):
        eps = _map_rows(lambda xb: denoiser.eps_prediction(xb, t, sched), pop.x, w)
        x_next = ddim_step(pop.x, eps, t, 0.0, None, sched)
        if t in barriers:
            try:
                pop, x_next, ctrl, event, row = _barrier(cfg, t, sched, pop, eps, x_next, ctrl)
            except (InvariantError, ValueError, FloatingPointError) as exc:
                raise EngineError(f"step {t}: {exc}") from exc
            events.append(event)
            stats.append(row)
            lambda_trace.append(ctrl.lam)
        pop = Population(x_next, pop.lineage, pop.cum_log_potential)
        if len(pop) != K:
            raise EngineError(f"step {t}: population size {len(pop)} != {K}")

    if not np.all(np.isfinite(pop.x)):
        raise EngineError("step 0: non-finite final states")
    r0 = _map_rows(lambda xb: reward(xb)[:, None], pop.x, w)[:, 0]
    final_rng = rngs.stream(cfg.seed, rngs.FINAL, 0)
    if cfg.terminal_mode == "temperature_subsample":
        log_w = r0 / cfg.tau
        selected = final_subsample(r0, cfg.tau, cfg.n_eval, final_rng)
    else:
        log_w = terminal_log_correction(pop.cum_log_potential, r0, ctrl.lam)
        selected = weighted_subsample(log_w, cfg.n_eval, final_rng)

    report = RunReport(
        config=cfg, events=events, lambda_trace=lambda_trace, final_states=pop.x,
        final_rewards=r0, final_log_weights=np.asarray(log_w, dtype=np.float64), lineage=pop.lineage,
        cum_log_potential=pop.cum_log_potential, selected=selected, per_step_stats=stats,
    )
    report.metrics = compute_metrics(report)
    return report


def _barrier(cfg, t, sched, pop, eps, x_next, ctrl):
    K = len(pop)
    lam = ctrl.lam
    pcfg = PotentialConfig(lam, cfg.barriers())
    x0_hat = tweedie_estimate(pop.x, eps, t, sched)
    r = _map_rows(lambda xb: cfg.reward(xb)[:, None], x0_hat, cfg.workers)[:, 0]
    logg = log_potential(pcfg, r)
    std_logg = float(np.std(logg))
    noise = rngs.stream(cfg.seed, rngs.REBIRTH, t).standard_normal(pop.x.shape)

    if cfg.method == "fvd":
        surv = survival_probs(pcfg, r)
        dead = fv_death_draw(surv, rngs.stream(cfg.seed, rngs.DEATH, t))
        dead, revived = enforce_cap(dead, logg, cfg.alpha_max)
        donors = donor_assign(dead, rngs.stream(cfg.seed, rngs.DONOR, t))
        parent = np.arange(K)
        for i, j in donors.items():
            parent[i] = j
    else:
        parent = multinomial_resample(logg, rngs.stream(cfg.seed, rngs.RESAMPLE, t))
        dead = np.ones(K, dtype=bool)
        dead[parent] = False
        revived = []
        donors = {i: int(parent[i]) for i in np.flatnonzero(dead)}

    if cfg.method == "fvd":
        idx = np.flatnonzero(dead)
    else:
        idx = np.arange(K)
    if idx.size:
        src = parent[idx]
        x_next = x_next.copy()
        x_next[idx] = ddim_step(pop.x[src], eps[src], t, cfg.rebirth_eta, noise[idx], sched)

    new_cum = pop.cum_log_potential + logg
    pop = Population(pop.x, pop.lineage[parent], new_cum[parent])
    if not np.all(np.isfinite(pop.cum_log_potential)):
        raise InvariantError("non-finite accumulated log-potential")

    alpha_t = float(dead.sum()) / K
    event = ResampleEvent(
        step=t, death_mask=dead, revived=revived, donors=donors, alpha_t=alpha_t,
        killed_ranks=killed_reward_ranks(r, dead), lambda_used=lam,
    )
    event.check()
    if cfg.method == "fvd":
        ctrl = rm_update(ctrl, alpha_t, std_logg)
    row = {
        "step": t,
        "alpha_t": alpha_t,
        "lambda": lam,
        "n_dead": int(dead.sum()),
        "n_revived": len(revived),
        "distinct_lineages": distinct_lineages(pop.lineage),
        "mean_reward": float(np.mean(r)),
        "std_log_g": std_logg,
    }
    return pop, x_next, ctrl, event, row


def compute_metrics(report: RunReport) -> dict[str, float]:
    """Sample-quality metrics on the selected outputs.

    ``mmd`` and ``tv_oracle`` compare against the grid-tilted target at the
    final lambda; they are NaN for priors above two dimensions.
    """
    cfg = report.config
    sel = report.final_states[report.selected]
    cap = cfg.metric_max_samples
    out: dict[str, float] = {}
    ds = death_stats(report.events, report.lineage)
    if "mean_reward" in cfg.metrics:
        out["mean_reward"] = float(np.mean(report.final_rewards[report.selected]))
    if "diversity" in cfg.metrics:
        out["diversity"] = pairwise_diversity(sel[:cap]) if sel.shape[0] >= 2 else float("nan")
    if "final_lineages" in cfg.metrics:
        out["final_lineages"] = float(ds.final_distinct_lineages)
    want_oracle = {"mmd", "tv_oracle"} & set(cfg.metrics)
    if want_oracle:
        if cfg.prior.dim <= 2:
            target = tilted_target(cfg.prior, cfg.reward, report.lambda_trace[-1])
            if "tv_oracle" in cfg.metrics:
                out["tv_oracle"] = tv_distance(sel, target)
            if "mmd" in cfg.metrics:
                if sel.shape[0] >= 2:
                    ref = target.sample(rngs.stream(cfg.seed, rngs.ORACLE, 0), min(cap, max(sel.shape[0], 2)))
                    out["mmd"] = mmd_rbf(sel[:cap], ref)
                else:
                    out["mmd"] = float("nan")
        else:
            for name in want_oracle:
                out[name] = float("nan")
    out["mean_death_rate"] = ds.mean_death_rate
    out["mean_killed_rank"] = ds.mean_killed_rank
    out["frac_killed_rank_above_0.7"] = ds.frac_killed_rank_above[0.7]
    out["final_lambda"] = report.lambda_trace[-1]
    return out
