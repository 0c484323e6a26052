"""Release-gate checks behind ``fvd verify``.

Each ``check_*`` returns a list of :class:`CheckResult`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import oracle, potentials, resampling
from .config import dump_json
from .controller import ControllerState, rm_update
from .diagnostics import pairwise_diversity
from .diffusion import build_linear_schedule, tweedie_estimate
from .engine import RunConfig, run
from .priors import GaussianMixture, default_two_mode_prior, eps_prediction, marginal_at_t
from .rewards import ClassLogitReward, QuadraticReward


@dataclass
class CheckResult:
    name: str
    measured: float
    expected: str
    tolerance: str
    passed: bool
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<42} measured={self.measured:<14.6g} expected={self.expected:<22} tol={self.tolerance}"


# shared scenarios -------------------------------------------------------------

def classifier_scenario() -> tuple[GaussianMixture, ClassLogitReward]:
    """Three-mode 1D prior and a two-class Gaussian classifier targeting the right class."""
    prior = GaussianMixture([1 / 3, 1 / 3, 1 / 3], [[-2.0], [0.0], [2.0]], [[0.5], [0.5], [0.5]])
    classes = [
        GaussianMixture([1.0], [[-1.5]], [[1.0]]),
        GaussianMixture([1.0], [[1.5]], [[1.0]]),
    ]
    return prior, ClassLogitReward(classes, [0.5, 0.5], target_class=1)


def tilt_scenario() -> tuple[GaussianMixture, QuadraticReward]:
    return default_two_mode_prior(), QuadraticReward([2.0], 1.0)


# individual checks --------------------------------------------------------------

def check_distinct_law() -> list[CheckResult]:
    worst = 0.0
    ok = True
    for K in range(2, 7):
        mean = oracle.distribution_mean(oracle.multinomial_distinct_distribution(K))
        closed = oracle.expected_distinct_closed_form(K)
        ok &= mean == closed
        worst = max(worst, abs(float(mean) - K * (1 - (1 - 1 / K) ** K)))
    return [CheckResult("exact distinct-ancestor mean K=2..6", worst, "0 (exact rational)", "exact", ok)]


def check_collapse(K: int = 1000, trials: int = 200, seed: int = 11) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    flat = np.zeros(K)
    elim = np.empty(trials)
    for i in range(trials):
        anc = resampling.multinomial_resample(flat, rng)
        elim[i] = 1.0 - np.unique(anc).size / K
    expected = (1 - 1 / K) ** K
    measured = float(elim.mean())
    return [
        CheckResult("1/e collapse fraction (K=1000)", measured, f"{expected:.4f} (~1/e)", "+-0.01",
                    abs(measured - expected) <= 0.01),
        CheckResult("distinct ancestors after 1 step", float(K * (1 - elim.mean())),
                    f"{K * (1 - expected):.1f}", "+-13", abs(K * (elim.mean() - expected)) <= 13),
    ]


def check_survivor_variance(n_vectors: int = 20, K: int = 100, trials: int = 100_000, seed: int = 22) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst_rel = 0.0
    worst_formula = 0.0
    exact_ok = True
    for _ in range(n_vectors):
        rewards = rng.normal(size=K)
        strength = rng.uniform(0.3, 3.0)
        cfg = potentials.PotentialConfig(strength, (1,))
        s = potentials.survival_probs(cfg, rewards)
        rmax = max(rewards)
        reference = np.array([math.exp(strength * (r - rmax)) for r in rewards])
        worst_formula = max(worst_formula, float(np.max(np.abs(s - reference))))
        target_var = float(np.sum(reference * (1 - reference)))
        counts = np.empty(trials)
        chunk = 10_000
        for start in range(0, trials, chunk):
            n = min(chunk, trials - start)
            deaths = resampling.fv_death_draw(np.tile(s, n), rng).reshape(n, K)
            counts[start:start + n] = K - deaths.sum(axis=1)
        worst_rel = max(worst_rel, abs(counts.var(ddof=1) - target_var) / target_var)
        dist = oracle.fv_survivor_count_distribution(s)
        exact_var = float(oracle.distribution_variance(dist))
        exact_ok &= abs(exact_var - float(np.sum(s * (1 - s)))) <= 1e-9 * K and exact_var <= K / 4
    return [
        CheckResult("survival formula vs reference", worst_formula, "0", "1e-12", worst_formula <= 1e-12),
        CheckResult("empirical Var(N_surv) rel error", worst_rel, "sum s(1-s)", "5% rel", worst_rel <= 0.05),
        CheckResult("exact Poisson-binomial variance <= K/4", float(exact_ok), "1", "exact", bool(exact_ok)),
    ]


def check_absorption(n_vectors: int = 100, seed: int = 33) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    lambdas = np.linspace(0.0, 10.0, 50)
    mono_ok = bound_ok = True
    worst_gap = -np.inf
    for _ in range(n_vectors):
        K = int(rng.integers(2, 200))
        r = rng.normal(scale=rng.uniform(0.1, 3.0), size=K)
        vals = []
        for lam in lambdas:
            cfg = potentials.PotentialConfig(float(lam), (1, 2, 3, 4))
            e = potentials.expected_absorption(cfg, r)
            b = potentials.absorption_upper_bound(cfg, r)
            worst_gap = max(worst_gap, e - b)
            bound_ok &= e <= b
            vals.append(e)
        mono_ok &= bool(np.all(np.diff(vals) >= 0))
    flat = potentials.expected_absorption(potentials.PotentialConfig(3.0, (1,)), np.full(10, -0.7))
    return [
        CheckResult("E[alpha] nondecreasing in lambda", float(mono_ok), "1", "exact", bool(mono_ok)),
        CheckResult("absorption bound 1-exp(-lam/|T| Delta)", float(worst_gap), "<= 0", "exact", bool(bound_ok)),
        CheckResult("Delta=0 gives 0", flat, "0", "exact", flat == 0.0),
    ]


def check_tilted_target(K: int = 20_000, seed: int = 0) -> list[CheckResult]:
    prior, reward = tilt_scenario()
    out = []
    for lam, tol, name in ((1.0, 0.08, "tilted TV (lambda=1)"), (0.0, 0.05, "control TV (lambda=0)")):
        cfg = RunConfig(prior=prior, reward=reward, K=K, T=200, n_resample=4, lambda0=lam, adaptive=False,
                        terminal_mode="terminal_correction_reweight", n_eval=K, seed=seed, metrics=())
        rep = run(cfg)
        target = oracle.tilted_target(prior, reward, lam)
        tv = oracle.tv_distance(rep.final_states, target, weights=rep.selection_weights())
        out.append(CheckResult(name, tv, f"<= {tol}", str(tol), tv <= tol))
    return out


def controller_closed_loop(n_barriers: int = 200, K: int = 1000, seed: int = 44, alpha_star: float = 0.5):
    """Controller against stationary U(-1, 0) rewards; returns ``(alphas, lambdas, state)``."""
    rng = np.random.default_rng(seed)
    state = ControllerState(alpha_star=alpha_star)
    alphas, lams = [], [state.lam]
    for _ in range(n_barriers):
        r = rng.uniform(-1.0, 0.0, size=K)
        cfg = potentials.PotentialConfig(state.lam, (1,))
        logg = potentials.log_potential(cfg, r)
        dead = resampling.fv_death_draw(potentials.survival_probs(cfg, r), rng)
        dead, _ = resampling.enforce_cap(dead, logg, 0.9)
        alpha = float(dead.mean())
        state = rm_update(state, alpha, float(np.std(logg)))
        alphas.append(alpha)
        lams.append(state.lam)
    return np.array(alphas), np.array(lams), state


def check_controller() -> list[CheckResult]:
    alphas, lams, state = controller_closed_loop()
    tail = float(alphas[-40:].mean())
    inside = bool(np.all((lams >= state.lambda_min) & (lams <= state.lambda_max)))
    return [
        CheckResult("controller tail mean alpha (last 40)", tail, "0.5", "+-0.05", abs(tail - 0.5) <= 0.05),
        CheckResult("controller lambda within clip bounds", float(inside), "1", "exact", inside),
    ]


def lineage_comparison(seeds=range(5), K: int = 1000):
    prior, reward = classifier_scenario()
    rows = []
    for seed in seeds:
        row = {"seed": seed}
        for method in ("fvd", "smc_multinomial"):
            cfg = RunConfig(prior=prior, reward=reward, K=K, lambda0=1.0, adaptive=False, n_resample=4,
                            method=method, seed=seed, metrics=("final_lineages",))
            rep = run(cfg)
            row[method] = (int(rep.metrics["final_lineages"]), rep.metrics["mean_killed_rank"])
        rows.append(row)
    return rows


def check_lineage_direction() -> list[CheckResult]:
    rows = lineage_comparison()
    margin = min(r["fvd"][0] - r["smc_multinomial"][0] for r in rows)
    rank_fvd = float(np.mean([r["fvd"][1] for r in rows]))
    rank_smc = float(np.mean([r["smc_multinomial"][1] for r in rows]))
    return [
        CheckResult("lineages FVD - multinomial (min over 5)", float(margin), "> 0", "strict", margin > 0),
        CheckResult("killed rank FVD vs multinomial", rank_fvd, f"< {rank_smc:.4f}", "strict", rank_fvd < rank_smc),
    ]


def rebirth_ablation(seeds=range(200), K: int = 128):
    """Seed-averaged final diversity and TV-to-oracle for rebirth_eta in {0, 0.4}."""
    prior, reward = tilt_scenario()
    targets: dict[float, oracle.GridDistribution] = {}
    div = {0.0: [], 0.4: []}
    tv = {0.0: [], 0.4: []}
    for seed in seeds:
        for eta in (0.0, 0.4):
            cfg = RunConfig(prior=prior, reward=reward, K=K, rebirth_eta=eta,
                            terminal_mode="terminal_correction_reweight", n_eval=K, seed=seed, metrics=())
            rep = run(cfg)
            lam = rep.lambda_trace[-1]
            if lam not in targets:
                targets[lam] = oracle.tilted_target(prior, reward, lam)
            div[eta].append(pairwise_diversity(rep.final_states))
            tv[eta].append(oracle.tv_distance(rep.final_states, targets[lam], weights=rep.selection_weights()))
    return {eta: (float(np.mean(div[eta])), float(np.mean(tv[eta]))) for eta in (0.0, 0.4)}


def check_rebirth_ablation() -> list[CheckResult]:
    res = rebirth_ablation()
    (d0, tv0), (d4, tv4) = res[0.0], res[0.4]
    return [
        CheckResult("rebirth eta=0 diversity < eta=0.4", d0, f"< {d4:.5f}", "strict", d0 < d4),
        CheckResult("rebirth eta=0 TV > eta=0.4", tv0, f"> {tv4:.5f}", "strict", tv0 > tv4),
    ]


def determinism_configs() -> list[RunConfig]:
    """One config per end-to-end acceptance scenario."""
    cprior, creward = classifier_scenario()
    tprior, treward = tilt_scenario()
    return [
        RunConfig(prior=cprior, reward=creward, K=1000, lambda0=1.0, adaptive=False, method="fvd", seed=0),
        RunConfig(prior=cprior, reward=creward, K=1000, lambda0=1.0, adaptive=False, method="smc_multinomial",
                  seed=0),
        RunConfig(prior=tprior, reward=treward, K=20_000, lambda0=1.0, adaptive=False,
                  terminal_mode="terminal_correction_reweight", n_eval=20_000, seed=0, metrics=()),
        RunConfig(prior=tprior, reward=treward, K=128, rebirth_eta=0.0,
                  terminal_mode="terminal_correction_reweight", n_eval=128, seed=0),
    ]


def check_determinism() -> list[CheckResult]:
    n_same = 0
    configs = determinism_configs()
    for cfg in configs:
        blobs = [dump_json(run(replace(cfg, workers=w)).to_dict()).encode() for w in (1, 8)]
        n_same += blobs[0] == blobs[1]
    return [CheckResult("report bytes identical workers=1 vs 8", float(n_same), str(len(configs)), "exact",
                        n_same == len(configs))]


def check_numerics(n_points: int = 100, seed: int = 55) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    sched = build_linear_schedule(200, 5e-4, 0.1)
    priors = [
        default_two_mode_prior(),
        GaussianMixture([0.2, 0.5, 0.3], [[-1.0, 2.0], [0.5, -0.5], [3.0, 1.0]], [[0.3, 1.2], [0.8, 0.4], [0.5, 0.5]]),
    ]
    h = 1e-5
    worst = 0.0
    for i in range(n_points):
        prior = priors[i % 2]
        t = int(rng.integers(1, sched.T + 1))
        marg = marginal_at_t(prior, t, sched)
        x = rng.normal(size=prior.dim) * np.sqrt(marg.marginal_variance()) + marg.mean()
        eps = eps_prediction(prior, x, t, sched)
        grad = np.empty(prior.dim)
        for k in range(prior.dim):
            e = np.zeros(prior.dim)
            e[k] = h
            grad[k] = (marg.log_pdf(x + e)[0] - marg.log_pdf(x - e)[0]) / (2 * h)
        fd_eps = -np.sqrt(1 - sched.alpha_bar[t]) * grad
        rel = np.linalg.norm(eps - fd_eps) / max(np.linalg.norm(fd_eps), 1e-3)
        worst = max(worst, float(rel))
    # single Gaussian: Tweedie equals the conditional-Gaussian posterior mean
    mu, var = np.array([0.7, -1.2]), np.array([0.4, 2.5])
    g = GaussianMixture([1.0], [mu], [var])
    worst_tw = 0.0
    for _ in range(n_points):
        t = int(rng.integers(1, sched.T + 1))
        ab = sched.alpha_bar[t]
        x_t = rng.normal(size=2) * 2.0
        tw = tweedie_estimate(x_t, eps_prediction(g, x_t, t, sched), t, sched)
        post = mu + var * np.sqrt(ab) / (ab * var + 1 - ab) * (x_t - np.sqrt(ab) * mu)
        worst_tw = max(worst_tw, float(np.max(np.abs(tw - post))))
    return [
        CheckResult("eps vs finite-difference score", worst, "0", "1e-5 rel", worst <= 1e-5),
        CheckResult("Tweedie vs Gaussian posterior mean", worst_tw, "0", "1e-8", worst_tw <= 1e-8),
    ]


CHECKS = {
    "distinct_law": check_distinct_law,
    "collapse": check_collapse,
    "survivor_variance": check_survivor_variance,
    "absorption": check_absorption,
    "tilted_target": check_tilted_target,
    "controller": check_controller,
    "lineage": check_lineage_direction,
    "rebirth": check_rebirth_ablation,
    "determinism": check_determinism,
    "numerics": check_numerics,
}


def run_checks(names=None) -> list[CheckResult]:
    results = []
    for name in names or CHECKS:
        t0 = time.perf_counter()
        try:
            out = CHECKS[name]()
        except Exception as exc:  # a crashing check is a failing check
            out = [CheckResult(f"{name} raised {type(exc).__name__}: {exc}", float("nan"), "-", "-", False)]
        dt = time.perf_counter() - t0
        for r in out:
            r.seconds = dt
        results.extend(out)
    return results


def format_table(results) -> str:
    lines = [r.line() for r in results]
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} checks passed")
    return "\n".join(lines)
