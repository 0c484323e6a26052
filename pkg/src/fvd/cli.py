"""Command-line runner: ``fvd run | verify | compare``."""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, dump_json, load_experiment
from .engine import ALL_METRICS, STEP_COLUMNS, EngineError, RunConfig, run
from .rng import MAX_SEED

SCHEMA_LINE = "# fvd-summary schema_version=1"
SUMMARY_COLUMNS = ("sweep_point", "seed") + tuple(m for m in ALL_METRICS) + ("wall_ms",)
HIST_COLUMNS = ("method", "seed", "bin_lo", "bin_hi", "count")
COMPARE_COLUMNS = ("method", "seed", "final_lineages", "mean_death_rate", "mean_killed_rank",
                   "frac_killed_rank_above_0.7")
HIST_BINS = 10


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if not np.isfinite(v) else repr(v)
    return str(v)


def _write_csv(path: Path, header, rows, preamble: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if preamble is not None:
            fh.write(preamble + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def write_step_csv(path: Path, report) -> None:
    _write_csv(path, STEP_COLUMNS, ([row[c] for c in STEP_COLUMNS] for row in report.per_step_stats))


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _load(args):
    exp = load_experiment(args.config)
    seeds = [args.seed_override] if args.seed_override is not None else exp.seeds
    out = Path(args.out or exp.output_dir or "fvd_out")
    out.mkdir(parents=True, exist_ok=True)
    return exp, seeds, out


def _execute(cfg: RunConfig, run_id: str):
    try:
        return run(cfg)
    except EngineError as exc:
        raise EngineError(f"run {run_id}: {exc}") from exc


def cmd_run(args) -> int:
    exp, seeds, out = _load(args)
    summary = []
    for p, (label, overrides) in enumerate(exp.sweep_points()):
        for seed in seeds:
            run_id = f"p{p:03d}_s{seed}"
            cfg = exp.run_config(overrides, seed, args.workers)
            t0 = time.perf_counter()
            report = _execute(cfg, run_id)
            wall_ms = (time.perf_counter() - t0) * 1e3 if args.timing else 0
            doc = report.to_dict()
            doc["run_id"] = run_id
            doc["sweep_point"] = label
            (out / f"{run_id}.report.json").write_text(dump_json(doc))
            write_step_csv(out / f"{run_id}.steps.csv", report)
            m = report.metrics
            summary.append([label, seed] + [m.get(k) for k in ALL_METRICS] + [round(wall_ms)])
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary, preamble=SCHEMA_LINE)
    print(f"wrote {2 * len(summary) + 1} files to {out}")
    return 0


def cmd_compare(args) -> int:
    exp, seeds, out = _load(args)
    if exp.sweep:
        print("note: compare uses the base run config; sweep axes are ignored", file=sys.stderr)
    edges = np.linspace(0.0, 1.0, HIST_BINS + 1)
    hist_rows, cmp_rows = [], []
    for seed in seeds:
        for method in ("fvd", "smc_multinomial"):
            run_id = f"s{seed}_{method}"
            cfg = exp.run_config({"method": method}, seed, args.workers)
            report = _execute(cfg, run_id)
            write_step_csv(out / f"compare_{run_id}.csv", report)
            ranks = np.concatenate([ev.killed_ranks for ev in report.events]) if report.events else np.empty(0)
            counts, _ = np.histogram(ranks, bins=edges)
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                hist_rows.append([method, seed, float(lo), float(hi), int(c)])
            m = report.metrics
            cmp_rows.append([method, seed, int(report.per_step_stats[-1]["distinct_lineages"])
                             if report.per_step_stats else len(np.unique(report.lineage)),
                             m["mean_death_rate"], m["mean_killed_rank"], m["frac_killed_rank_above_0.7"]])
    _write_csv(out / "killed_rank_hist.csv", HIST_COLUMNS, hist_rows)
    _write_csv(out / "compare_summary.csv", COMPARE_COLUMNS, cmp_rows)
    print(f"wrote {2 * len(seeds) + 2} files to {out}")
    return 0


def cmd_verify(args) -> int:
    from .verify import CHECKS, format_table, run_checks

    names = args.only or list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        print(f"unknown check(s) {unknown}; choose from {list(CHECKS)}", file=sys.stderr)
        return 2
    results = run_checks(names)
    print(format_table(results))
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fvd", description="Fleming-Viot diffusion sampler over analytic priors.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("compare", cmd_compare)):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="experiment JSON")
        s.add_argument("--out", help="output directory (overrides output_dir in the config)")
        s.add_argument("--workers", type=_positive, default=1)
        s.add_argument("--seed-override", type=_u64, default=None, help="run only this seed")
        if name == "run":
            s.add_argument("--timing", action="store_true",
                           help="record wall_ms in the summary (otherwise 0, keeping outputs byte-stable)")
        s.set_defaults(func=fn)
    v = sub.add_parser("verify")
    v.add_argument("--only", nargs="+", metavar="CHECK", help="run a subset of checks")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EngineError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
