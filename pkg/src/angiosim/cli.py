"""Command line entry point: ``angiosim {simulate,meanfield,converge,verify}``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 verification failure. Every invocation writes one ``manifest.json`` that
lists every file it produced.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, io, kernels
from .config import ConfigError, RunConfig, describe, make_config, parse_config
from .rng import derive_seed

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Manifest:
    """Collects the files of one invocation and writes them out once."""

    def __init__(self, command, cfg: RunConfig, out: Path):
        self.out = out
        self.t0 = time.perf_counter()
        self.data = {
            "command": command,
            "version": __version__,
            "numba": bool(kernels.USE_NUMBA),
            "config_hash": cfg.hash(),
            "config": cfg.as_dict(),
            "master_seed": cfg.master_seed,
            "started": _now(),
            "files": [],
        }

    def add(self, *paths):
        for p in paths:
            self.data["files"].append(str(Path(p).relative_to(self.out)))

    def write(self, **extra):
        self.data.update(extra)
        self.data["finished"] = _now()
        self.data["wall_seconds"] = round(time.perf_counter() - self.t0, 3)
        self.data["files"] = sorted(self.data["files"])
        return io.write_json(self.out / "manifest.json", self.data)


# -- simulate ---------------------------------------------------------------

def _simulate_member(args):
    from .tips import run

    cfg, out, index = args
    seed = derive_seed(cfg.master_seed, cfg.N, index)
    try:
        rec = run(cfg.model_params(), cfg, seed)
    except (FloatingPointError, ValueError) as exc:
        raise RuntimeError(f"run {index} (seed {seed}): {exc}") from None
    d = cfg.dim
    rdir = out / f"run_{index:04d}"
    files = [
        io.write_trajectory(rdir / "trajectory.csv", rec),
        io.write_events(rdir / "events.csv", rec.events, d),
        io.write_counts(rdir / "counts.csv", rec.times, rec.n_alive),
        *io.write_field(rdir / "field_final.csv", rec.setup.grid, rec.fields[-1][1], rec.fields[-1][2]),
    ]
    info = {"index": index, "seed": seed, "bounds_violations": rec.bounds_violations,
            "strict_cmax_violations": rec.strict_cmax_violations, "events": len(rec.events),
            "final_alive": int(rec.n_alive[-1])}
    return files, rec.times, rec.n_alive, info


def simulate_outputs(cfg: RunConfig, out, workers=1):
    """Run ``cfg.seeds`` members and write their files; returns ``(files, runs)``."""
    out = io.ensure_writable(out)
    jobs = [(cfg, out, i) for i in range(cfg.seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_member, jobs))
    else:
        results = [_simulate_member(j) for j in jobs]
    files = [f for r in results for f in r[0]]
    times = results[0][1]
    counts = np.array([r[2] for r in results], dtype=float)
    mass = counts / cfg.N
    rows = zip(times, counts.mean(axis=0), mass.mean(axis=0), mass.min(axis=0), mass.max(axis=0))
    files.append(io.write_csv(out / "counts_summary.csv", ["t", "mean_N_t", "mean_M", "min_M", "max_M"], rows))
    return files, [r[3] for r in results]


def cmd_simulate(cfg, out, workers):
    man = Manifest("simulate", cfg, out)
    files, runs = simulate_outputs(cfg, out, workers)
    man.add(*files)
    man.write(runs=runs)
    bad = sum(r["bounds_violations"] for r in runs)
    print(f"simulate: {len(runs)} run(s) of N={cfg.N} written to {out}; TAF bound violations: {bad}")
    return EXIT_OK


# -- meanfield --------------------------------------------------------------

def cmd_meanfield(cfg, out, workers):
    from .meanfield import solve_system

    out = io.ensure_writable(out)
    man = Manifest("meanfield", cfg, out)
    res = solve_system(cfg.model_params(), cfg)
    man.add(io.write_mass(out / "mass.csv", res.times, res.mass))
    man.add(io.write_csv(out / "leakage.csv", ["t", "leak"], zip(res.times, res.leakage)))
    for k, (t, rho, C) in enumerate(zip(res.out_times, res.densities, res.fields)):
        man.add(*io.write_density(out / f"density_{k:04d}.csv", rho))
        man.add(*io.write_field(out / f"field_{k:04d}.csv", res.problem.xgrid, C))
    man.add(io.write_csv(out / "snapshots.csv", ["index", "t"], enumerate(res.out_times)))
    extra = {"dt": res.problem.dt, "final_mass": float(res.mass[-1])}
    code = EXIT_OK
    if cfg.mf_refine_check:
        fine = solve_system(cfg.model_params(), cfg, refine=2)
        rel = abs(res.mass[-1] - fine.mass[-1]) / max(abs(fine.mass[-1]), 1e-300)
        extra["self_convergence"] = {"M_base": float(res.mass[-1]), "M_refined": float(fine.mass[-1]),
                                     "rel_diff": rel, "tol": cfg.mf_refine_tol, "pass": rel <= cfg.mf_refine_tol}
        if rel > cfg.mf_refine_tol:
            code = EXIT_NUMERIC
    man.write(**extra)
    print(f"meanfield: {res.times.size - 1} steps, M_T = {res.mass[-1]:.6g}, written to {out}")
    return code


# -- converge ---------------------------------------------------------------

def cmd_converge(cfg, out, workers):
    from .analysis.checks import run_convergence

    out = io.ensure_writable(out)
    man = Manifest("converge", cfg, out)
    Ns = list(cfg.N_list)
    table = run_convergence(cfg, Ns, cfg.conv_seeds, workers, resample_seed=cfg.master_seed)
    rows = [(r.N, r.mean, r.se, r.values.size) for r in table.rows]
    slope = "N/A" if table.slope is None else table.slope
    rows.append(("slope", slope, "", ""))
    man.add(io.write_csv(out / "convergence.csv", ["N", "mean_metric", "se", "seeds"], rows))
    rrows = [(r.N, r.mean, r.se, r.values.size) for r in table.resampled_rows]
    rrows.append(("slope", "N/A" if table.resampled_slope is None else table.resampled_slope, "", ""))
    man.add(io.write_csv(out / "convergence_resampled.csv", ["N", "mean_metric", "se", "seeds"], rrows))
    man.write(slope=table.slope, slope_note=table.note, decreasing=table.strictly_decreasing(1.0))
    print(f"converge: {len(Ns)} N value(s), slope {slope} ({table.note})")
    return EXIT_OK


# -- verify -----------------------------------------------------------------

def cmd_verify(cfg, out, workers, only=None):
    from .analysis.checks import run_checks

    out = io.ensure_writable(out)
    man = Manifest("verify", cfg, out)
    try:
        results = run_checks(cfg, only, workers)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    rows = [(r.check, r.statistic, r.tolerance, r.passed) for r in results]
    man.add(io.write_csv(out / "checks.csv", ["check", "statistic", "tolerance", "pass"], rows))
    summary = [r.summary() for r in results]
    man.add(io.write_json(out / "summary.json", summary))
    man.add(io.write_json(out / "details.json", {r.check: r.details for r in results}))
    man.write(checks=summary)
    for r in results:
        print(f"{r.check:14s} {'PASS' if r.passed else 'FAIL'}  statistic={r.statistic:.6g} "
              f"tolerance={r.tolerance:.6g}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


# -- entry ------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="angiosim", description="Tip-cell angiogenesis simulator and mean-field checks.",
                epilog="Config keys:\n" + describe(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("simulate", "meanfield", "converge", "verify"):
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="flat key = value file; missing keys take defaults")
        s.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
        s.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        s.add_argument("--workers", type=int, default=1, help="worker processes")
        if name == "verify":
            s.add_argument("--only", action="append", help="run only this check (repeatable)")
    return p


def load_config(path=None, seed=None) -> RunConfig:
    cfg = parse_config(path) if path is not None else make_config()
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError("seed in [0, 2^64) violated")
        cfg = cfg.replace(master_seed=seed)
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.workers < 1:
            raise UsageError("--workers >= 1 violated")
        cfg = load_config(args.config, args.seed)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out, args.workers)
        if args.command == "meanfield":
            return cmd_meanfield(cfg, args.out, args.workers)
        if args.command == "converge":
            return cmd_converge(cfg, args.out, args.workers)
        return cmd_verify(cfg, args.out, args.workers, args.only)
    except (UsageError, ConfigError, FileNotFoundError, PermissionError, NotImplementedError) as exc:
        print(f"angiosim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, RuntimeError, ValueError) as exc:
        print(f"angiosim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
