"""Command-line entry point: ``sfdemc <subcommand> --config FILE``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import greeks as G
from .config import ConfigError, RunConfig, parse_config
from .core import NumericalAbort
from .linalg import jacobi_eigvals
from .malliavin import covariance_joint
from .montecarlo import collect, run_ensemble_multi
from .oracles import gaussian_joint_density, kde_estimate
from .payoffs import parse_payoff
from .solver import observable, simulate

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3

HEADERS = {
    "simulate": ["time", "mean", "stderr", "n_paths"],
    "covariance": ["times", "n_paths", "min_eig_min", "min_eig_median", "min_eig_mean",
                   "det_min", "det_median", "det_mean", "frac_positive"],
    "density": ["point", "kde", "oracle", "abs_err"],
    "greeks": ["payoff", "method", "mean", "stderr", "n_paths", "seed", "elapsed"],
    "validate": ["criterion", "observed", "allowed", "pass"],
}

_METHOD = {
    "malliavin": "malliavin-general", "malliavin_general": "malliavin-general",
    "malliavin-general": "malliavin-general", "malliavin_smalltime": "malliavin-smalltime",
    "malliavin-smalltime": "malliavin-smalltime", "fd": "finite-difference",
    "finite_difference": "finite-difference", "finite-difference": "finite-difference",
    "closed_form": "closed-form", "closed-form": "closed-form",
}


def _num(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return v


def _times(cfg: RunConfig, default_last=True):
    ts = cfg.get("experiment.times")
    if ts:
        return tuple(ts)
    t = cfg.get("experiment.t_eval")
    return (t,) if t is not None else ((cfg["grid.T"],) if default_last else ())


def cmd_simulate(cfg: RunConfig):
    model, grid = cfg.model(), cfg.grid()
    times = cfg.get("experiment.times") or tuple(grid.forward_times)

    def job(seed, ids):
        p = simulate(model, grid, seed, ids)
        return np.stack([observable(model, p, t) for t in times], axis=1)

    ests = run_ensemble_multi(job, cfg["n_paths"], cfg["seed"], cfg["threads"])
    return [[t, e.mean, e.stderr, e.n_paths] for t, e in zip(times, ests)], True


def cmd_covariance(cfg: RunConfig):
    model, grid = cfg.model(), cfg.grid()
    times = _times(cfg)

    def job(seed, ids):
        p = simulate(model, grid, seed, ids)
        V = covariance_joint(model, p, times)
        return np.stack([jacobi_eigvals(V)[:, 0], np.linalg.det(V)], axis=1)

    res = collect(job, cfg["n_paths"], cfg["seed"], cfg["threads"])
    me, de = res[:, 0], res[:, 1]
    row = [";".join(repr(float(t)) for t in times), len(me), me.min(), np.median(me), me.mean(),
           de.min(), np.median(de), de.mean(), float(np.mean(me > 0))]
    return [row], True


def cmd_density(cfg: RunConfig):
    model, grid = cfg.model(), cfg.grid()
    if model.d != 1:
        raise ConfigError("density supports one-dimensional models")
    times = _times(cfg)
    pts = cfg.get("experiment.points") or tuple(
        tuple(v) for v in np.array(np.meshgrid(*[[-1.0, 0.0, 1.0]] * len(times))).reshape(len(times), -1).T)
    if any(len(p) != len(times) for p in pts):
        raise ConfigError(f"each density point needs {len(times)} coordinates", cfg.lines.get("experiment.points"))

    def job(seed, ids):
        p = simulate(model, grid, seed, ids)
        return np.stack([p.at(t)[:, 0] for t in times], axis=1)

    samples = collect(job, cfg["n_paths"], cfg["seed"], cfg["threads"])
    kde = kde_estimate(samples, np.asarray(pts))
    if cfg.variant == "bm":
        oracle = gaussian_joint_density(times, np.asarray(pts))
    else:
        oracle = np.full(len(pts), np.nan)
    rows = [[";".join(repr(float(c)) for c in p), k, o, abs(k - o)] for p, k, o in zip(pts, kde, oracle)]
    return rows, True


def cmd_greeks(cfg: RunConfig):
    model, grid = cfg.model(), cfg.grid()
    t = cfg.get("experiment.t_eval", cfg["grid.T"])
    asian = bool(cfg.get("experiment.asian", False))
    payoffs = cfg.get("experiment.payoffs") or ("call:100",)
    methods = cfg.get("experiment.methods") or ("malliavin", "finite-difference")
    rows = []
    for ptxt in payoffs:
        for mname in methods:
            req = G.GreekRequest(model, parse_payoff(ptxt), t, grid, _METHOD[mname], asian=asian,
                                 scheme=cfg.get("experiment.scheme"), research=bool(cfg.get("experiment.research")),
                                 h=cfg.get("experiment.h"))
            e = G.delta_estimator(req, cfg["n_paths"], cfg["seed"], cfg["threads"])
            rows.append([ptxt, mname, e.mean, e.stderr, e.n_paths, e.seed, e.elapsed])
    return rows, True


def cmd_validate(cfg: RunConfig):
    from .validation import run_all

    threads = cfg["threads"]
    other = 8 if threads != 8 else 1
    results = run_all(cfg["n_paths"], cfg.get("experiment.criteria"), (threads, other))
    rows = [[r.name, r.observed, r.allowed, "pass" if r.passed else "fail"] for r in results]
    return rows, all(r.passed for r in results)


COMMANDS = {
    "simulate": cmd_simulate,
    "covariance": cmd_covariance,
    "density": cmd_density,
    "greeks": cmd_greeks,
    "validate": cmd_validate,
}


def render(cmd: str, rows, fmt: str) -> str:
    header = HEADERS[cmd]
    if fmt == "json":
        return json.dumps([dict(zip(header, [float(v) if isinstance(v, np.floating) else
                                              (int(v) if isinstance(v, np.integer) else v) for v in r]))
                           for r in rows], indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(v) for v in r])
    return buf.getvalue()


def run_subcommand(cmd: str, cfg: RunConfig) -> tuple[int, str]:
    """Run a subcommand; returns the exit status and the rendered report."""
    rows, ok = COMMANDS[cmd](cfg)
    return (EXIT_OK if ok else EXIT_FAIL), render(cmd, rows, cfg["format"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sfdemc", description="Malliavin Monte Carlo for delay equations")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="configuration file ('-' for stdin)")
    ap.add_argument("--threads", type=int, help="override mc.threads")
    ap.add_argument("--seed", type=int, help="override mc.seed")
    ap.add_argument("--out", help="override output.path ('-' for stdout)")
    ap.add_argument("--format", choices=("csv", "json"), help="override output.format")
    ap.add_argument("--print-config", action="store_true", help="print the effective configuration and exit")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        text = sys.stdin.read() if args.config == "-" else open(args.config, encoding="utf-8").read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = parse_config(text)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = cfg.with_overrides(threads=args.threads, seed=args.seed, path=args.out, format=args.format)
        if args.print_config:
            sys.stdout.write(cfg.emit())
            return EXIT_OK
        status, report = run_subcommand(args.command, cfg)
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    out = cfg["output.path"]
    if out == "-":
        sys.stdout.write(report)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(report)
    if status == EXIT_FAIL:
        fails = [r for r in csv.reader(io.StringIO(report))][1:] if cfg["format"] == "csv" else \
            [list(d.values()) for d in json.loads(report)]
        for r in fails:
            if r[-1] == "fail":
                print(f"FAILED: {r[0]}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
