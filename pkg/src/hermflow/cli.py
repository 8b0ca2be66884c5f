"""Command line entry point: ``hermflow run | verify | spectrum | analyze | plot | oracle``.

Exit codes of ``run``: 0 Converged or MaxTime, 2 PositivityLost, 3 Diverged,
1 for configuration and IO failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import multiprocessing
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import diagnostics as dg
from . import exterior as ex
from . import hermitian as hf
from . import linearized as lin
from . import runio
from .config import ConfigError, ScenarioConfig, initial_condition, load_config
from .flow import Status
from .flow import run as run_flow
from .torus import make_grid

log = logging.getLogger("hermflow")

EXIT_OK = 0
EXIT_IO = 1
EXIT_POSITIVITY = 2
EXIT_DIVERGED = 3

STATUS_EXIT = {
    Status.CONVERGED: EXIT_OK,
    Status.MAX_TIME: EXIT_OK,
    Status.POSITIVITY_LOST: EXIT_POSITIVITY,
    Status.DIVERGED: EXIT_DIVERGED,
}

RESIDUAL_COLUMNS = ("t", "balanced", "gauduchon", "conservation", "conservation_drift")


# -- shared pieces -------------------------------------------------------------------

def spectrum_report(grid) -> dict:
    return lin.spectrum(lin.L_flat(grid)).to_dict()


def fit_report(series: dict, lambda1: float) -> dict:
    t = series["t"]
    q2 = series["norm_Q_L2"] ** 2
    if not np.any(q2 > 0):
        return {"status": "skipped", "reason": "Q vanishes identically", "pass": True}
    try:
        fit = dg.decay_fit(t, q2, lambda1=lambda1)
    except dg.FitUnreliable as exc:
        return {"status": "unreliable", "reason": str(exc), "pass": False}
    out = fit.to_dict()
    out["status"] = "ok"
    out["pass"] = fit.decay_bound_ok
    return out


def residual_rows(snapshots) -> list[tuple]:
    """One row per snapshot; residuals are nan where psi is not positive."""
    rows = []
    c0 = None
    for t, u in snapshots:
        c = dg.conservation_functional(u)
        c0 = c if c0 is None else c0
        try:
            bal, gau = dg.balanced_residual(u), dg.gauduchon_residual(u)
        except hf.PositivityLost:
            bal = gau = float("nan")
        rows.append((t, bal, gau, c, abs(c - c0) / abs(c0)))
    return rows


def write_analysis(run_dir: Path, series: dict, snapshots, lambda1: float,
                   plots: bool = True) -> dict:
    fit = fit_report(series, lambda1)
    runio.dump_json(fit, run_dir / "decay_fit.json")
    if snapshots:
        csv_text = runio.series_csv(residual_rows(snapshots), RESIDUAL_COLUMNS)
        (run_dir / "residuals.csv").write_text(csv_text)
    if plots:
        from .plots import render_run
        render_run(series, lambda1, run_dir)
    return fit


def _lambda1(run_dir: Path, manifest: dict) -> float:
    path = run_dir / runio.SPECTRUM
    if path.is_file():
        return float(json.loads(path.read_text())["lambda1"])
    g = manifest["grid"]
    return spectrum_report(make_grid(g["n"], g["resolution"], g["periods"]))["lambda1"]


# -- run -------------------------------------------------------------------------

def run_scenario(cfg: ScenarioConfig, out_dir=None) -> int:
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    try:
        u0 = initial_condition(cfg)
    except (OSError, ValueError) as exc:
        log.error("initial condition: %s", exc)
        return EXIT_IO
    result = run_flow(u0, cfg.flow)
    spec = spectrum_report(cfg.grid)
    try:
        runio.write_run(result, out, config=cfg.to_dict(), seed=cfg.seed, spectrum=spec)
        d = cfg.diagnostics
        series = {name: result.series(name) for name in runio.SERIES_COLUMNS}
        if d["decay_fit"]:
            runio.dump_json(fit_report(series, spec["lambda1"]), out / "decay_fit.json")
        if d["residuals"]:
            rows = residual_rows(result.snapshots)
            (out / "residuals.csv").write_text(runio.series_csv(rows, RESIDUAL_COLUMNS))
        if d["plots"]:
            from .plots import render_run
            render_run(series, spec["lambda1"], out)
    except OSError as exc:
        log.error("cannot write run directory %s: %s", out, exc)
        return EXIT_IO
    final = result.final
    print(f"{out}: {result.status.value} at t={final.t:.6g} after {final.step} steps"
          f" (|Q|={result.rows[-1][2] if result.rows else float('nan'):.3e})")
    return STATUS_EXIT[result.status]


def _run_one(config_path: str, out_dir: str | None) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        log.error("%s: %s", config_path, exc)
        return EXIT_IO
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    return run_scenario(cfg, out_dir)


def _combine(codes) -> int:
    codes = list(codes)
    if EXIT_IO in codes:
        return EXIT_IO
    return max(codes, default=EXIT_OK)


def worker_cap(requested: int) -> int:
    cap = os.environ.get("HERMFLOW_THREADS")
    jobs = max(1, requested)
    if cap:
        try:
            jobs = min(jobs, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring HERMFLOW_THREADS=%r", cap)
    return jobs


def cmd_run(args) -> int:
    configs = args.config
    if len(configs) == 1:
        return _run_one(configs[0], args.out)
    outs = []
    for c in configs:
        if args.out is not None:
            outs.append(str(Path(args.out) / Path(c).stem))
        else:
            try:
                outs.append(str(Path(load_config(c).output_dir).resolve()))
            except (ConfigError, OSError) as exc:
                log.error("%s: %s", c, exc)
                return EXIT_IO
    if len(set(map(os.path.abspath, outs))) != len(outs):
        log.error("batch scenarios must write to distinct output directories")
        return EXIT_IO
    jobs = worker_cap(args.jobs)
    if jobs == 1:
        return _combine(_run_one(c, o) for c, o in zip(configs, outs))
    # spawn, not fork: a forked child inherits BLAS and plotting thread state
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
        return _combine(pool.map(_run_one, configs, outs))


# -- other subcommands ----------------------------------------------------------

def cmd_verify(args) -> int:
    from jsonschema import Draft202012Validator

    from . import verify
    checks = verify.run_checks(fast=args.fast)
    rep = verify.report(checks)
    Draft202012Validator(verify.report_schema()).validate(rep)
    text = json.dumps(rep, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    for c in checks:
        log.info("%-32s %s  measured %.3e %s %.1e", c.name, "PASS" if c.passed else "FAIL",
                 c.measured, c.comparison, c.tolerance)
    return EXIT_OK if rep["passed"] else EXIT_IO


def cmd_spectrum(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    text = json.dumps(spectrum_report(cfg.grid), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_analyze(args) -> int:
    run_dir = Path(args.run_dir)
    try:
        manifest = runio.read_manifest(run_dir)
        series = runio.read_series(run_dir)
        snaps = runio.read_snapshots(run_dir)
        fit = write_analysis(run_dir, series, snaps, _lambda1(run_dir, manifest))
    except (OSError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    print(f"{run_dir}: decay fit {fit['status']}"
          + (f", rate {fit['rate']:.6g} (2 lambda1 = {2 * fit['lambda1']:.6g})"
             if fit["status"] == "ok" else ""))
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plots import render_run
    run_dir = Path(args.run_dir)
    try:
        series = runio.read_series(run_dir)
        lam = None
        if (run_dir / runio.SPECTRUM).is_file() or (run_dir / runio.MANIFEST).is_file():
            lam = _lambda1(run_dir, runio.read_manifest(run_dir)
                           if (run_dir / runio.MANIFEST).is_file() else {})
        paths = render_run(series, lam, run_dir)
    except (OSError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_oracle(args) -> int:
    sys.stdout.write(json.dumps(ex.convention_report(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hermflow", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"hermflow {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one or more scenarios")
    p.add_argument("config", nargs="+")
    p.add_argument("--out", default=None, help="output directory (parent directory in batch mode)")
    p.add_argument("--jobs", type=int, default=1, help="parallel processes for batch mode")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run the hypothesis and oracle suite")
    p.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    p.add_argument("--fast", action="store_true", help="fewer random samples")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("spectrum", help="spectrum of the flat linearization for a scenario grid")
    p.add_argument("config")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("analyze", help="decay fit, residuals and plots for a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("plot", help="render SVG plots for a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("oracle", help="print the frozen psi conventions")
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
