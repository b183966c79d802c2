"""Command-line front-end: ``dynbn run | verify | scenario-gen``."""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import filter as flt
from . import scenario as sc
from . import verify
from .divergence import DEFAULT_GRID
from .errors import DynbnError, ModelMismatchError, ScenarioError

EXIT_OK, EXIT_USAGE, EXIT_MISMATCH = 0, 2, 3
MIN_GRID_CAP = 2 ** 10
_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
           "info": logging.INFO, "debug": logging.DEBUG}

TRAJECTORY_HEADER = ["step", "clique_id", "variable", "mean", "variance"]
COVARIANCE_HEADER = ["step", "clique", "row_var", "col_var", "value"]
DIAGNOSTICS_HEADER = ["step", "obs_index", "family", "m_prior", "w2_prior", "y", "m_post",
                      "w2_post", "dH_lambda", "dV_lower", "dV_upper", "eps1", "eps2", "tau",
                      "bound", "bound_applicable", "dV_lambda", "skipped"]

log = logging.getLogger("dynbn")


@dataclass(frozen=True)
class RunConfig:
    scenario: Path
    out: Path
    diagnostics: bool = True
    oracle_check: bool = False
    grid_cap: int = DEFAULT_GRID.cap
    error_policy: str = flt.ABORT

    def __post_init__(self):
        if self.grid_cap < MIN_GRID_CAP:
            raise ScenarioError(f"--grid-cap must be at least {MIN_GRID_CAP}, got {self.grid_cap}")
        if self.error_policy not in (flt.ABORT, flt.SKIP):
            raise ScenarioError(f"unknown error policy {self.error_policy!r}")
        if not self.scenario.is_file():
            raise ScenarioError(f"scenario file {self.scenario} does not exist")


def fmt(x) -> str:
    """17 significant digits: parses back to the identical double."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _component_names(var: str, dim: int) -> list[str]:
    return [var] if dim == 1 else [f"{var}[{k}]" for k in range(dim)]


def trajectory_rows(traj: flt.Trajectory):
    traj_rows, cov_rows = [], []
    for t, res in enumerate(traj.steps):
        for c, b in enumerate(res.posterior.beliefs):
            names = [n for v, d in zip(b.members, b.dims) for n in _component_names(v, d)]
            for i, n in enumerate(names):
                traj_rows.append([t, c, n, fmt(b.mean[i]), fmt(b.cov[i, i])])
                for j, n2 in enumerate(names):
                    cov_rows.append([t, c, n, n2, fmt(b.cov[i, j])])
    return traj_rows, cov_rows


def diagnostics_rows(traj: flt.Trajectory):
    rows = []
    for res in traj.steps:
        for r in res.records:
            d = r.diagnostics
            eb = d.error_bound if d is not None else None
            rows.append([
                r.step, r.obs_index, r.family, fmt(r.m_prior), fmt(r.w2_prior), fmt(r.y),
                fmt(r.m_post), fmt(r.w2_post),
                fmt(d.dH_lambda if d else math.nan), fmt(d.dV_lower if d else math.nan),
                fmt(d.dV_upper if d else math.nan),
                fmt(eb.eps1 if eb else math.nan), fmt(eb.eps2 if eb else math.nan),
                fmt(eb.tau if eb else math.nan), fmt(eb.bound if eb else math.nan),
                fmt(eb.applicable) if eb else "",
                fmt(d.dV_lambda if d else math.nan), fmt(r.skipped),
            ])
    return rows


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_run(config: RunConfig) -> int:
    scenario = sc.load(config.scenario)
    grid = replace(DEFAULT_GRID, cap=config.grid_cap)
    traj = flt.run(scenario, diagnostics=config.diagnostics, policy=config.error_policy,
                   oracle_check=config.oracle_check, grid=grid)
    config.out.mkdir(parents=True, exist_ok=True)
    traj_rows, cov_rows = trajectory_rows(traj)
    _write_csv(config.out / "trajectory.csv", TRAJECTORY_HEADER, traj_rows)
    _write_csv(config.out / "covariance.csv", COVARIANCE_HEADER, cov_rows)
    if config.diagnostics:
        _write_csv(config.out / "diagnostics.csv", DIAGNOSTICS_HEADER, diagnostics_rows(traj))
    for res in traj.steps:
        if res.oracle_error is not None:
            print(f"step {res.plan.index}: oracle discrepancy {res.oracle_error:.3e}")
    skipped = sum(r.skipped for res in traj.steps for r in res.records)
    log.info("wrote %d steps to %s (%d observations skipped)", len(traj), config.out, skipped)
    return EXIT_OK


def cmd_verify(suite: str) -> int:
    if suite not in verify.SUITES:
        print(f"error: unknown suite {suite!r}; choose from {', '.join(verify.SUITES)}",
              file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if verify.run_suite(suite) else 1


def cmd_scenario_gen(template: str, seed: int, path: Path) -> int:
    scenario = sc.generate(template, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    sc.save(scenario, path)
    return EXIT_OK


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynbn", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="filter a scenario and write CSV tables")
    run.add_argument("--scenario", type=Path, required=True, metavar="PATH")
    run.add_argument("--out", type=Path, required=True, metavar="DIR")
    run.add_argument("--diagnostics", type=_on_off, default=True, metavar="{on,off}")
    run.add_argument("--oracle-check", type=_on_off, default=False, metavar="{on,off}")
    run.add_argument("--grid-cap", type=int, default=DEFAULT_GRID.cap, metavar="N")
    run.add_argument("--error-policy", choices=[flt.ABORT, flt.SKIP], default=flt.ABORT)

    ver = sub.add_parser("verify", help="run a built-in property suite")
    ver.add_argument("--suite", required=True, metavar="NAME",
                     help=f"one of: {', '.join(verify.SUITES)}")

    gen = sub.add_parser("scenario-gen", help="write a synthetic scenario file")
    gen.add_argument("--template", required=True, metavar="NAME",
                     help=f"one of: {', '.join(sc.TEMPLATES)}")
    gen.add_argument("--seed", type=int, required=True, metavar="N")
    gen.add_argument("--out", type=Path, required=True, metavar="PATH")
    return p


def _configure_logging() -> None:
    level = os.environ.get("DYNBN_LOG", "warn").lower()
    logging.basicConfig(level=_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "run":
            return cmd_run(RunConfig(args.scenario, args.out, args.diagnostics,
                                     args.oracle_check, args.grid_cap, args.error_policy))
        if args.command == "verify":
            return cmd_verify(args.suite)
        return cmd_scenario_gen(args.template, args.seed, args.out)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelMismatchError, DynbnError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
