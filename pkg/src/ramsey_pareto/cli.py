"""Command line entry point: ``ramsey-pareto solve|verify|sweep``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig, load_config
from .frontier import sweep
from .kkt_core import KKTProblem
from .model import SolveReport
from .oracle import ScalarizedProblem, solve_scalarized
from .solver import SolverError, solve

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NONCONVERGED = 3
EXIT_GAP = 4
EXIT_ORACLE = 5

VERIFY_GAP = 1e-6

log = logging.getLogger("ramsey_pareto")


def fmt(x) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (v if isinstance(v, (str, int)) else fmt(v)) for v in row])


def write_solution(out: Path, cfg: ScenarioConfig, rep: SolveReport) -> None:
    out.mkdir(parents=True, exist_ok=True)
    p = cfg.params
    H, T = p.H, p.T
    c, a = rep.allocation.c, rep.allocation.a
    hh = [f"h{h + 1}" for h in range(H)]
    write_csv(out / "consumption.csv", ["t", *hh], ([t, *c[:, t]] for t in range(T + 1)))
    write_csv(out / "capital.csv", ["t", *hh], ([t, *a[:, t]] for t in range(T + 2)))
    agg_a, agg_c = a.sum(axis=0), c.sum(axis=0)
    write_csv(out / "aggregates.csv", ["t", "capital", "consumption"],
              ([t, agg_a[t], agg_c[t] if t <= T else None] for t in range(T + 2)))
    nu, lam = rep.multipliers.nu, rep.multipliers.lam
    if lam.ndim == 1:
        header = ["t", "nu", "lambda"]
        rows = ([t, nu[t - 1] if 1 <= t <= nu.size else None, lam[t] if t <= T else None]
                for t in range(T + 2))
    else:
        header = ["t", "nu", *(f"lambda_{h}" for h in hh)]
        rows = ([t, nu[t - 1] if 1 <= t <= nu.size else None,
                 *(lam[:, t] if t <= T else [None] * H)] for t in range(T + 2))
    write_csv(out / "multipliers.csv", header, rows)
    (out / "report.txt").write_text(report_text(cfg, rep))


def report_text(cfg: ScenarioConfig, rep: SolveReport) -> str:
    lines = [
        f"scenario: {cfg.source}",
        f"variant: {rep.variant}",
        f"converged: {rep.converged}",
        f"message: {rep.message}",
        f"iterations: {rep.iterations}",
        f"restarts: {rep.restarts}",
        f"residual_norm: {fmt(rep.residual_norm)}",
        f"kkt_audit: {fmt(rep.kkt_audit)}",
        "theta: " + " ".join(fmt(x) for x in rep.multipliers.theta),
        "welfare: " + " ".join(fmt(x) for x in rep.welfare),
        f"weighted_welfare: {fmt(rep.multipliers.theta @ rep.welfare)}",
        "degenerate_periods: " + (" ".join(map(str, rep.degenerate)) or "none"),
        f"feasibility_violations: {len(rep.diagnostics.get('feasibility', []))}",
        f"bound_violations: {len(rep.diagnostics.get('bounds', []))}",
    ]
    for name, value in rep.diagnostics.get("kkt_conditions", {}).items():
        lines.append(f"kkt.{name}: {fmt(value)}")
    return "\n".join(lines) + "\n"


def _apply_flags(cfg: ScenarioConfig, args) -> ScenarioConfig:
    solver = cfg.solver
    if getattr(args, "tol", None) is not None:
        solver = dataclasses.replace(solver, residual_tol=args.tol)
    if getattr(args, "seed", None) is not None:
        solver = dataclasses.replace(solver, seed=args.seed)
    variant = args.variant or cfg.variant
    return dataclasses.replace(cfg, solver=solver, variant=variant)


def _problem(cfg: ScenarioConfig) -> KKTProblem:
    return KKTProblem(cfg.params, cfg.utilities, cfg.theta, cfg.variant)


def _out_dir(cfg: ScenarioConfig, args) -> Path:
    return Path(args.out or cfg.output or "out")


def run_solve(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    try:
        rep = solve(_problem(cfg), cfg.solver)
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    write_solution(_out_dir(cfg, args), cfg, rep)
    print(f"{cfg.variant}: converged={rep.converged} iterations={rep.iterations} "
          f"residual={rep.residual_norm:.3e} audit={rep.kkt_audit:.3e}")
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def run_verify(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    p = cfg.params
    size = p.H * (p.T + 1)
    if size > args.max_size:
        print(f"instance too large for the oracle: H*(T+1) = {size} > {args.max_size} "
              "(raise --max-size to override)", file=sys.stderr)
        return EXIT_PARSE
    problem = _problem(cfg)
    try:
        rep = solve(problem, cfg.solver)
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    orc = solve_scalarized(ScalarizedProblem.from_kkt(problem))
    gap = abs(float(problem.theta @ rep.welfare) - orc.objective)
    per_house = np.abs(rep.welfare - orc.welfare)
    lines = [
        f"variant: {cfg.variant}",
        f"solver_converged: {rep.converged}",
        f"oracle_converged: {orc.converged}",
        f"weighted_welfare_solver: {fmt(problem.theta @ rep.welfare)}",
        f"weighted_welfare_oracle: {fmt(orc.objective)}",
        f"weighted_gap: {fmt(gap)}",
        "household_gaps: " + " ".join(fmt(g) for g in per_house),
        f"solver_kkt_audit: {fmt(rep.kkt_audit)}",
        f"oracle_kkt_audit: {fmt(orc.kkt_audit)}",
    ]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.txt").write_text(text)
    if not orc.converged:
        print("oracle did not converge", file=sys.stderr)
        return EXIT_ORACLE
    if not rep.converged:
        return EXIT_NONCONVERGED
    return EXIT_OK if gap <= VERIFY_GAP else EXIT_GAP


def run_sweep(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    res = sweep(cfg.params, cfg.utilities, args.resolution, cfg.solver, cfg.variant, args.workers)
    H = cfg.params.H
    header = ["section", *(f"theta_{h + 1}" for h in range(H)), *(f"welfare_{h + 1}" for h in range(H)),
              "converged", "dominated"]
    rows = []
    for section, pts in (("grid", res.points), ("frontier", res.frontier)):
        for pt in pts:
            w = pt.welfare if pt.welfare is not None else [None] * H
            rows.append([section, *pt.theta, *w, int(pt.converged), int(pt.dominated)])
    out = _out_dir(cfg, args)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "frontier.csv", header, rows)
    print(f"grid points: {len(res.points)}  frontier: {len(res.frontier)}  failures: {len(res.failures)}")
    return EXIT_OK if not res.failures else EXIT_NONCONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ramsey-pareto", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="YAML scenario or builtin:<name>")
        sp.add_argument("--variant", choices=("default", "nodefault"))
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--tol", type=float, help="solver residual tolerance")
        sp.add_argument("--seed", type=int, help="seed of the restart perturbation")

    sp = sub.add_parser("solve", help="solve one scenario and write trajectories")
    common(sp)
    sp.set_defaults(func=run_solve)

    sp = sub.add_parser("verify", help="compare the solver against the direct oracle")
    common(sp)
    sp.add_argument("--max-size", type=int, default=200, help="largest H*(T+1) handed to the oracle")
    sp.set_defaults(func=run_verify)

    sp = sub.add_parser("sweep", help="trace the frontier over a weight grid")
    common(sp)
    sp.add_argument("--resolution", type=int, default=10)
    sp.add_argument("--workers", type=int, default=None)
    sp.set_defaults(func=run_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        # e.g. a sweep resolution below H
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
