"""Weight sweeps over the simplex and Pareto-dominance filtering."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kkt_core import KKTProblem
from .model import EconomyParams, SolveReport
from .solver import SolverConfig, SolverError, solve

WELFARE_TOL = 1e-9


@dataclass
class FrontierPoint:
    theta: np.ndarray
    welfare: np.ndarray | None
    converged: bool
    report: SolveReport | None = None
    dominated: bool = False
    error: str = ""


@dataclass
class FrontierResult:
    points: list  # every grid point, in lexicographic theta order
    frontier: list  # converged and undominated
    failures: list = field(default_factory=list)


def simplex_grid(H: int, resolution: int) -> list[np.ndarray]:
    """Strictly positive weights ``k/resolution`` summing to one.

    There are ``C(resolution-1, H-1)`` of them, returned in lexicographic
    order.
    """
    if H < 1 or resolution < 1:
        raise ValueError("H and resolution must be >= 1")
    if resolution < H:
        raise ValueError(f"resolution {resolution} < H={H}: no strictly positive grid point")
    grid = []
    # stars and bars: choose H-1 cut points among resolution-1 gaps
    for cuts in itertools.combinations(range(1, resolution), H - 1):
        edges = (0, *cuts, resolution)
        k = np.diff(edges)
        grid.append(k / resolution)
    grid.sort(key=tuple)
    return grid


def dominates(w1, w2, tol: float = 0.0) -> bool:
    """``w1`` is at least as good everywhere and strictly better somewhere."""
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    if w1.shape != w2.shape:
        raise ValueError(f"welfare vectors differ in length: {w1.shape} vs {w2.shape}")
    return bool(np.all(w1 >= w2 - tol) and np.any(w1 > w2 + tol))


def undominated(welfares, tol: float = WELFARE_TOL) -> list[int]:
    """Indices of welfare vectors not dominated by any other in the list."""
    ws = [np.asarray(w, dtype=float) for w in welfares]
    keep = []
    for i, wi in enumerate(ws):
        if not any(dominates(wj, wi, tol) for j, wj in enumerate(ws) if j != i):
            keep.append(i)
    return keep


def _solve_point(params, utilities, theta, variant, config) -> FrontierPoint:
    problem = KKTProblem(params, utilities, theta, variant)
    try:
        rep = solve(problem, config)
    except SolverError as exc:
        return FrontierPoint(problem.theta, None, False, None, error=str(exc))
    w = rep.welfare if rep.converged else None
    return FrontierPoint(problem.theta, w, rep.converged, rep,
                         error="" if rep.converged else rep.message)


def sweep(
    params: EconomyParams,
    utilities=None,
    resolution: int = 10,
    config: SolverConfig | None = None,
    variant: str = "default",
    workers: int | None = None,
) -> FrontierResult:
    config = config or SolverConfig()
    grid = simplex_grid(params.H, resolution)

    def run(theta):
        return _solve_point(params, utilities, theta, variant, config)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(run, grid))
    else:
        points = [run(theta) for theta in grid]

    good = [pt for pt in points if pt.converged]
    keep = set(undominated([pt.welfare for pt in good]))
    for i, pt in enumerate(good):
        pt.dominated = i not in keep
    frontier = [pt for i, pt in enumerate(good) if i in keep]
    failures = [pt for pt in points if not pt.converged]
    return FrontierResult(points, frontier, failures)
