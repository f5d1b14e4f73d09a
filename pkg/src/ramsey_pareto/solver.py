"""Damped semismooth Newton method for the complementarity systems.

The sign-constrained unknowns ``nu_t`` and their slacks (aggregate capital
at ``t = 1..T``) are coupled through an NCP function, the remaining
equations are kept as they are. The merit function is ``0.5*||Phi||^2``
with Armijo backtracking.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .kkt_core import (
    EvaluationError,
    KKTProblem,
    ResidualEvaluation,
    evaluate,
    kkt_conditions,
    residual_sensitivity,
)
from .model import (
    Allocation,
    InfeasibleError,
    MultiplierSet,
    SolveReport,
    accumulate,
    bound_violations,
    check_feasibility,
    household_wealth,
    welfare,
)

log = logging.getLogger(__name__)

FB_KINK_DERIVATIVE = 1.0 / math.sqrt(2.0) - 1.0


class SolverError(RuntimeError):
    """Raised when the residual cannot be evaluated at the starting point."""


@dataclass(frozen=True)
class SolverConfig:
    residual_tol: float = 1e-10
    max_iterations: int = 200
    fd_step: float = 1e-7
    backtrack: float = 0.5
    min_step: float = 1e-12
    armijo: float = 1e-4
    jacobian: str = "analytic"  # or "fd"
    ncp: str = "fb"  # or "min"
    ncp_scale: float | None = None  # None: automatic
    audit_tol: float = 1e-8
    feasibility_tol: float = 1e-9
    restart_perturbation: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if not (self.residual_tol > 0 and self.fd_step > 0 and self.min_step > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if self.jacobian not in ("analytic", "fd"):
            raise ValueError("jacobian must be 'analytic' or 'fd'")
        if self.ncp not in ("fb", "min"):
            raise ValueError("ncp must be 'fb' or 'min'")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


def fischer_burmeister(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return np.hypot(p, q) - p - q


def fischer_burmeister_grad(p, q):
    """Element of the generalized Jacobian of the FB function.

    At the kink ``p = q = 0`` the element ``(1/sqrt(2) - 1)(1, 1)`` is used.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    r = np.hypot(p, q)
    kink = r == 0
    safe = np.where(kink, 1.0, r)
    dp = np.where(kink, FB_KINK_DERIVATIVE, p / safe - 1.0)
    dq = np.where(kink, FB_KINK_DERIVATIVE, q / safe - 1.0)
    return dp, dq


def min_ncp(p, q):
    return np.minimum(p, q)


def min_ncp_grad(p, q):
    # ties pick the multiplier side
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    take_p = p <= q
    return take_p.astype(float), (~take_p).astype(float)


_NCP = {"fb": (fischer_burmeister, fischer_burmeister_grad), "min": (min_ncp, min_ncp_grad)}


@dataclass(frozen=True)
class NCPSystem:
    """``Phi(x) = (phi(scale*nu_t, slack_t))_t`` followed by the equalities.

    ``scale > 0`` converts multiplier units into capital units; it leaves the
    root set unchanged but matters a lot for the FB merit landscape.
    """

    problem: KKTProblem
    ncp: str = "fb"
    scale: float = 1.0

    @property
    def dim(self) -> int:
        return self.problem.n_unknowns

    def split(self, ev: ResidualEvaluation):
        """Slack ``sum_h a_t^h`` for t=1..T and the equality residuals."""
        T = self.problem.params.T
        return ev.slack[:T], ev.F[T:]

    def residual(self, x) -> tuple[np.ndarray, ResidualEvaluation]:
        x = np.asarray(x, dtype=float)
        ev = evaluate(self.problem, x)
        T = self.problem.params.T
        slack, eq = self.split(ev)
        phi = _NCP[self.ncp][0](self.scale * x[:T], slack)
        return np.concatenate([phi, eq]), ev

    def __call__(self, x) -> np.ndarray:
        return self.residual(x)[0]


def reformulate(problem: KKTProblem, ncp: str = "fb", scale: float = 1.0) -> NCPSystem:
    if ncp not in _NCP:
        raise ValueError(f"unknown NCP function {ncp!r}")
    if not scale > 0:
        raise ValueError("NCP scale must be positive")
    return NCPSystem(problem, ncp, float(scale))


def auto_scale(problem: KKTProblem, x) -> float:
    """Typical size of ``d slack_t / d nu`` at ``x``, used as the NCP scale."""
    if problem.params.T == 0:
        return 1.0
    dslack, _ = residual_sensitivity(problem, x)
    rows = np.max(np.abs(dslack), axis=1)
    scale = float(np.mean(rows))
    return scale if np.isfinite(scale) and scale > 0 else 1.0


def jacobian(system: NCPSystem, x, mode: str = "analytic", step: float = 1e-7,
             ev: ResidualEvaluation | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if mode == "fd":
        return _fd_jacobian(system, x, step)
    problem = system.problem
    T = problem.params.T
    if ev is None:
        ev = evaluate(problem, x)
    dslack, deq = residual_sensitivity(problem, x, ev)
    slack, _ = system.split(ev)
    dp, dq = _NCP[system.ncp][1](system.scale * x[:T], slack)
    J = np.empty((system.dim, system.dim))
    J[:T] = dq[:, None] * dslack
    J[:T, :T] += np.diag(system.scale * dp)
    J[T:] = deq
    return J


def _fd_jacobian(system: NCPSystem, x: np.ndarray, step: float) -> np.ndarray:
    f0 = system(x)
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = step * max(1.0, abs(x[j]))
        xp = x.copy()
        xp[j] += h
        try:
            J[:, j] = (system(xp) - f0) / h
        except EvaluationError:
            xp[j] = x[j] - h
            J[:, j] = (f0 - system(xp)) / h
    return J


def default_initial_point(problem: KKTProblem) -> np.ndarray:
    """Interior start: all intermediate multipliers zero.

    Default model: the terminal multiplier is set so the coalition ends with
    zero capital. No-default model: each household exhausts its own wealth
    along its unconstrained Euler path.
    """
    p = problem.params
    if problem.variant == "default":
        x = np.zeros(p.T + 1)

        def terminal(log_nu):
            x[p.T] = math.exp(log_nu)
            return evaluate(problem, x).F[-1]

        lo, hi = -1.0, 1.0
        while terminal(lo) > 0:
            lo -= 4.0
        while terminal(hi) < 0:
            hi += 4.0
        x[p.T] = math.exp(brentq(terminal, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps))
        return x

    wealth = household_wealth(p)
    if np.any(wealth <= 0):
        bad = np.flatnonzero(wealth <= 0).tolist()
        raise InfeasibleError(f"households {bad} cannot end with nonnegative capital")
    cT = np.empty(p.H)
    for h, u in enumerate(problem.utilities):
        # Euler path: u'(c_t) = u'(c_T) prod_{v=t+1}^T beta*gamma_v
        growth = np.ones(p.T + 1)
        for t in range(p.T, 0, -1):
            growth[t - 1] = growth[t] * p.beta[h] * p.gamma[t]

        def terminal(log_c, h=h, u=u, growth=growth):
            c = u.marginal_inverse(growth * u.marginal(math.exp(log_c)))
            a = p.a0[h]
            for t in range(p.T + 1):
                a = p.xi[h, t] + p.gamma[t] * a - p.tau * c[t]
            return a

        lo, hi = -1.0, 1.0
        while terminal(lo) < 0:
            lo -= 4.0
        while terminal(hi) > 0:
            hi += 4.0
        cT[h] = math.exp(brentq(terminal, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps))
    return np.concatenate([np.zeros(p.T), cT])


@dataclass
class _NewtonResult:
    x: np.ndarray
    phi: np.ndarray
    ev: ResidualEvaluation
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    message: str = ""


def _newton(system: NCPSystem, x0: np.ndarray, config: SolverConfig) -> _NewtonResult:
    x = np.array(x0, dtype=float)
    try:
        phi, ev = system.residual(x)
    except EvaluationError as exc:
        raise SolverError(
            f"residual undefined at the initial point ({exc}); try a different initial point"
        ) from exc
    merit = 0.5 * float(phi @ phi)
    trace = [{"iteration": 0, "norm2": math.sqrt(2 * merit), "norm_inf": float(np.max(np.abs(phi))), "step": 0.0}]
    for k in range(1, config.max_iterations + 1):
        if np.max(np.abs(phi)) <= config.residual_tol:
            return _NewtonResult(x, phi, ev, k - 1, True, trace, "converged")
        J = jacobian(system, x, config.jacobian, config.fd_step, ev)
        try:
            d = np.linalg.solve(J, -phi)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(J, -phi, rcond=None)[0]
        slope = float(phi @ (J @ d))
        if not np.all(np.isfinite(d)) or slope >= 0:
            d = -J.T @ phi
            slope = float(phi @ (J @ d))
        alpha = 1.0
        accepted = False
        while alpha >= config.min_step:
            xt = x + alpha * d
            try:
                phit, evt = system.residual(xt)
            except EvaluationError:
                alpha *= config.backtrack
                continue
            mt = 0.5 * float(phit @ phit)
            if np.isfinite(mt) and mt <= merit + config.armijo * alpha * slope and mt < merit:
                accepted = True
                break
            alpha *= config.backtrack
        if not accepted:
            return _NewtonResult(x, phi, ev, k, False, trace, "line search failed")
        x, phi, ev, merit = xt, phit, evt, mt
        trace.append({"iteration": k, "norm2": math.sqrt(2 * merit),
                      "norm_inf": float(np.max(np.abs(phi))), "step": alpha})
        log.debug("iter %d |phi|=%.3e step=%.2e", k, trace[-1]["norm_inf"], alpha)
    converged = bool(np.max(np.abs(phi)) <= config.residual_tol)
    return _NewtonResult(x, phi, ev, config.max_iterations, converged, trace,
                         "converged" if converged else "iteration limit")


def _report(problem: KKTProblem, res: _NewtonResult, config: SolverConfig, restarts: int) -> SolveReport:
    p = problem.params
    T = p.T
    ev = res.ev
    c = ev.c
    alloc = Allocation(c, accumulate(p, c))
    if problem.variant == "default":
        nu = res.x.copy()
        lam = ev.lam
    else:
        nu = res.x[:T].copy()
        lam = ev.lam
    mult = MultiplierSet(problem.theta, nu, lam)
    audit = kkt_conditions(problem, alloc, mult)
    slack = alloc.aggregate_capital[1:T + 1]
    degenerate = [t + 1 for t in range(T)
                  if abs(nu[t]) <= config.audit_tol and abs(slack[t]) <= config.audit_tol]
    diagnostics = {
        "kkt_conditions": audit,
        "feasibility": check_feasibility(p, alloc, config.feasibility_tol, problem.variant),
        "bounds": bound_violations(p, alloc, config.feasibility_tol),
    }
    return SolveReport(
        allocation=alloc,
        multipliers=mult,
        residual_norm=float(np.max(np.abs(res.phi))),
        iterations=res.iterations,
        converged=res.converged,
        welfare=welfare(p, problem.utilities, alloc),
        variant=problem.variant,
        kkt_audit=max(audit.values()),
        trace=res.trace,
        degenerate=degenerate,
        restarts=restarts,
        message=res.message,
        diagnostics=diagnostics,
    )


def solve(problem: KKTProblem, config: SolverConfig | None = None, initial=None) -> SolveReport:
    """Solve the complementarity system for fixed weights ``theta``.

    ``initial`` is the stacked unknown (``nu`` for the default model,
    ``(nu, cT)`` for the no-default model).
    """
    config = config or SolverConfig()
    x0 = default_initial_point(problem) if initial is None else np.asarray(initial, dtype=float)
    if x0.shape != (problem.n_unknowns,):
        raise ValueError(f"initial point must have length {problem.n_unknowns}")
    scale = config.ncp_scale
    if scale is None:
        try:
            scale = auto_scale(problem, x0)
        except EvaluationError as exc:
            raise SolverError(f"residual undefined at the initial point ({exc})") from exc
    system = reformulate(problem, config.ncp, scale)
    first_error = None
    try:
        res = _newton(system, x0, config)
        if res.converged:
            return _report(problem, res, config, 0)
    except SolverError as exc:
        res, first_error = None, exc
    rng = np.random.default_rng(config.seed)
    x1 = x0 * (1.0 + config.restart_perturbation * rng.standard_normal(x0.size))
    try:
        res2 = _newton(system, x1, config)
    except SolverError:
        if res is None:
            raise first_error
        return _report(problem, res, config, 1)
    if res is None or res2.converged or np.max(np.abs(res2.phi)) < np.max(np.abs(res.phi)):
        return _report(problem, res2, config, 1)
    return _report(problem, res, config, 1)


def with_tolerance(config: SolverConfig, tol: float) -> SolverConfig:
    return replace(config, residual_tol=tol)
