"""Residual maps built from the first-order conditions.

Two variants are supported:

``default``
    Unknown ``nu`` of length ``T+1`` (``nu[k]`` multiplies the aggregate
    constraint at period ``k+1``). The adjoint ``lam`` is shared by all
    households, consumption follows from ``theta_h beta_h^t u'(c) = tau lam_t``
    and capital is accumulated forward.

``nodefault``
    Unknowns ``nu`` of length ``T`` and terminal consumption ``cT`` of
    length ``H``. Marginal utilities are recursed backwards per household
    and every household must end with zero capital.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    Allocation,
    DimensionError,
    EconomyParams,
    MultiplierSet,
    UtilitySpec,
    utilities_for,
)

VARIANTS = ("default", "nodefault")


class EvaluationError(ArithmeticError):
    """The recursion left the region where consumption is defined."""

    def __init__(self, message: str, t: int | None = None, h: int | None = None):
        super().__init__(message)
        self.t = t
        self.h = h


@dataclass(frozen=True)
class KKTProblem:
    params: EconomyParams
    utilities: tuple
    theta: np.ndarray
    variant: str = "default"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        object.__setattr__(self, "utilities", utilities_for(self.params, self.utilities))
        theta = np.array(self.theta, dtype=float).ravel()
        if theta.size != self.params.H:
            raise DimensionError(f"theta needs {self.params.H} entries")
        if np.any(theta < 0) or not theta.sum() > 0:
            raise ValueError("theta must be nonnegative with a positive entry")
        if np.any(theta <= 0):
            # the default model admits no zero weights; the no-default
            # recursion divides by theta_h
            raise ValueError("zero scalarization weights are not supported")
        theta = theta / theta.sum()
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def n_unknowns(self) -> int:
        p = self.params
        return p.T + 1 if self.variant == "default" else p.T + p.H

    @property
    def n_complementarity(self) -> int:
        """Leading components of the unknown that carry a sign constraint."""
        p = self.params
        return p.T


def make_problem(params, utilities=None, theta=None, variant="default") -> KKTProblem:
    if theta is None or (isinstance(theta, str) and theta == "equal"):
        theta = np.full(params.H, 1.0 / params.H)
    return KKTProblem(params, utilities, theta, variant)


@dataclass(frozen=True)
class ResidualEvaluation:
    F: np.ndarray
    lam: np.ndarray
    c: np.ndarray
    a: np.ndarray

    @property
    def slack(self) -> np.ndarray:
        """Aggregate capital at periods 1.. (the complementarity partners)."""
        return self.a.sum(axis=0)[1:]


def _require(problem: KKTProblem, variant: str):
    if problem.variant != variant:
        raise TypeError(f"operation needs a {variant!r} problem, got {problem.variant!r}")


def lambda_backward(problem: KKTProblem, nu) -> np.ndarray:
    _require(problem, "default")
    p = problem.params
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (p.T + 1,):
        raise DimensionError(f"nu must have length {p.T + 1}")
    lam = np.empty(p.T + 1)
    lam[p.T] = nu[p.T]
    for t in range(p.T, 0, -1):
        lam[t - 1] = lam[t] * p.gamma[t] + nu[t - 1]
    return lam


def consumption_for_weights(params: EconomyParams, utilities, theta, lam) -> np.ndarray:
    """``c_t^h = (u_h')^{-1}(tau lam_t / (beta_h^t theta_h))`` for raw, unnormalized weights."""
    lam = np.asarray(lam, dtype=float)
    bad = np.flatnonzero(lam <= 0)
    if bad.size:
        t = int(bad[0])
        raise EvaluationError(f"adjoint lam_{t} = {lam[t]:.3e} is not positive", t=t)
    theta = np.asarray(theta, dtype=float)
    weight = params.discount() * theta[:, None]
    x = params.tau * lam[None, :] / weight
    us = utilities_for(params, utilities)
    return np.vstack([u.marginal_inverse(x[h]) for h, u in enumerate(us)])


def consumption_from_lambda(problem: KKTProblem, lam) -> np.ndarray:
    return consumption_for_weights(problem.params, problem.utilities, problem.theta, lam)


def capital_forward(problem: KKTProblem, c) -> np.ndarray:
    """Capital from consumption; through ``a_{T+1}`` (default) or ``a_T`` (nodefault)."""
    from .model import accumulate

    p = problem.params
    periods = p.T + 1 if problem.variant == "default" else p.T
    return accumulate(p, c, periods)


def residual_default(problem: KKTProblem, nu) -> ResidualEvaluation:
    nu = np.asarray(nu, dtype=float)
    lam = lambda_backward(problem, nu)
    c = consumption_from_lambda(problem, lam)
    a = capital_forward(problem, c)
    s = a.sum(axis=0)[1:]
    F = np.empty_like(nu)
    F[:-1] = nu[:-1] * s[:-1]
    F[-1] = s[-1]
    return ResidualEvaluation(F, lam, c, a)


def _marginal_backward(problem: KKTProblem, nu, cT) -> np.ndarray:
    """Discount-free marginal utilities ``u'(c_t^h)`` for the no-default recursion."""
    p = problem.params
    nu = np.asarray(nu, dtype=float)
    cT = np.asarray(cT, dtype=float)
    if nu.shape != (p.T,) or cT.shape != (p.H,):
        raise DimensionError(f"need nu of length {p.T} and cT of length {p.H}")
    for h in np.flatnonzero(~(cT > 0)):
        raise EvaluationError(f"terminal consumption of household {h} is not positive", t=p.T, h=int(h))
    m = np.empty((p.H, p.T + 1))
    m[:, p.T] = [u.marginal(cT[h]) for h, u in enumerate(problem.utilities)]
    beta, theta, tau = p.beta, problem.theta, p.tau
    for t in range(p.T, 0, -1):
        m[:, t - 1] = beta * p.gamma[t] * m[:, t] + tau * nu[t - 1] / (beta ** (t - 1) * theta)
        bad = np.flatnonzero(~(m[:, t - 1] > 0))
        if bad.size:
            h = int(bad[0])
            raise EvaluationError(
                f"marginal utility argument {m[h, t - 1]:.3e} at (h={h}, t={t - 1}) is not positive",
                t=t - 1, h=h,
            )
    return m


def consumption_backward_nodefault(problem: KKTProblem, nu, cT) -> np.ndarray:
    _require(problem, "nodefault")
    m = _marginal_backward(problem, nu, cT)
    c = np.vstack([u.marginal_inverse(m[h]) for h, u in enumerate(problem.utilities)])
    c[:, -1] = np.asarray(cT, dtype=float)
    return c


def residual_nodefault(problem: KKTProblem, nu, cT) -> ResidualEvaluation:
    _require(problem, "nodefault")
    p = problem.params
    nu = np.asarray(nu, dtype=float)
    c = consumption_backward_nodefault(problem, nu, cT)
    a = capital_forward(problem, c)
    s = a.sum(axis=0)[1:]
    terminal = p.xi[:, p.T] + p.gamma[p.T] * a[:, p.T] - p.tau * c[:, p.T]
    F = np.concatenate([nu * s, terminal])
    # adjoints from the consumption condition, one row per household
    lam = problem.theta[:, None] * p.discount() * np.vstack(
        [u.marginal(c[h]) for h, u in enumerate(problem.utilities)]
    ) / p.tau
    a_full = np.column_stack([a, terminal])
    return ResidualEvaluation(F, lam, c, a_full)


def evaluate(problem: KKTProblem, x) -> ResidualEvaluation:
    """Residual at a stacked unknown vector, for either variant."""
    x = np.asarray(x, dtype=float)
    if problem.variant == "default":
        return residual_default(problem, x)
    T = problem.params.T
    return residual_nodefault(problem, x[:T], x[T:])


def residual_sensitivity(problem: KKTProblem, x, ev: ResidualEvaluation | None = None):
    """Exact derivative of the aggregate slacks and equality residuals.

    Returns ``(dslack, deq)`` where ``dslack`` is ``(T, n)`` holding
    derivatives of ``sum_h a_t^h`` for ``t = 1..T`` and ``deq`` holds the
    rows of the unconstrained equations (one row for the default model,
    ``H`` rows for the no-default model).
    """
    p = problem.params
    x = np.asarray(x, dtype=float)
    if ev is None:
        ev = evaluate(problem, x)
    n = problem.n_unknowns
    tau, gamma = p.tau, p.gamma
    ddc = np.vstack([u.second(ev.c[h]) for h, u in enumerate(problem.utilities)])

    if problem.variant == "default":
        # lam_t = sum_{k>=t} nu[k] prod_{v=t+1}^k gamma_v
        L = np.zeros((p.T + 1, n))
        L[p.T, p.T] = 1.0
        for t in range(p.T, 0, -1):
            L[t - 1] = gamma[t] * L[t]
            L[t - 1, t - 1] += 1.0
        weight = p.discount() * problem.theta[:, None]
        # d c_t^h / d lam_t from theta beta^t u'(c) = tau lam
        D = (tau / (weight * ddc)).sum(axis=0)
        dS = np.zeros((p.T + 2, n))
        for t in range(p.T + 1):
            dS[t + 1] = gamma[t] * dS[t] - tau * D[t] * L[t]
        return dS[1:p.T + 1], dS[p.T + 1:p.T + 2]

    T, H = p.T, p.H
    beta, theta = p.beta, problem.theta
    dm = np.zeros((H, T + 1, n))
    for h in range(H):
        dm[h, T, T + h] = ddc[h, T]
    for t in range(T, 0, -1):
        dm[:, t - 1] = (beta * gamma[t])[:, None] * dm[:, t]
        dm[:, t - 1, t - 1] += tau / (beta ** (t - 1) * theta)
    dc = dm / ddc[:, :, None]
    for h in range(H):
        dc[h, T] = 0.0
        dc[h, T, T + h] = 1.0
    da = np.zeros((H, n))
    dslack = np.zeros((T, n))
    for t in range(T + 1):
        da = gamma[t] * da - tau * dc[:, t]
        if t < T:
            dslack[t] = da.sum(axis=0)
    return dslack, da


def _lam_rows(problem: KKTProblem, lam) -> np.ndarray:
    p = problem.params
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 1:
        lam = np.broadcast_to(lam, (p.H, p.T + 1))
    if lam.shape != (p.H, p.T + 1):
        raise DimensionError(f"lam shape {lam.shape} incompatible with H={p.H}, T={p.T}")
    return lam


def kkt_conditions(problem: KKTProblem, alloc: Allocation, mult: MultiplierSet) -> dict[str, float]:
    """Worst violation of each first-order condition, evaluated directly."""
    p = problem.params
    H, T = p.H, p.T
    c, a = alloc.c, alloc.a
    if c.shape != (H, T + 1) or a.shape != (H, T + 2):
        raise DimensionError("allocation does not match problem dimensions")
    theta = np.asarray(mult.theta, dtype=float)
    nu = np.asarray(mult.nu, dtype=float)
    n_nu = T + 1 if problem.variant == "default" else T
    if nu.shape != (n_nu,):
        raise DimensionError(f"nu must have length {n_nu}")
    lam = _lam_rows(problem, mult.lam)
    gamma = p.gamma
    out = {}

    if np.any(c <= 0):
        # stationarity is undefined off the domain of u'
        return {"positivity": np.inf}
    mu = np.vstack([u.marginal(c[h]) for h, u in enumerate(problem.utilities)])
    out["stationarity_c"] = float(np.max(np.abs(-theta[:, None] * p.discount() * mu + p.tau * lam)))
    if T >= 1:
        st_a = -nu[None, :T] + lam[:, :T] - lam[:, 1:] * gamma[None, 1:]
        out["stationarity_a"] = float(np.max(np.abs(st_a)))
    else:
        out["stationarity_a"] = 0.0

    agg = a.sum(axis=0)
    if problem.variant == "default":
        out["terminal_adjoint"] = float(np.max(np.abs(lam[:, T] - nu[T])))
        out["complementarity"] = float(np.max(np.abs(nu * agg[1:]), initial=0.0))
    else:
        out["complementarity"] = float(np.max(np.abs(nu * agg[1:T + 1]), initial=0.0))
        out["terminal_capital"] = float(np.max(np.abs(a[:, T + 1])))
    out["sign"] = float(max(np.max(-nu, initial=0.0), np.max(-theta, initial=0.0), 0.0))
    resid = a[:, 1:] - p.xi - gamma[None, :] * a[:, :-1] + p.tau * c
    out["accumulation"] = float(np.max(np.abs(resid)))
    out["initial"] = float(np.max(np.abs(a[:, 0] - p.a0)))
    upto = T + 2 if problem.variant == "default" else T + 1
    out["aggregate"] = float(max(np.max(-agg[1:upto], initial=0.0), 0.0))
    return out


def kkt_residual_full(problem: KKTProblem, alloc: Allocation, mult: MultiplierSet) -> float:
    return max(kkt_conditions(problem, alloc, mult).values())


__all__ = [
    "EvaluationError",
    "KKTProblem",
    "ResidualEvaluation",
    "UtilitySpec",
    "capital_forward",
    "consumption_backward_nodefault",
    "consumption_for_weights",
    "consumption_from_lambda",
    "evaluate",
    "kkt_conditions",
    "kkt_residual_full",
    "lambda_backward",
    "make_problem",
    "residual_default",
    "residual_nodefault",
    "residual_sensitivity",
]
