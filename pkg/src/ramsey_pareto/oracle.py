"""Direct weighted-welfare maximization, independent of the KKT residual maps.

Capital is eliminated through its closed-form expansion, so the only
decision variable is consumption. Aggregate-capital inequalities (and, in the
no-default model, the per-household terminal inequalities) together with
``c > 0`` are handled by a logarithmic barrier whose weight shrinks
geometrically. Each barrier subproblem is solved by damped Newton ascent
with a fraction-to-boundary rule that keeps iterates strictly interior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kkt_core import KKTProblem, kkt_conditions
from .model import (
    Allocation,
    EconomyParams,
    MultiplierSet,
    feasible_seed,
    feasible_seed_nodefault,
    utilities_for,
)


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class CapitalMap:
    """``a[:, 1:] = base - c @ M.T`` row-wise for every household.

    ``M[t, s] = tau * prod_{v=s+1}^t gamma_v`` for ``s <= t``.
    """

    base: np.ndarray
    M: np.ndarray

    def __call__(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        return self.base - c @ self.M.T


def eliminate_capital(params: EconomyParams) -> CapitalMap:
    n = params.T + 1
    gamma = params.gamma
    M = np.zeros((n, n))
    base = np.empty((params.H, n))
    prev = params.a0.astype(float)
    for t in range(n):
        if t:
            M[t, :t] = gamma[t] * M[t - 1, :t]
        M[t, t] = params.tau
        prev = params.xi[:, t] + gamma[t] * prev
        base[:, t] = prev
    return CapitalMap(base, M)


@dataclass(frozen=True)
class ScalarizedProblem:
    params: EconomyParams
    utilities: tuple
    theta: np.ndarray
    variant: str = "default"

    def __post_init__(self):
        object.__setattr__(self, "utilities", utilities_for(self.params, self.utilities))
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (self.params.H,) or np.any(theta < 0) or not theta.sum() > 0:
            raise ValueError("theta must be a nonnegative length-H vector with a positive entry")
        object.__setattr__(self, "theta", theta / theta.sum())
        if self.variant not in ("default", "nodefault"):
            raise ValueError("variant must be 'default' or 'nodefault'")

    @classmethod
    def from_kkt(cls, problem: KKTProblem) -> "ScalarizedProblem":
        return cls(problem.params, problem.utilities, problem.theta, problem.variant)

    def objective(self, c) -> float:
        return float(self.theta @ self.household_welfare(c))

    def household_welfare(self, c) -> np.ndarray:
        disc = self.params.discount()
        return np.array([disc[h] @ u.value(c[h]) for h, u in enumerate(self.utilities)])


@dataclass
class OracleResult:
    c: np.ndarray
    a: np.ndarray
    welfare: np.ndarray
    objective: float
    nu: np.ndarray
    lam: np.ndarray
    mu: float
    iterations: int
    converged: bool
    min_slack: float
    polished: bool = False
    kkt_audit: float = float("nan")
    history: list = field(default_factory=list)

    @property
    def allocation(self) -> Allocation:
        return Allocation(self.c, self.a)


class _Barrier:
    """Constraint data ``g(c) = g0 - G @ vec(c) >= 0`` plus the ``c > 0`` bounds."""

    def __init__(self, sp: ScalarizedProblem):
        p = sp.params
        self.sp = sp
        self.cmap = eliminate_capital(p)
        H, n = p.H, p.T + 1
        agg_rows = n if sp.variant == "default" else n - 1
        # aggregate: sum_h a_{t+1}^h = sum_h base - M @ sum_h c_h
        G = np.zeros((agg_rows + (H if sp.variant == "nodefault" else 0), H * n))
        g0 = np.zeros(G.shape[0])
        for h in range(H):
            G[:agg_rows, h * n:(h + 1) * n] = self.cmap.M[:agg_rows]
        g0[:agg_rows] = self.cmap.base.sum(axis=0)[:agg_rows]
        if sp.variant == "nodefault":
            for h in range(H):
                G[agg_rows + h, h * n:(h + 1) * n] = self.cmap.M[n - 1]
                g0[agg_rows + h] = self.cmap.base[h, n - 1]
        self.G, self.g0, self.n_agg = G, g0, agg_rows
        self.weight = (sp.theta[:, None] * p.discount()).ravel()
        self.shape = (H, n)

    def slacks(self, x):
        return self.g0 - self.G @ x

    def value(self, x, mu):
        s = self.slacks(x)
        if np.any(x <= 0) or np.any(s <= 0):
            return -np.inf
        c = x.reshape(self.shape)
        util = np.concatenate([u.value(c[h]) for h, u in enumerate(self.sp.utilities)])
        return float(self.weight @ util + mu * (np.log(s).sum() + np.log(x).sum()))

    def derivatives(self, x, mu):
        c = x.reshape(self.shape)
        us = self.sp.utilities
        du = np.concatenate([u.marginal(c[h]) for h, u in enumerate(us)])
        d2u = np.concatenate([u.second(c[h]) for h, u in enumerate(us)])
        s = self.slacks(x)
        grad = self.weight * du - self.G.T @ (mu / s) + mu / x
        Gs = self.G / s[:, None]
        hess = -mu * (Gs.T @ Gs)
        hess[np.diag_indices_from(hess)] += self.weight * d2u - mu / x**2
        return grad, hess


def _max_step(x, dx, s, ds, frac=0.99):
    alpha = 1.0
    neg = dx < 0
    if np.any(neg):
        alpha = min(alpha, frac * np.min(-x[neg] / dx[neg]))
    neg = ds < 0
    if np.any(neg):
        alpha = min(alpha, frac * np.min(-s[neg] / ds[neg]))
    return alpha


def _equality_newton(bar: _Barrier, x, y, active, max_iter: int = 50):
    """Newton on the KKT system with the ``active`` constraints as equalities."""
    GA = bar.G[active]
    k = GA.shape[0]
    n = x.size
    us = bar.sp.utilities
    for _ in range(max_iter):
        c = x.reshape(bar.shape)
        du = np.concatenate([u.marginal(c[h]) for h, u in enumerate(us)])
        d2u = np.concatenate([u.second(c[h]) for h, u in enumerate(us)])
        r1 = bar.weight * du - GA.T @ y
        sA = bar.g0[active] - GA @ x
        scale = 1.0 + np.max(np.abs(bar.weight * du))
        if max(np.max(np.abs(r1)), np.max(np.abs(sA), initial=0.0)) <= 1e-14 * scale:
            return x, y
        K = np.zeros((n + k, n + k))
        K[:n, :n] = np.diag(bar.weight * d2u)
        K[:n, n:] = -GA.T
        K[n:, :n] = GA
        try:
            step = np.linalg.solve(K, np.concatenate([-r1, sA]))
        except np.linalg.LinAlgError:
            return None
        alpha = 1.0
        while np.any(x + alpha * step[:n] <= 0) and alpha > 1e-8:
            alpha *= 0.5
        x = x + alpha * step[:n]
        y = y + alpha * step[n:]
    return x, y


def _polish(bar: _Barrier, x, mu, max_rounds: int = 40):
    """Active-set refinement of a barrier point.

    The first guess takes as active every constraint whose multiplier
    estimate ``mu / slack`` exceeds the slack. Each round solves the
    equality-constrained KKT system, then adds violated inactive
    constraints and drops active ones with negative multipliers. Returns
    ``(x, y)`` for a valid KKT point or ``None``.
    """
    s = bar.slacks(x)
    y_est = mu / s
    active = y_est > s
    scale = 1.0 + np.max(np.abs(bar.g0))
    seen = set()
    for _ in range(max_rounds):
        key = active.tobytes()
        if key in seen:
            return None
        seen.add(key)
        out = _equality_newton(bar, x.copy(), y_est[active].copy(), active)
        if out is None:
            return None
        xn, y = out
        s = bar.slacks(xn)
        if np.any(xn <= 0):
            return None
        violated = ~active & (s < -1e-12 * scale)
        negative = np.zeros_like(active)
        negative[active] = y < -1e-12
        if not violated.any() and not negative.any():
            full = np.zeros(s.size)
            full[active] = np.maximum(y, 0.0)
            return xn, full
        y_full = np.zeros(s.size)
        y_full[active] = y
        active = (active & ~negative) | violated
        y_est = np.where(active, np.where(y_full > 0, y_full, mu), 0.0)
    return None


def solve_scalarized(
    sp: ScalarizedProblem,
    tol: float = 1e-8,
    mu0: float = 1.0,
    shrink: float = 0.2,
    max_inner: int = 100,
    max_outer: int = 100,
    polish: bool = True,
) -> OracleResult:
    """Maximize ``sum_h theta_h sum_t beta_h^t u_h(c_t^h)`` over the feasible set.

    The barrier loop stops when the barrier weight and the barrier-gradient
    norm both drop to ``tol``. The gradient norm is the max-norm or, when
    that sits on the rounding floor of a nearly active constraint, the
    Newton decrement ``sqrt(-g' H^-1 g)``. Multiplier estimates
    ``mu / slack`` from the last barrier subproblem then seed an
    active-set polish; the polished point is kept only if it is a valid
    KKT point.
    """
    p = sp.params
    bar = _Barrier(sp)
    seed = feasible_seed(p) if sp.variant == "default" else feasible_seed_nodefault(p)
    x = seed.c.ravel().copy()
    if np.any(bar.slacks(x) <= 0):
        raise OracleError("starting point is not strictly feasible")
    mu = mu0
    total = 0
    min_slack = float(min(np.min(bar.slacks(x)), np.min(x)))
    history = []
    converged = False
    gnorm = np.inf
    for _ in range(max_outer):
        for _ in range(max_inner):
            grad, hess = bar.derivatives(x, mu)
            gnorm = float(np.max(np.abs(grad)))
            if gnorm <= tol:
                break
            try:
                dx = np.linalg.solve(hess, -grad)
            except np.linalg.LinAlgError:
                dx = grad
            decrement = float(grad @ dx)
            if decrement <= 0:
                dx, decrement = grad, float(grad @ grad)
            elif decrement <= tol * tol:
                gnorm = min(gnorm, float(np.sqrt(decrement)))
                break
            s = bar.slacks(x)
            alpha = _max_step(x, dx, s, -bar.G @ dx)
            # inside the quadratic region of f/mu take the (boundary-capped)
            # full step; Armijo on f is below its rounding floor there
            if decrement / mu >= 0.1:
                f0 = bar.value(x, mu)
                while alpha > 1e-16:
                    if bar.value(x + alpha * dx, mu) >= f0 + 1e-4 * alpha * decrement:
                        break
                    alpha *= 0.5
            total += 1
            if alpha <= 1e-16 or alpha * decrement < 1e-30:
                break
            x = x + alpha * dx
            min_slack = min(min_slack, float(np.min(bar.slacks(x))), float(np.min(x)))
        history.append({"mu": mu, "grad": gnorm, "objective": sp.objective(x.reshape(bar.shape))})
        if mu <= tol and gnorm <= tol:
            converged = True
            break
        if mu > tol:
            mu = max(mu * shrink, tol)
        elif gnorm > tol:
            # numerically stalled at the final weight
            break

    y = mu / bar.slacks(x)
    polished = False
    if polish and converged:
        out = _polish(bar, x, mu)
        f_bar = sp.objective(x.reshape(bar.shape))
        if out is not None and sp.objective(out[0].reshape(bar.shape)) >= f_bar - 1e-12 * (1.0 + abs(f_bar)):
            x, y = out
            polished = True

    c = x.reshape(bar.shape)
    a = np.column_stack([p.a0, bar.cmap(c)])
    T = p.T
    if sp.variant == "default":
        nu = y[: T + 1]
        lam = np.empty(T + 1)
        lam[T] = nu[T]
        for t in range(T, 0, -1):
            lam[t - 1] = lam[t] * p.gamma[t] + nu[t - 1]
    else:
        nu = y[:T]
        mu_c = np.vstack([u.marginal(c[h]) for h, u in enumerate(sp.utilities)])
        lam = sp.theta[:, None] * p.discount() * mu_c / p.tau
    welfare = sp.household_welfare(c)
    res = OracleResult(
        c=c, a=a, welfare=welfare, objective=float(sp.theta @ welfare), nu=nu, lam=lam,
        mu=mu, iterations=total, converged=converged, min_slack=min_slack,
        polished=polished, history=history,
    )
    kkt = KKTProblem(p, sp.utilities, sp.theta, sp.variant)
    res.kkt_audit = max(kkt_conditions(kkt, res.allocation, MultiplierSet(sp.theta, nu, lam)).values())
    return res
