"""Economy data, utilities, the capital accumulation law and feasibility checks.

Indexing convention used throughout the package:

* consumption ``c`` has shape ``(H, T+1)``, column ``t`` is period ``t``;
* capital ``a`` has shape ``(H, T+2)``, column 0 is the endowment ``a_0``
  and column ``t+1`` is the stock carried into period ``t+1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FEASIBILITY_TOL = 1e-9


class DomainError(ValueError):
    """Argument outside the domain of a utility or model function."""


class DimensionError(ValueError):
    """Array shapes disagree with the economy's (H, T)."""


class InfeasibleError(ValueError):
    """No strictly feasible point exists for the requested variant."""


def _frozen(values, length: int | None, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim == 0 and length is not None:
        arr = np.full(length, float(arr))
    if arr.ndim != 1 or (length is not None and arr.size != length):
        raise DimensionError(f"{name}: expected length {length}, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EconomyParams:
    """Exogenous constants of the finite-horizon economy.

    Scalars passed for ``r`` and ``omega`` broadcast to length ``T+1``.
    """

    H: int
    T: int
    r: np.ndarray
    omega: np.ndarray
    l: np.ndarray
    tau: float
    delta: float
    beta: np.ndarray
    a0: np.ndarray

    def __post_init__(self):
        H, T = int(self.H), int(self.T)
        if H < 1:
            raise ValueError("H must be >= 1")
        if T < 0:
            raise ValueError("T must be >= 0")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "r", _frozen(self.r, T + 1, "r"))
        object.__setattr__(self, "omega", _frozen(self.omega, T + 1, "omega"))
        object.__setattr__(self, "l", _frozen(self.l, H, "l"))
        object.__setattr__(self, "beta", _frozen(self.beta, H, "beta"))
        object.__setattr__(self, "a0", _frozen(self.a0, H, "a0"))
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "delta", float(self.delta))

        if np.any(self.r <= 0):
            raise ValueError("interest rates must be > 0")
        if np.any(self.omega < 1):
            raise ValueError("wage rates must be >= 1")
        if np.any(self.l <= 0):
            raise ValueError("labor endowments must be > 0")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if np.any((self.beta <= 0) | (self.beta >= 1)):
            raise ValueError("discount factors must lie in (0, 1)")
        if not self.a0.sum() > 0:
            raise ValueError("aggregate initial capital must be > 0")

    @property
    def gamma(self) -> np.ndarray:
        """Gross capital factor ``tau*(1+r_t) - delta`` per period."""
        return self.tau * (1.0 + self.r) - self.delta

    @property
    def xi(self) -> np.ndarray:
        """Labor income ``tau*omega_t*l^h`` as an ``(H, T+1)`` array."""
        return self.tau * np.outer(self.l, self.omega)

    def discount(self) -> np.ndarray:
        """``(beta^h)^t`` as an ``(H, T+1)`` array."""
        return self.beta[:, None] ** np.arange(self.T + 1)[None, :]


@dataclass(frozen=True)
class UtilitySpec:
    """Instantaneous utility satisfying the Inada conditions.

    ``kind`` is ``"log"`` or ``"isoelastic"``; the latter is
    ``c**(1-sigma)/(1-sigma)`` with ``sigma > 0`` and ``sigma != 1``.
    """

    kind: str = "log"
    sigma: float = field(default=1.0)

    def __post_init__(self):
        if self.kind not in ("log", "isoelastic"):
            raise ValueError(f"unknown utility kind {self.kind!r}")
        if self.kind == "isoelastic":
            s = float(self.sigma)
            if not s > 0 or s == 1.0:
                raise ValueError("isoelastic sigma must be > 0 and != 1")
            object.__setattr__(self, "sigma", s)
        else:
            object.__setattr__(self, "sigma", 1.0)

    def value(self, c):
        c = np.asarray(c, dtype=float)
        if np.any(c <= 0):
            raise DomainError("utility evaluated at non-positive consumption")
        if self.kind == "log":
            return np.log(c)
        return c ** (1.0 - self.sigma) / (1.0 - self.sigma)

    def marginal(self, c):
        c = np.asarray(c, dtype=float)
        if np.any(c <= 0):
            raise DomainError("marginal utility at non-positive consumption")
        return c ** (-self.sigma)

    def second(self, c):
        c = np.asarray(c, dtype=float)
        return -self.sigma * c ** (-self.sigma - 1.0)

    def marginal_inverse(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("inverse marginal utility needs a positive argument")
        if self.kind == "log":
            return 1.0 / x
        return x ** (-1.0 / self.sigma)


LOG = UtilitySpec("log")


@dataclass(frozen=True)
class Allocation:
    c: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        a = np.array(self.a, dtype=float)
        if c.ndim != 2 or a.ndim != 2 or a.shape != (c.shape[0], c.shape[1] + 1):
            raise DimensionError(f"inconsistent shapes c{c.shape} a{a.shape}")
        c.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a", a)

    @property
    def aggregate_capital(self) -> np.ndarray:
        return self.a.sum(axis=0)

    @property
    def aggregate_consumption(self) -> np.ndarray:
        return self.c.sum(axis=0)


@dataclass(frozen=True)
class MultiplierSet:
    """Weights ``theta``, aggregate multipliers ``nu`` and adjoints ``lam``.

    ``nu[k]`` belongs to the aggregate constraint at period ``k+1``.
    ``lam`` is a length ``T+1`` vector in the default model and may be an
    ``(H, T+1)`` array in the no-default model.
    """

    theta: np.ndarray
    nu: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if np.any(theta < 0) or not np.any(theta > 0):
            raise ValueError("theta must be nonnegative with a positive entry")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "nu", np.array(self.nu, dtype=float))
        object.__setattr__(self, "lam", np.array(self.lam, dtype=float))


@dataclass(frozen=True)
class Violation:
    kind: str
    index: tuple
    magnitude: float


@dataclass
class SolveReport:
    allocation: Allocation | None
    multipliers: MultiplierSet | None
    residual_norm: float
    iterations: int
    converged: bool
    welfare: np.ndarray | None
    variant: str = "default"
    kkt_audit: float = float("nan")
    trace: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)
    restarts: int = 0
    message: str = ""
    diagnostics: dict = field(default_factory=dict)


def utilities_for(params: EconomyParams, utilities) -> tuple:
    """Broadcast a single UtilitySpec (or None) to one per household."""
    if utilities is None:
        return (LOG,) * params.H
    if isinstance(utilities, UtilitySpec):
        return (utilities,) * params.H
    utilities = tuple(utilities)
    if len(utilities) != params.H:
        raise DimensionError(f"need {params.H} utilities, got {len(utilities)}")
    return utilities


def capital_step(params: EconomyParams, h: int, t: int, a_t: float, c_t: float) -> float:
    if not 0 <= h < params.H:
        raise IndexError(f"household {h} out of range")
    if not 0 <= t <= params.T:
        raise IndexError(f"period {t} out of range")
    if not c_t > 0:
        raise DomainError("consumption must be positive")
    tau = params.tau
    return (
        tau * params.omega[t] * params.l[h]
        + (tau * (1.0 + params.r[t]) - params.delta) * a_t
        - tau * c_t
    )


def accumulate(params: EconomyParams, c: np.ndarray, periods: int | None = None) -> np.ndarray:
    """Forward capital recursion for all households.

    Returns an ``(H, periods+1)`` array starting at ``a_0``; ``periods``
    defaults to ``T+1`` (stocks through ``a_{T+1}``).
    """
    c = np.asarray(c, dtype=float)
    if c.shape != (params.H, params.T + 1):
        raise DimensionError(f"consumption shape {c.shape} != {(params.H, params.T + 1)}")
    n = params.T + 1 if periods is None else periods
    gamma, xi, tau = params.gamma, params.xi, params.tau
    a = np.empty((params.H, n + 1))
    a[:, 0] = params.a0
    for t in range(n):
        a[:, t + 1] = xi[:, t] + gamma[t] * a[:, t] - tau * c[:, t]
    return a


def feasible_seed(params: EconomyParams) -> Allocation:
    """Strictly feasible point: everyone consumes their wage income."""
    c = np.outer(params.l, params.omega)
    # wage income and consumption cancel, so a_{t+1} = gamma_t a_t up to rounding
    return Allocation(c, accumulate(params, c))


def household_wealth(params: EconomyParams) -> np.ndarray:
    """Terminal capital each household would hold with zero consumption."""
    a = np.empty((params.H, params.T + 2))
    a[:, 0] = params.a0
    for t in range(params.T + 1):
        a[:, t + 1] = params.xi[:, t] + params.gamma[t] * a[:, t]
    return a[:, -1]


def feasible_seed_nodefault(params: EconomyParams) -> Allocation:
    """Strictly feasible point with every terminal stock positive.

    Each household consumes a fixed fraction ``kappa_h <= 1`` of its wage,
    chosen so that half of its zero-consumption terminal wealth is kept.
    With ``kappa_h <= 1`` the aggregate stock stays above the pure
    accumulation of positive initial capital.
    """
    wealth = household_wealth(params)
    if np.any(wealth <= 0):
        bad = np.flatnonzero(wealth <= 0).tolist()
        raise InfeasibleError(f"households {bad} cannot repay their debt by the final period")
    wage = np.outer(params.l, params.omega)
    unit = accumulate(params, wage)[:, -1]
    # unit = wealth - cost of consuming the full wage; solve for kappa
    cost = wealth - unit
    kappa = np.minimum(1.0, 0.5 * wealth / cost)
    c = kappa[:, None] * wage
    return Allocation(c, accumulate(params, c))


def check_feasibility(
    params: EconomyParams,
    alloc: Allocation,
    tol: float = FEASIBILITY_TOL,
    variant: str = "default",
) -> list[Violation]:
    """List every violated constraint of the feasible set.

    ``variant="nodefault"`` adds the per-household terminal condition
    ``a_{T+1}^h >= 0``.
    """
    H, T = params.H, params.T
    if alloc.c.shape != (H, T + 1) or alloc.a.shape != (H, T + 2):
        raise DimensionError(
            f"allocation shapes c{alloc.c.shape} a{alloc.a.shape} do not match H={H}, T={T}"
        )
    out = []
    for h, t in zip(*np.nonzero(alloc.c <= 0)):
        out.append(Violation("positivity", (int(h), int(t)), float(-alloc.c[h, t])))
    if not np.allclose(alloc.a[:, 0], params.a0, rtol=0, atol=tol):
        for h in np.flatnonzero(np.abs(alloc.a[:, 0] - params.a0) > tol):
            out.append(Violation("initial", (int(h), 0), float(abs(alloc.a[h, 0] - params.a0[h]))))
    a, c = alloc.a, alloc.c
    # same operation order as accumulate, so its output has zero residual
    resid = a[:, 1:] - (params.xi + params.gamma[None, :] * a[:, :-1] - params.tau * c)
    for h, t in zip(*np.nonzero(np.abs(resid) > tol)):
        out.append(Violation("accumulation", (int(h), int(t)), float(abs(resid[h, t]))))
    agg = a.sum(axis=0)
    for t in range(1, T + 2):
        if agg[t] < -tol:
            out.append(Violation("aggregate", (t,), float(-agg[t])))
    if variant == "nodefault":
        for h in range(H):
            if a[h, -1] < -tol:
                out.append(Violation("terminal", (h, T + 1), float(-a[h, -1])))
    return out


def existence_bounds(params: EconomyParams) -> tuple[float, float]:
    """Capital upper bound ``a_max`` and the aggregate consumption bound.

    ``a_max`` bounds every ``a_t^h`` of a feasible point; the second value
    ``H*a_max/tau`` bounds ``sum_h sum_{s<=t} c_s^h prod_{v=s+1}^t gamma_v``
    for every ``t``.
    """
    a = np.empty((params.H, params.T + 1))
    prev = params.a0
    for t in range(params.T + 1):
        prev = params.xi[:, t] + params.gamma[t] * prev
        a[:, t] = prev
    a_max = float(a.max())
    return a_max, params.H / params.tau * a_max


def compounded_consumption(params: EconomyParams, c: np.ndarray) -> np.ndarray:
    """``sum_h sum_{s<=t} c_s^h prod_{v=s+1}^t gamma_v`` for t = 0..T."""
    total = np.asarray(c, dtype=float).sum(axis=0)
    out = np.empty(params.T + 1)
    acc = 0.0
    for t in range(params.T + 1):
        acc = (acc * params.gamma[t] if t else 0.0) + total[t]
        out[t] = acc
    return out


def bound_violations(params: EconomyParams, alloc: Allocation, tol: float = FEASIBILITY_TOL) -> list[Violation]:
    a_max, c_bound = existence_bounds(params)
    out = []
    stocks = alloc.a[:, 1:]
    for h, t in zip(*np.nonzero(stocks > a_max + tol)):
        out.append(Violation("capital_bound", (int(h), int(t) + 1), float(stocks[h, t] - a_max)))
    lower = -(params.H - 1) * a_max
    for h, t in zip(*np.nonzero(stocks < lower - tol)):
        out.append(Violation("capital_lower_bound", (int(h), int(t) + 1), float(lower - stocks[h, t])))
    cc = compounded_consumption(params, alloc.c)
    for t in np.flatnonzero(cc > c_bound + tol):
        out.append(Violation("consumption_bound", (int(t),), float(cc[t] - c_bound)))
    return out


def welfare(params: EconomyParams, utilities, alloc: Allocation | np.ndarray) -> np.ndarray:
    """Discounted lifetime utility of each household."""
    c = alloc.c if isinstance(alloc, Allocation) else np.asarray(alloc, dtype=float)
    if np.any(c <= 0):
        raise DomainError("welfare needs strictly positive consumption")
    us = utilities_for(params, utilities)
    disc = params.discount()
    return np.array([np.dot(disc[h], us[h].value(c[h])) for h in range(params.H)])


def marginal_utility_inverse(u: UtilitySpec, x):
    return u.marginal_inverse(x)


def make_params(
    H: int,
    T: int,
    *,
    r: float | Sequence[float] = 0.03,
    omega: float | Sequence[float] = 1.0,
    l: float | Sequence[float] = 1.0,
    tau: float = 1.0,
    delta: float = 0.01,
    beta: float | Sequence[float] = 0.9,
    a0: float | Sequence[float] = 1.0,
) -> EconomyParams:
    """Convenience constructor broadcasting scalars to full sequences."""
    def per_house(v):
        v = np.asarray(v, dtype=float)
        return np.full(H, float(v)) if v.ndim == 0 else v

    return EconomyParams(
        H=H, T=T, r=r, omega=omega, l=per_house(l), tau=tau, delta=delta,
        beta=per_house(beta), a0=per_house(a0),
    )


def coalition4_params(T: int = 100) -> EconomyParams:
    """Four-household benchmark economy with log utility."""
    return make_params(
        4, T, r=0.03, omega=1.0, l=1.0, tau=1.0, delta=0.01,
        beta=[0.9, 0.93, 0.95, 0.98], a0=[30.0, 20.0, 10.0, 10.0],
    )
