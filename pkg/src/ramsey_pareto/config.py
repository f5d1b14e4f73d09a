"""Scenario configuration files.

A scenario is a YAML document::

    economy:
      H: 4
      T: 100
      r: 0.03            # scalar or list of length T+1
      omega: 1.0         # scalar or list of length T+1
      l: 1.0             # scalar or list of length H
      tau: 1.0
      delta: 0.01
      beta: [0.9, 0.93, 0.95, 0.98]
      a0: [30, 20, 10, 10]
    utilities: log       # "log", {kind: isoelastic, sigma: 2}, or a list of those
    theta: equal         # "equal" or a list of H nonnegative weights
    variant: default     # default | nodefault
    solver:              # optional SolverConfig overrides
      residual_tol: 1.0e-10
    output: out          # optional output directory

Built-in scenarios are addressed as ``builtin:<name>``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .model import EconomyParams, UtilitySpec
from .solver import SolverConfig

ECONOMY_KEYS = ("H", "T", "r", "omega", "l", "tau", "delta", "beta", "a0")
TOP_KEYS = ("economy", "utilities", "theta", "variant", "solver", "output")


class ConfigError(ValueError):
    def __init__(self, message: str, path: tuple = (), line: int | None = None):
        where = ".".join(str(p) for p in path) or "<root>"
        loc = f" (line {line})" if line is not None else ""
        super().__init__(f"{where}{loc}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class ScenarioConfig:
    params: EconomyParams
    utilities: tuple
    theta: np.ndarray
    variant: str
    solver: SolverConfig
    output: str | None = None
    source: str = ""


def builtin_names() -> list[str]:
    root = resources.files("ramsey_pareto") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def read_text(path: str) -> tuple[str, str]:
    if path.startswith("builtin:"):
        name = path.split(":", 1)[1]
        res = resources.files("ramsey_pareto") / "scenarios" / f"{name}.yaml"
        if not res.is_file():
            raise ConfigError(f"unknown built-in scenario {name!r}; have {builtin_names()}")
        return res.read_text(), path
    return Path(path).read_text(), str(path)


def _line_of(node, path) -> int | None:
    """1-based line of the YAML node at ``path`` (or the deepest found)."""
    line = node.start_mark.line + 1 if node is not None else None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == key:
                    node = v
                    line = k.start_mark.line + 1
                    break
            else:
                return line
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            return line
    return line


def _number(value, path, err):
    if isinstance(value, bool):
        raise err("expected a number, got a boolean", path)
    if isinstance(value, str):
        # YAML 1.1 reads "1e-10" as a string
        try:
            return float(value)
        except ValueError:
            raise err(f"expected a number, got {value!r}", path) from None
    if isinstance(value, (int, float)):
        return float(value)
    raise err(f"expected a number, got {type(value).__name__}", path)


def _numbers(value, path, err):
    if isinstance(value, list):
        return [_number(v, (*path, i), err) for i, v in enumerate(value)]
    return _number(value, path, err)


def _utility(spec, path, err) -> UtilitySpec:
    if isinstance(spec, str):
        spec = {"kind": spec}
    if not isinstance(spec, dict):
        raise err("utility must be a name or a mapping", path)
    kind = spec.get("kind", "log")
    if kind in ("isoelastic", "crra"):
        if "sigma" not in spec:
            raise err("isoelastic utility needs sigma", path)
        sigma = _number(spec["sigma"], (*path, "sigma"), err)
        try:
            return UtilitySpec("isoelastic", sigma)
        except ValueError as exc:
            raise err(str(exc), (*path, "sigma")) from None
    if kind == "log":
        return UtilitySpec("log")
    raise err(f"unknown utility kind {kind!r}", (*path, "kind"))


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        node = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None) from None

    def err(message, path=()):
        return ConfigError(message, tuple(path), _line_of(node, path))

    if not isinstance(doc, dict):
        raise err("top level must be a mapping")
    for key in doc:
        if key not in TOP_KEYS:
            raise err(f"unknown key (expected one of {TOP_KEYS})", (key,))
    eco = doc.get("economy")
    if not isinstance(eco, dict):
        raise err("missing or invalid 'economy' section", ("economy",))
    for key in eco:
        if key not in ECONOMY_KEYS:
            raise err("unknown economy key", ("economy", key))
    for key in ECONOMY_KEYS:
        if key not in eco:
            raise err("missing required key", ("economy", key))
    H, T = eco["H"], eco["T"]
    if not isinstance(H, int) or isinstance(H, bool) or H < 1:
        raise err("H must be a positive integer", ("economy", "H"))
    if not isinstance(T, int) or isinstance(T, bool) or T < 0:
        raise err("T must be a nonnegative integer", ("economy", "T"))

    values = {k: _numbers(eco[k], ("economy", k), err) for k in ECONOMY_KEYS[2:]}
    for key, n in (("r", T + 1), ("omega", T + 1), ("l", H), ("beta", H), ("a0", H)):
        v = values[key]
        if isinstance(v, list) and len(v) != n:
            raise err(f"expected {n} entries, got {len(v)}", ("economy", key))
        if not isinstance(v, list):
            values[key] = [v] * n
    for key in ("tau", "delta"):
        if isinstance(values[key], list):
            raise err("expected a scalar", ("economy", key))
    try:
        params = EconomyParams(H=H, T=T, **values)
    except ValueError as exc:
        raise err(str(exc), ("economy",)) from None

    raw_u = doc.get("utilities", "log")
    if isinstance(raw_u, list):
        if len(raw_u) != H:
            raise err(f"expected {H} utilities, got {len(raw_u)}", ("utilities",))
        utilities = tuple(_utility(u, ("utilities", i), err) for i, u in enumerate(raw_u))
    else:
        utilities = (_utility(raw_u, ("utilities",), err),) * H

    raw_theta = doc.get("theta", "equal")
    if raw_theta == "equal":
        theta = np.full(H, 1.0 / H)
    else:
        theta = np.asarray(_numbers(raw_theta, ("theta",), err), dtype=float)
        if theta.shape != (H,):
            raise err(f"expected 'equal' or {H} weights", ("theta",))
        if np.any(theta <= 0):
            raise err("weights must be strictly positive", ("theta",))
        theta = theta / theta.sum()

    variant = doc.get("variant", "default")
    if variant not in ("default", "nodefault"):
        raise err("variant must be 'default' or 'nodefault'", ("variant",))

    solver_doc = doc.get("solver") or {}
    if not isinstance(solver_doc, dict):
        raise err("solver overrides must be a mapping", ("solver",))
    fields = {f.name: f for f in dataclasses.fields(SolverConfig)}
    overrides = {}
    for key, value in solver_doc.items():
        if key not in fields:
            raise err("unknown solver option", ("solver", key))
        if key in ("jacobian", "ncp"):
            overrides[key] = value
        elif key in ("max_iterations", "seed"):
            if not isinstance(value, int) or isinstance(value, bool):
                raise err("expected an integer", ("solver", key))
            overrides[key] = value
        else:
            overrides[key] = _number(value, ("solver", key), err)
    try:
        solver = SolverConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise err(str(exc), ("solver",)) from None

    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        raise err("output must be a path string", ("output",))
    return ScenarioConfig(params, utilities, theta, variant, solver, output, source)


def load_config(path: str) -> ScenarioConfig:
    try:
        text, source = read_text(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, source)
