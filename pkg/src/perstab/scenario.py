"""Scenario files: TOML with expression-valued parameters.

Example::

    [profile]
    family = "dilated_sphere"
    period = 1.0
    [profile.parameters]
    rho1 = "1 + 0.1*sin(2*pi*t)"
    rho2 = "1 + 0.1*sin(2*pi*t)"

    [nonlinearity]
    kind = "fisher"
    alpha = 0.3
    m = "1 + 0.5*sin(2*pi*t)"

    [grid]
    N = 101
    M = 200
    K = 4

Unknown keys are rejected. Every validation error names the offending field
as a dotted path (``nonlinearity.alpha``).
"""

from __future__ import annotations

import hashlib
import inspect
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .construct import ConstructionError, ManufacturedSolution, fisher_nonlinearity, manufactured_solution
from .expr import ExpressionError, compile_expression, parse_expression
from .geometry import FAMILIES, GeometryError, Profile, builtin_family
from .nonlinearity import Nonlinearity, linear_nonlinearity, symbolic_nonlinearity, zero_nonlinearity
from .sampled import load_profile_table


class ConfigError(ValueError):
    """Invalid scenario; ``path`` is the dotted field path when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None, column: int | None = None):
        where = f"{path}: " if path else ""
        super().__init__(where + message)
        self.path = path
        self.line = line
        self.column = column


SECTIONS = {
    "profile": {"family", "table", "period", "parameters"},
    "nonlinearity": {"kind", "alpha", "m", "c", "expression", "U", "phi", "samples"},
    "grid": {"N", "M", "K"},
    "solver": {"tol", "max_iter", "seeds", "conservation", "newton", "monodromy_cap"},
    "outputs": {"report", "csv_dir"},
}
REQUIRED = ("profile", "nonlinearity", "grid")
KINDS = {
    "zero": set(),
    "linear": {"c"},
    "fisher": {"alpha", "m"},
    "expression": {"expression"},
    "manufactured": {"U", "phi", "samples"},
}


@dataclass
class Scenario:
    raw: dict
    digest: str
    source: Path
    profile: Profile
    nonlinearity: Nonlinearity
    N: int
    M: int
    K: int = 8
    tol: float = 1e-9
    max_iter: int = 60
    seeds: list = field(default_factory=lambda: ["auto"])
    conservation: bool = False
    newton: bool = True
    monodromy_cap: int = 1024
    report: str = "report.json"
    csv_dir: str = "."
    manufactured: ManufacturedSolution | None = None

    def seed_values(self, seed, nodes) -> np.ndarray:
        """Initial guess on the grid for a seed entry.

        ``"exact"`` uses the manufactured orbit, ``"auto"`` the manufactured
        orbit when there is one and ``0.5`` otherwise; any other string is an
        expression in ``rho``; numbers give constants.
        """
        if seed in ("exact", "auto") and self.manufactured is not None:
            return self.manufactured.exact(nodes, np.zeros_like(nodes))
        if seed == "auto":
            return np.full_like(nodes, 0.5)
        if seed == "exact":
            raise ConfigError("seed 'exact' needs a manufactured nonlinearity", "solver.seeds")
        fn = compile_expression(parse_expression(seed, ("rho",)), ("rho",))
        return np.broadcast_to(fn(nodes), nodes.shape).astype(float)


def _expect(value, kinds, path):
    kinds = kinds if isinstance(kinds, tuple) else (kinds,)
    if not isinstance(value, kinds) or (isinstance(value, bool) and bool not in kinds):
        names = "/".join(k.__name__ for k in kinds)
        raise ConfigError(f"expected {names}, got {type(value).__name__}", path)
    return value


def _check_keys(table: dict, allowed: set, path: str):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r}; allowed: {sorted(allowed)}", f"{path}.{key}" if path else key)


def _expression(value, variables, path):
    _expect(value, (str, int, float), path)
    try:
        return parse_expression(str(value), variables)
    except ExpressionError as exc:
        raise ConfigError(str(exc), path, column=exc.column) from None


def _build_profile(sec: dict, base: Path) -> tuple[Profile, dict]:
    if ("family" in sec) == ("table" in sec):
        raise ConfigError("give exactly one of 'family' or 'table'", "profile")
    if "table" in sec:
        if "parameters" in sec:
            raise ConfigError("a table profile takes no parameters", "profile.parameters")
        path = base / _expect(sec["table"], str, "profile.table")
        try:
            prof = load_profile_table(path)
        except (OSError, GeometryError, ValueError) as exc:
            raise ConfigError(str(exc), "profile.table") from None
        if "period" in sec and abs(float(sec["period"]) - prof.period) > 1e-12 * prof.period:
            raise ConfigError("period disagrees with the table header", "profile.period")
        return prof, {}
    family = _expect(sec["family"], str, "profile.family")
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}", "profile.family")
    period = float(_expect(sec.get("period", 1.0), (int, float), "profile.period"))
    if not period > 0:
        raise ConfigError("period must be positive", "profile.period")
    params = dict(_expect(sec.get("parameters", {}), dict, "profile.parameters"))
    allowed = set(inspect.signature(FAMILIES[family]).parameters) - {"period"}
    _check_keys(params, allowed, "profile.parameters")
    for key, value in params.items():
        variables = ("r",) if key in ("psi", "chi") else ("t",)
        if key in ("a", "b") and family == "dilated_static_profile":
            variables = ()
        params[key] = _expression(value, variables, f"profile.parameters.{key}")
    try:
        return builtin_family(family, period=period, **params), params
    except (GeometryError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc), "profile.parameters") from None


def _build_nonlinearity(sec: dict, profile: Profile, profile_params: dict, family: str | None):
    kind = _expect(sec.get("kind"), str, "nonlinearity.kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {sorted(KINDS)}", "nonlinearity.kind")
    _check_keys({k: v for k, v in sec.items() if k != "kind"}, KINDS[kind], "nonlinearity")
    period = profile.period
    try:
        if kind == "zero":
            return zero_nonlinearity(), None
        if kind == "linear":
            return linear_nonlinearity(_expression(sec.get("c", 0), ("rho", "t"), "nonlinearity.c"), period), None
        if kind == "fisher":
            alpha = float(_expect(sec.get("alpha"), (int, float), "nonlinearity.alpha"))
            if not 0.0 < alpha < 1.0:
                raise ConfigError(f"alpha must lie in (0, 1), got {alpha}", "nonlinearity.alpha")
            m = _expression(sec.get("m", 1), ("rho", "t"), "nonlinearity.m")
            return fisher_nonlinearity(m, alpha, period), None
        if kind == "expression":
            if "expression" not in sec:
                raise ConfigError("missing expression", "nonlinearity.expression")
            e = _expression(sec["expression"], ("rho", "t", "u", "ur"), "nonlinearity.expression")
            return symbolic_nonlinearity(e, period), None
        # manufactured
        if family != "dilated_static_profile":
            raise ConfigError("manufactured nonlinearity needs family 'dilated_static_profile'", "nonlinearity.kind")
        if "U" not in sec:
            raise ConfigError("missing U", "nonlinearity.U")
        U = _expression(sec["U"], ("r",), "nonlinearity.U")
        phi = _expression(sec.get("phi", 1), ("t",), "nonlinearity.phi")
        samples = int(_expect(sec.get("samples", 4001), int, "nonlinearity.samples"))
        p = profile_params
        ms = manufactured_solution(p["psi"], p["a"], p["b"], U, phi, p.get("zeta", "1"), period,
                                   chi=p.get("chi"), samples=samples)
        return ms.nonlinearity(), ms
    except ConfigError:
        raise
    except (ConstructionError, GeometryError, ExpressionError, ValueError) as exc:
        raise ConfigError(str(exc), f"nonlinearity.{kind}" if kind != "manufactured" else "nonlinearity.U") from None


def _positive_int(sec, key, path, minimum, default=None):
    value = sec.get(key, default)
    if value is None:
        raise ConfigError("missing required value", path)
    _expect(value, int, path)
    if isinstance(value, bool) or value < minimum:
        raise ConfigError(f"must be an integer >= {minimum}, got {value}", path)
    return int(value)


def parse_scenario_text(text: str, source: Path | str = "<string>") -> Scenario:
    source = Path(source)
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        raise ConfigError(f"parse error: {exc}", line=line, column=col) from None
    _check_keys(raw, set(SECTIONS), "")
    for name in REQUIRED:
        if name not in raw:
            raise ConfigError("missing required section", name)
    for name, sec in raw.items():
        _expect(sec, dict, name)
        _check_keys(sec, SECTIONS[name], name)

    base = source.parent if source.name != "<string>" else Path(".")
    profile, params = _build_profile(raw["profile"], base)
    nl, ms = _build_nonlinearity(raw["nonlinearity"], profile, params, raw["profile"].get("family"))

    grid = raw["grid"]
    N = _positive_int(grid, "N", "grid.N", 8)
    M = _positive_int(grid, "M", "grid.M", 16)
    K = _positive_int(grid, "K", "grid.K", 0, default=8)

    solver = raw.get("solver", {})
    tol = float(_expect(solver.get("tol", 1e-9), (int, float), "solver.tol"))
    if not tol > 0:
        raise ConfigError("must be positive", "solver.tol")
    max_iter = _positive_int(solver, "max_iter", "solver.max_iter", 1, default=60)
    seeds = _expect(solver.get("seeds", ["auto"]), list, "solver.seeds")
    if not seeds:
        raise ConfigError("needs at least one seed", "solver.seeds")
    for i, s in enumerate(seeds):
        _expect(s, (str, int, float), f"solver.seeds[{i}]")
        if s == "exact" and ms is None:
            raise ConfigError("seed 'exact' needs a manufactured nonlinearity", f"solver.seeds[{i}]")
        if isinstance(s, str) and s not in ("auto", "exact"):
            _expression(s, ("rho",), f"solver.seeds[{i}]")
    cap = _positive_int(solver, "monodromy_cap", "solver.monodromy_cap", 8, default=1024)
    conservation = _expect(solver.get("conservation", False), bool, "solver.conservation")
    newton = _expect(solver.get("newton", True), bool, "solver.newton")

    outputs = raw.get("outputs", {})
    report = _expect(outputs.get("report", "report.json"), str, "outputs.report")
    csv_dir = _expect(outputs.get("csv_dir", "."), str, "outputs.csv_dir")

    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return Scenario(raw, digest, source, profile, nl, N, M, K, tol, max_iter,
                    [s if isinstance(s, str) else float(s) for s in seeds], conservation, newton, cap,
                    report, csv_dir, ms)


def parse_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc}") from None
    return parse_scenario_text(text, path)
