"""Reaction terms ``f(rho, t, u, u_rho)`` and their partial derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy as sp

from .expr import SYMBOLS, compile_expression, parse_expression
from .geometry import PeriodicityError

VARIABLES = ("rho", "t", "u", "ur")


@dataclass(frozen=True)
class Nonlinearity:
    """Reaction term with the partials the linearisation needs.

    ``r_independent`` and ``gradient_dependent`` are declared metadata; the
    certificates trust them rather than trying to infer them by sampling.
    ``period`` is ``None`` for autonomous terms.
    """

    f: Callable
    f_u: Callable
    f_ur: Callable
    period: float | None = None
    gradient_dependent: bool = False
    r_independent: bool = True
    name: str = "f"

    def __call__(self, rho, t, u, ur):
        return self.f(rho, t, u, ur)

    def compatible_with(self, period: float) -> bool:
        if self.period is None:
            return True
        ratio = period / self.period
        return abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1


def check_nonlinearity_periodic(nl: Nonlinearity, samples: int = 9, seed: int = 0) -> None:
    if nl.period is None:
        return
    rng = np.random.default_rng(seed)
    rho = rng.uniform(0, 1, samples)
    t = rng.uniform(0, nl.period, samples)
    u = rng.uniform(-1, 2, samples)
    ur = rng.uniform(-1, 1, samples) if nl.gradient_dependent else np.zeros(samples)
    for name, fn in (("f", nl.f), ("f_u", nl.f_u), ("f_ur", nl.f_ur)):
        a, b = fn(rho, t, u, ur), fn(rho, t + nl.period, u, ur)
        if np.max(np.abs(a - b) / (1 + np.abs(a))) > 1e-10:
            raise PeriodicityError(f"nonlinearity {nl.name}: {name} is not {nl.period:g}-periodic")


def symbolic_nonlinearity(expression, period: float | None = None, name: str = "expression") -> Nonlinearity:
    """Build ``f`` from an expression in ``rho, t, u, ur``; partials are symbolic."""
    e = parse_expression(expression, VARIABLES)
    u, ur = SYMBOLS["u"], SYMBOLS["ur"]
    free = {s.name for s in e.free_symbols}
    if "t" in free and period is None:
        raise PeriodicityError(f"nonlinearity {name} depends on t but no period was given")
    nl = Nonlinearity(
        f=compile_expression(e, VARIABLES),
        f_u=compile_expression(sp.diff(e, u), VARIABLES),
        f_ur=compile_expression(sp.diff(e, ur), VARIABLES),
        period=period if "t" in free else None,
        gradient_dependent="ur" in free,
        r_independent="rho" not in free,
        name=name,
    )
    check_nonlinearity_periodic(nl)
    return nl


def zero_nonlinearity() -> Nonlinearity:
    return symbolic_nonlinearity("0", name="zero")


def linear_nonlinearity(c, period: float | None = None) -> Nonlinearity:
    """``f = c(rho, t) * u``."""
    c = parse_expression(c, ("rho", "t"))
    return symbolic_nonlinearity(c * SYMBOLS["u"], period, name=f"linear({c})")
