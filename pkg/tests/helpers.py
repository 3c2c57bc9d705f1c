"""Shared fixtures: the pinned manufactured scenarios used across the suite."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from perstab.construct import manufactured_solution
from perstab.evolve import find_periodic_orbit
from perstab.operators import Discretization

PERIOD = 1.0
ZETA = "1 + 0.05*sin(2*pi*t)"
PHI = "1 + 0.2*sin(2*pi*t)"

# Full unit sphere; the radial instability condition is negative everywhere.
SPHERE_U = "-(cos(r) + cos(r)^3/6)"

# Band psi = cosh r on [-0.8, 0.8]; U_r = (l^2 - r^2)(eps + (1 - eps) exp(-beta r^2)).
BAND_L, BAND_BETA, BAND_EPS = 0.8, 5.0, 0.23075806282307304


def band_U() -> str:
    l, beta, eps = BAND_L, BAND_BETA, BAND_EPS
    c = l * l - 1 / (2 * beta)
    return (f"{eps!r}*({l * l!r}*r - r^3/3) + {1 - eps!r}*({c!r}*sqrt(pi)/(2*sqrt({beta!r}))"
            f"*erf(sqrt({beta!r})*r) + r*exp(-{beta!r}*r^2)/(2*{beta!r}))")


# Regression pins (N = 101, M = 200), cross-checked by a dense eigendecomposition in the tests.
SPHERE_LAMBDA1 = -2.667982925471833
BAND_LAMBDA1 = 0.42658947660612356


@lru_cache(maxsize=None)
def sphere_solution():
    return manufactured_solution("sin(r)", "0", "pi", SPHERE_U, PHI, ZETA, PERIOD, chi="cos(r)")


@lru_cache(maxsize=None)
def band_solution():
    return manufactured_solution("cosh(r)", "-0.8", "0.8", band_U(), PHI, ZETA, PERIOD)


@lru_cache(maxsize=None)
def manufactured_orbit(which: str, N: int = 101, M: int = 200):
    ms = sphere_solution() if which == "sphere" else band_solution()
    nl = ms.nonlinearity()
    disc = Discretization(ms.profile, N)
    orbit = find_periodic_orbit(ms.exact(disc.grid.nodes, np.zeros(N)), nl, disc, M, seed="exact")
    return ms, nl, disc, orbit
