"""Evolving surfaces of revolution.

A surface at time ``t`` is generated by rotating the plane curve
``r -> (psi(r, t), chi(r, t))``, ``a(t) <= r <= b(t)``, about the z-axis, so
that ``ds^2 = q^2 dr^2 + psi^2 dtheta^2`` with ``q = sqrt(psi_r^2 + chi_r^2)``.

Profiles are immutable; every evaluator is a pure, vectorised function of
``(r, t)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy as sp

from .expr import SYMBOLS, compile_expression, parse_expression

logger = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-12
PERIODICITY_TOL = 1e-10


class GeometryError(ValueError):
    pass


class DomainError(GeometryError):
    pass


class DegenerateProfileError(GeometryError):
    pass


class PeriodicityError(GeometryError):
    pass


@dataclass(frozen=True)
class ProfileJet:
    """Values and derivatives of the generating curve at a set of points."""

    psi: np.ndarray
    psi_r: np.ndarray
    psi_rr: np.ndarray
    psi_t: np.ndarray
    psi_rt: np.ndarray
    chi: np.ndarray
    chi_r: np.ndarray
    chi_rr: np.ndarray
    chi_t: np.ndarray
    chi_rt: np.ndarray


@dataclass(frozen=True)
class MetricSample:
    psi: np.ndarray
    psi_r: np.ndarray
    q: np.ndarray
    q_r: np.ndarray
    q_t: np.ndarray
    g: np.ndarray
    g_t: np.ndarray


def check_periodic(fn: Callable, period: float, name: str, samples: int = 17) -> None:
    t = np.linspace(0.0, period, samples)
    v0 = np.asarray(fn(t), dtype=float)
    v1 = np.asarray(fn(t + period), dtype=float)
    if not np.all(np.isfinite(v0)):
        raise PeriodicityError(f"{name} is not finite on [0, T]")
    if np.max(np.abs(v1 - v0) / (1.0 + np.abs(v0))) > PERIODICITY_TOL:
        raise PeriodicityError(f"{name} is not {period:g}-periodic")


class PeriodicFunction:
    """A scalar T-periodic coefficient ``c(t)`` with closed-form derivatives."""

    def __init__(self, expression, period: float, name: str = "c", check: bool = True):
        t = SYMBOLS["t"]
        self.name = name
        self.expr = parse_expression(expression, ("t",))
        self.period = float(period)
        self._f = compile_expression(self.expr, ("t",))
        self._df = compile_expression(sp.diff(self.expr, t), ("t",))
        if check:
            check_periodic(self._f, self.period, name)

    def __call__(self, t):
        return self._f(t)

    def derivative(self, t):
        return self._df(t)

    def __repr__(self):
        return f"PeriodicFunction({self.name} = {self.expr})"


class Profile:
    """Abstract time-periodic generating curve.

    Subclasses provide :meth:`jet` and the endpoint functions; poles and all
    metric quantities are derived from those.
    """

    period: float
    name = "profile"
    # set by families built from a static arclength curve dilated by zeta(t)
    static_base: "StaticCurve | None" = None
    dilation: PeriodicFunction | None = None

    def jet(self, r, t) -> ProfileJet:
        raise NotImplementedError

    def a(self, t):
        raise NotImplementedError

    def b(self, t):
        raise NotImplementedError

    def a_dot(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def b_dot(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    @property
    def poles(self) -> tuple[bool, bool]:
        """(left, right): whether psi vanishes at that endpoint for all t."""
        cached = self.__dict__.get("_poles")
        if cached is None:
            t = np.linspace(0.0, self.period, 9)[:-1]
            flags = []
            for end in (self.a, self.b):
                small = np.abs(self.jet(end(t), t).psi) < DEGENERATE_TOL
                if small.any() and not small.all():
                    raise DegenerateProfileError("profile touches the axis at an endpoint for part of the period only")
                flags.append(bool(small.all()))
            cached = self.__dict__["_poles"] = tuple(flags)
        return cached

    @property
    def pole_left(self) -> bool:
        return self.poles[0]

    @property
    def pole_right(self) -> bool:
        return self.poles[1]


class SymbolicProfile(Profile):
    """Profile given by closed-form expressions in ``r`` and ``t``.

    Either ``chi`` or its radial derivative ``chi_r`` must be given. In the
    latter case ``chi`` itself is recovered by Gauss-Legendre quadrature from
    ``a(t)``; it never enters the curvature formulas.
    """

    def __init__(self, psi, a, b, period, chi=None, chi_r=None, name="expression"):
        r, t = SYMBOLS["r"], SYMBOLS["t"]
        self.name = name
        self.period = float(period)
        if not self.period > 0:
            raise GeometryError("period must be positive")
        psi = parse_expression(psi)
        if chi is not None:
            chi = parse_expression(chi)
            chi_r = sp.diff(chi, r)
        elif chi_r is not None:
            chi_r = parse_expression(chi_r)
        else:
            raise GeometryError("either chi or chi_r is required")
        self.exprs = {"psi": psi, "chi": chi, "chi_r": chi_r}

        def c(e):
            return compile_expression(e, ("r", "t"))

        self._psi = [c(psi), c(sp.diff(psi, r)), c(sp.diff(psi, r, 2)), c(sp.diff(psi, t)), c(sp.diff(psi, r, t))]
        self._chi_r = [c(chi_r), c(sp.diff(chi_r, r)), c(sp.diff(chi_r, t))]
        self._chi = (c(chi), c(sp.diff(chi, t))) if chi is not None else None
        self._a = PeriodicFunction(a, self.period, "a")
        self._b = PeriodicFunction(b, self.period, "b")

        ts = np.linspace(0.0, self.period, 17)
        if np.any(self.b(ts) <= self.a(ts)):
            raise GeometryError("profile needs a(t) < b(t)")
        for label, fn in (("psi", self._psi[0]), ("chi_r", self._chi_r[0])):
            for s in (0.0, 0.5, 1.0):
                check_periodic(lambda tt, fn=fn, s=s: fn(self.a(tt) + s * (self.b(tt) - self.a(tt)), tt), self.period, label)

    def a(self, t):
        return self._a(t)

    def b(self, t):
        return self._b(t)

    def a_dot(self, t):
        return self._a.derivative(t)

    def b_dot(self, t):
        return self._b.derivative(t)

    def _integral_from_a(self, r, t, fn):
        x, w = np.polynomial.legendre.leggauss(20)
        a = self.a(t)
        half = 0.5 * (r - a)
        s = a[..., None] + half[..., None] * (x + 1.0)
        return half * np.sum(w * fn(s, t[..., None]), axis=-1)

    def jet(self, r, t):
        r, t = np.broadcast_arrays(np.asarray(r, float), np.asarray(t, float))
        psi = [f(r, t) for f in self._psi]
        chi_r, chi_rr, chi_rt = (f(r, t) for f in self._chi_r)
        if self._chi is not None:
            chi, chi_t = (f(r, t) for f in self._chi)
        else:
            chi = self._integral_from_a(r, t, self._chi_r[0])
            chi_t = self._integral_from_a(r, t, self._chi_r[2]) - self._chi_r[0](self.a(t), t) * self.a_dot(t)
        return ProfileJet(*psi, chi, chi_r, chi_rr, chi_t, chi_rt)


@dataclass(frozen=True)
class StaticCurve:
    """Time-independent generating curve, kept by dilated families."""

    psi: sp.Expr
    chi_r: sp.Expr
    a: float
    b: float

    def evaluators(self):
        r = SYMBOLS["r"]
        return tuple(compile_expression(e, ("r",)) for e in (self.psi, sp.diff(self.psi, r), sp.diff(self.psi, r, 2), self.chi_r))

    def speed(self, r):
        _, psi_r, _, chi_r = self.evaluators()
        return np.sqrt(psi_r(r) ** 2 + chi_r(r) ** 2)


class ReparametrizedProfile(Profile):
    """The same surfaces on the fixed coordinate ``rho = (r - a) / (b - a)``.

    Time derivatives are taken at fixed ``rho``, so moving endpoints
    contribute through the chain rule.
    """

    def __init__(self, base: Profile):
        self.base = base
        self.period = base.period
        self.name = base.name
        self.static_base = base.static_base
        self.dilation = base.dilation

    def a(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def b(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    def to_base(self, rho, t):
        a = self.base.a(t)
        return a + rho * (self.base.b(t) - a)

    def jet(self, rho, t):
        rho, t = np.broadcast_arrays(np.asarray(rho, float), np.asarray(t, float))
        a, b = self.base.a(t), self.base.b(t)
        a_dot, b_dot = self.base.a_dot(t), self.base.b_dot(t)
        length, length_dot = b - a, b_dot - a_dot
        r = a + rho * length
        r_t = a_dot + rho * length_dot
        j = self.base.jet(r, t)
        return ProfileJet(
            psi=j.psi,
            psi_r=length * j.psi_r,
            psi_rr=length**2 * j.psi_rr,
            psi_t=j.psi_t + j.psi_r * r_t,
            psi_rt=length_dot * j.psi_r + length * (j.psi_rt + j.psi_rr * r_t),
            chi=j.chi,
            chi_r=length * j.chi_r,
            chi_rr=length**2 * j.chi_rr,
            chi_t=j.chi_t + j.chi_r * r_t,
            chi_rt=length_dot * j.chi_r + length * (j.chi_rt + j.chi_rr * r_t),
        )


def reparametrize(profile: Profile) -> ReparametrizedProfile:
    if isinstance(profile, ReparametrizedProfile):
        return profile
    return ReparametrizedProfile(profile)


# ---------------------------------------------------------------------------
# pointwise geometry


def _prepare(profile: Profile, r, t):
    r, t = np.broadcast_arrays(np.asarray(r, float), np.asarray(t, float))
    a, b = profile.a(t), profile.b(t)
    tol = 1e-12 * (1.0 + np.abs(b - a))
    if np.any(r < a - tol) or np.any(r > b + tol):
        raise DomainError("r outside [a(t), b(t)]")
    pole = np.zeros(r.shape, dtype=bool)
    if profile.pole_left:
        pole |= np.abs(r - a) <= tol
    if profile.pole_right:
        pole |= np.abs(r - b) <= tol
    return r, t, pole


def _speed(j: ProfileJet):
    q = np.sqrt(j.psi_r**2 + j.chi_r**2)
    if np.any(q < DEGENERATE_TOL):
        raise DegenerateProfileError("generating curve is not regular (q = 0)")
    return q


def _check_psi(j: ProfileJet, pole):
    if np.any((j.psi < DEGENERATE_TOL) & ~pole):
        raise DegenerateProfileError("psi <= 0 away from a pole")


def eval_metric(profile: Profile, r, t) -> MetricSample:
    r, t, pole = _prepare(profile, r, t)
    j = profile.jet(r, t)
    _check_psi(j, pole)
    q = _speed(j)
    q_r = (j.psi_r * j.psi_rr + j.chi_r * j.chi_rr) / q
    q_t = (j.psi_r * j.psi_rt + j.chi_r * j.chi_rt) / q
    g = j.psi * q
    g_t = j.psi_t * q + j.psi * q_t
    return MetricSample(j.psi, j.psi_r, q, q_r, q_t, g, g_t)


def _ricci_formula(j: ProfileJet, q):
    return (-j.psi_rr * j.chi_r**2 + j.psi_r * j.chi_r * j.chi_rr) / (j.psi * q**4)


def ricci(profile: Profile, r, t):
    """Gaussian curvature of the surface at ``(r, t)``.

    At a pole the smooth limit ``chi_rr^2 / q^4`` is used when the curve
    meets the axis orthogonally; otherwise (a cone tip) the value is
    extrapolated quadratically from the interior.
    """
    r, t, pole = _prepare(profile, r, t)
    j = profile.jet(r, t)
    _check_psi(j, pole)
    q = _speed(j)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.array(_ricci_formula(j, q), dtype=float)
    if pole.any():
        smooth = np.abs(j.chi_r) <= 1e-8 * q
        limit = j.chi_rr**2 / q**4
        rp, tp = r[pole], t[pole]
        inward = np.where(np.abs(rp - profile.a(tp)) < np.abs(rp - profile.b(tp)), 1.0, -1.0)
        delta = 1e-3 * (profile.b(tp) - profile.a(tp)) * inward
        probes = [_ricci_formula(jj, _speed(jj)) for jj in (profile.jet(rp + k * delta, tp) for k in (1, 2, 3))]
        extrapolated = 3 * probes[0] - 3 * probes[1] + probes[2]
        out[pole] = np.where(smooth[pole], limit[pole], extrapolated)
    return out


def geodesic_curvature(profile: Profile, r, t):
    """Geodesic curvature of the parallel circle through ``(r, t)``; infinite at a pole."""
    r, t, pole = _prepare(profile, r, t)
    j = profile.jet(r, t)
    _check_psi(j, pole)
    q = _speed(j)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.array(j.psi_r / (j.psi * q), dtype=float)
    out[pole] = np.sign(j.psi_r[pole]) * np.inf
    return out


def radial_expression(profile: Profile, r, t):
    """``(1/q) (psi_r / (q psi))_r`` through the identity ``-R - k_g^2``."""
    return -ricci(profile, r, t) - geodesic_curvature(profile, r, t) ** 2


def radial_expression_direct(profile: Profile, r, t):
    """Same quantity expanded by the quotient rule from the jet (independent path)."""
    r, t, pole = _prepare(profile, r, t)
    j = profile.jet(r, t)
    _check_psi(j, pole)
    q = _speed(j)
    q_r = (j.psi_r * j.psi_rr + j.chi_r * j.chi_rr) / q
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.array(j.psi_rr / (q**2 * j.psi) - j.psi_r * q_r / (q**3 * j.psi) - j.psi_r**2 / (q**2 * j.psi**2),
                       dtype=float)
    out[pole] = -np.inf
    return out


def radial_expression_fd(profile: Profile, r, t, h: float = 1e-4):
    """Centered finite difference of ``psi_r / (q psi)``; needs ``r +- h`` inside the domain."""
    r, t = np.broadcast_arrays(np.asarray(r, float), np.asarray(t, float))

    def inner(x):
        m = eval_metric(profile, x, t)
        return m.psi_r / (m.q * m.psi)

    return (inner(r + h) - inner(r - h)) / (2 * h) / eval_metric(profile, r, t).q


def dilution_coefficient(profile: Profile, r, t):
    """``(1/g) dg/dt`` for the area element ``g = psi q``; limit ``psi_rt/psi_r + q_t/q`` at a pole."""
    r, t, pole = _prepare(profile, r, t)
    m = eval_metric(profile, r, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.array(m.g_t / m.g, dtype=float)
    if pole.any():
        j = profile.jet(r[pole], t[pole])
        out[pole] = j.psi_rt / j.psi_r + m.q_t[pole] / m.q[pole]
    return out


def boundary_assumption_warnings(profile: Profile, samples: int = 16) -> list[str]:
    """Check ``chi_r > 0`` at every boundary circle (poles are not boundaries)."""
    t = np.linspace(0.0, profile.period, samples, endpoint=False)
    out = []
    for side, end, is_pole in (("left", profile.a, profile.pole_left), ("right", profile.b, profile.pole_right)):
        if is_pole:
            continue
        chi_r = profile.jet(end(t), t).chi_r
        if np.any(chi_r <= 0):
            out.append(f"chi_r <= 0 at the {side} boundary circle (min {chi_r.min():.3g}); theory assumes chi_r > 0")
    for msg in out:
        logger.warning(msg)
    return out


# ---------------------------------------------------------------------------
# built-in families


def _pf(value, period, name):
    return value if isinstance(value, PeriodicFunction) else PeriodicFunction(value, period, name)


def _expr(value):
    return value.expr if isinstance(value, PeriodicFunction) else parse_expression(value, ("t",))


def spherical_cap(R0="1", b="pi/2", period=1.0, a="0") -> SymbolicProfile:
    """Cap of the sphere of radius ``R0(t)`` at geodesic distance ``r`` from the north pole."""
    r = SYMBOLS["r"]
    R = _expr(_pf(R0, period, "R0"))
    p = SymbolicProfile(R * sp.sin(r / R), _expr(_pf(a, period, "a")), _expr(_pf(b, period, "b")), period,
                        chi=R * sp.cos(r / R), name="spherical_cap")
    return p


def dilated_sphere(rho1="1", rho2="1", period=1.0, a="0", b="1") -> SymbolicProfile:
    """Unit sphere with axis-orthogonal dilation ``rho1(t)`` and axial dilation ``rho2(t)``."""
    r = SYMBOLS["r"]
    r1, r2 = _expr(_pf(rho1, period, "rho1")), _expr(_pf(rho2, period, "rho2"))
    return SymbolicProfile(r1 * sp.sin(r), _expr(_pf(a, period, "a")), _expr(_pf(b, period, "b")), period,
                           chi=r2 * sp.cos(r), name="dilated_sphere")


def deformed_cone(rho1="1", rho2="1", period=1.0, a="0.5", b="1.5") -> SymbolicProfile:
    r = SYMBOLS["r"]
    r1, r2 = _expr(_pf(rho1, period, "rho1")), _expr(_pf(rho2, period, "rho2"))
    return SymbolicProfile(r1 * r, _expr(_pf(a, period, "a")), _expr(_pf(b, period, "b")), period,
                           chi=r2 * r, name="deformed_cone")


def dilated_static_profile(psi, a, b, zeta="1", period=1.0, chi=None) -> SymbolicProfile:
    """Static curve ``(psi(r), chi(r))`` scaled by ``zeta(t)``.

    Without ``chi`` the curve is taken to be arclength parametrised,
    ``chi_r = sqrt(1 - psi_r^2)``.
    """
    r = SYMBOLS["r"]
    psi = parse_expression(psi, ("r",))
    if chi is not None:
        chi = parse_expression(chi, ("r",))
        chi_r = sp.diff(chi, r)
    else:
        chi_r = sp.sqrt(1 - sp.diff(psi, r) ** 2)
    z = _pf(zeta, period, "zeta")
    a_val, b_val = float(parse_expression(a, ()).evalf()), float(parse_expression(b, ()).evalf())
    if chi is not None:
        p = SymbolicProfile(z.expr * psi, a_val, b_val, period, chi=z.expr * chi, name="dilated_static_profile")
    else:
        p = SymbolicProfile(z.expr * psi, a_val, b_val, period, chi_r=z.expr * chi_r, name="dilated_static_profile")
    p.static_base = StaticCurve(psi, chi_r, a_val, b_val)
    p.dilation = z
    return p


FAMILIES = {
    "spherical_cap": spherical_cap,
    "dilated_sphere": dilated_sphere,
    "deformed_cone": deformed_cone,
    "dilated_static_profile": dilated_static_profile,
}


def builtin_family(name: str, **parameters) -> SymbolicProfile:
    try:
        factory = FAMILIES[name]
    except KeyError:
        raise GeometryError(f"unknown profile family {name!r}; expected one of {sorted(FAMILIES)}") from None
    return factory(**parameters)
