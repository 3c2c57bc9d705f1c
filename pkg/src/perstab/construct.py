"""Explicit examples: manufactured orbits on dilating surfaces, the Fisher term and a kernel-mode state.

A manufactured orbit is ``u = U(r) phi(t)`` on the surface ``zeta(t)`` times a
static arclength-parametrised curve. With ``F`` defined by ``-Delta U = F(U)``
on the static curve, ``u`` solves the reaction-diffusion equation for::

    f(t, u) = (phi'/phi) u + (phi / zeta^2) F(u / phi)

Whether ``F`` is C^1 depends on ``U``: at a Neumann end where ``U_r`` has a
simple zero, ``F'`` stays bounded only if ``U_rrr = -(psi_r/psi) U_rr`` there,
and at a pole ``U`` must be even. :attr:`SourceMap.slope_bound` reports the
resulting ``max |F'|`` so badly matched data is visible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sp
from scipy.interpolate import PchipInterpolator
from scipy.special import lpmv

from .expr import SYMBOLS, compile_expression, parse_expression
from .geometry import PeriodicFunction, StaticCurve, SymbolicProfile, dilated_sphere, dilated_static_profile
from .nonlinearity import Nonlinearity, check_nonlinearity_periodic, symbolic_nonlinearity


class ConstructionError(ValueError):
    pass


@dataclass(frozen=True)
class SourceMap:
    """``F`` on ``[s_min, s_max]`` with constant extension outside."""

    s_min: float
    s_max: float
    interpolant: PchipInterpolator
    slope_bound: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return self.interpolant(np.clip(s, self.s_min, self.s_max))

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        inside = (s >= self.s_min) & (s <= self.s_max)
        return np.where(inside, self.interpolant(np.clip(s, self.s_min, self.s_max), 1), 0.0)


def _static_laplacian(curve: StaticCurve, U: sp.Expr):
    """Callable ``Delta U`` on the static curve (assumed arclength), with the axis limit ``2 U_rr``."""
    r = SYMBOLS["r"]
    psi, psi_r = compile_expression(curve.psi, ("r",)), compile_expression(sp.diff(curve.psi, r), ("r",))
    U_r = compile_expression(sp.diff(U, r), ("r",))
    U_rr = compile_expression(sp.diff(U, r, 2), ("r",))

    def laplacian(x):
        x = np.asarray(x, dtype=float)
        p = psi(x)
        axis = np.abs(p) < 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            val = U_rr(x) + np.where(axis, 0.0, psi_r(x) / np.where(axis, 1.0, p)) * U_r(x)
        return np.where(axis, 2.0 * U_rr(x), val)

    return laplacian


def build_F_from_U(U, curve: StaticCurve, samples: int = 4001) -> SourceMap:
    """Tabulate ``F(s) = -Delta U(U^{-1}(s))`` on the static curve.

    ``U`` is an expression in ``r`` on ``[curve.a, curve.b]`` and must be
    strictly increasing. ``F`` is the monotone cubic (PCHIP) interpolant of
    the pairs ``(U(r_k), -Delta U(r_k))``.
    """
    speed = curve.speed(np.linspace(curve.a, curve.b, 257))
    if np.max(np.abs(speed - 1.0)) > 1e-8:
        raise ConstructionError("base curve must be arclength parametrised (|q - 1| <= 1e-8)")
    U = parse_expression(U, ("r",))
    r = np.linspace(curve.a, curve.b, samples)
    u_vals = np.broadcast_to(compile_expression(U, ("r",))(r), r.shape).astype(float)
    slope = np.diff(u_vals) / np.diff(r)
    if not np.all(np.isfinite(u_vals)) or np.min(slope) <= 1e-6:
        raise ConstructionError(f"U must be strictly increasing (min slope {np.min(slope):.3e})")
    G = -_static_laplacian(curve, U)(r)
    if not np.all(np.isfinite(G)):
        raise ConstructionError("Delta U is not finite on the curve")
    interp = PchipInterpolator(u_vals, G, extrapolate=False)
    bound = float(np.max(np.abs(interp(u_vals, 1))))
    return SourceMap(float(u_vals[0]), float(u_vals[-1]), interp, bound)


@dataclass
class ManufacturedSolution:
    """``u = U(r) phi(t)`` on the ``zeta``-dilated static curve."""

    profile: SymbolicProfile
    curve: StaticCurve
    U: sp.Expr
    phi: PeriodicFunction
    zeta: PeriodicFunction
    source: SourceMap

    @property
    def period(self) -> float:
        return self.profile.period

    def base_coordinate(self, rho):
        return self.curve.a + np.asarray(rho, dtype=float) * (self.curve.b - self.curve.a)

    def exact(self, rho, t):
        U = compile_expression(self.U, ("r",))
        return U(self.base_coordinate(rho)) * self.phi(t)

    def exact_rho(self, rho, t):
        """``du/drho`` of the exact orbit."""
        U_r = compile_expression(sp.diff(self.U, SYMBOLS["r"]), ("r",))
        return (self.curve.b - self.curve.a) * U_r(self.base_coordinate(rho)) * self.phi(t)

    def snapshots(self, nodes, times):
        return np.array([self.exact(nodes, np.full_like(nodes, t)) for t in times])

    def nonlinearity(self) -> Nonlinearity:
        return manufactured_nonlinearity(self)


def manufactured_solution(psi, a, b, U, phi="1", zeta="1", period=1.0, chi=None,
                          samples: int = 4001) -> ManufacturedSolution:
    profile = dilated_static_profile(psi, a, b, zeta, period, chi=chi)
    phi = PeriodicFunction(phi, period, "phi")
    if np.min(phi(np.linspace(0, period, 257))) <= 0:
        raise ConstructionError("phi must be positive")
    if np.min(profile.dilation(np.linspace(0, period, 257))) <= 0:
        raise ConstructionError("zeta must be positive")
    source = build_F_from_U(U, profile.static_base, samples)
    return ManufacturedSolution(profile, profile.static_base, parse_expression(U, ("r",)), phi,
                                profile.dilation, source)


def manufactured_nonlinearity(ms: ManufacturedSolution) -> Nonlinearity:
    """``f(t, u) = (phi'/phi) u + (phi/zeta^2) F(u/phi)`` with ``F'`` from the interpolant."""
    phi, zeta, F = ms.phi, ms.zeta, ms.source

    def f(rho, t, u, ur):
        p = phi(t)
        return phi.derivative(t) / p * u + p / zeta(t) ** 2 * F(u / p)

    def f_u(rho, t, u, ur):
        p = phi(t)
        return phi.derivative(t) / p + F.derivative(u / p) / zeta(t) ** 2

    def f_ur(rho, t, u, ur):
        return np.zeros(np.broadcast(rho, t, u).shape)

    nl = Nonlinearity(f, f_u, f_ur, period=ms.period, gradient_dependent=False, r_independent=True,
                      name="manufactured")
    check_nonlinearity_periodic(nl)
    return nl


def fisher_h(u, alpha: float):
    u = np.asarray(u, dtype=float)
    return u * (1 - u) * (alpha * (1 - u) + (1 - alpha) * u)


def fisher_h_prime(u, alpha: float):
    u = np.asarray(u, dtype=float)
    return (1 - 2 * u) * (alpha + (1 - 2 * alpha) * u) + u * (1 - u) * (1 - 2 * alpha)


def fisher_nonlinearity(m, alpha: float, period: float | None = None) -> Nonlinearity:
    """Periodic Fisher term ``m(rho, t) h(u)``, ``h(u) = u(1-u)[alpha(1-u) + (1-alpha)u]``."""
    if not 0.0 < alpha < 1.0:
        raise ConstructionError(f"alpha must lie in (0, 1), got {alpha}")
    u = SYMBOLS["u"]
    h = u * (1 - u) * (alpha * (1 - u) + (1 - alpha) * u)
    return symbolic_nonlinearity(parse_expression(m, ("rho", "t")) * h, period, name=f"fisher(alpha={alpha:g})")


@dataclass
class KernelModeState:
    """A non-radial periodic state ``u = A(t) P_l^k(cos r) cos(k theta)`` on the static unit sphere.

    With ``f = (l(l+1) + m(t)) u`` and ``A(t) = exp(int_0^t m)`` this solves
    the equation exactly; ``m`` must have zero mean over a period. Its
    angular derivative is a T-periodic solution of the linearisation in
    Fourier mode ``k`` with radial factor :meth:`angular_factor`.
    """

    profile: SymbolicProfile
    nonlinearity: Nonlinearity
    ell: int
    k: int
    amplitude: PeriodicFunction

    def angular_factor(self, rho):
        r = np.pi * np.asarray(rho, dtype=float)
        return self.k * lpmv(self.k, self.ell, np.cos(r))

    def radial_orbit(self, nodes, times):
        """The mode-0 part of the state, identically zero for ``k >= 1``."""
        return np.zeros((len(times), len(nodes)))


def kernel_mode_state(ell: int = 1, k: int = 1, m="0.5*sin(2*pi*t)", period: float = 1.0) -> KernelModeState:
    if not 1 <= k <= ell:
        raise ConstructionError("need 1 <= k <= ell")
    t, s = SYMBOLS["t"], sp.Dummy("s")
    m_expr = parse_expression(m, ("t",))
    integral = sp.integrate(m_expr.subs(t, s), (s, 0, t))
    amp = PeriodicFunction(sp.exp(integral), period, "A")
    nl = symbolic_nonlinearity((ell * (ell + 1) + m_expr) * SYMBOLS["u"], period, name="kernel_mode")
    return KernelModeState(dilated_sphere("1", "1", period, a="0", b="pi"), nl, ell, k, amp)
