"""Pointwise curvature certificates for radial periodic orbits and their reconciliation with Floquet data.

Three sign conditions are evaluated on the orbit grid:

``radial_instability_condition``
    ``(1/q)(psi_r/(q psi))_r - q_t/q + f_ur q_r/q``; ``<= 0`` everywhere
    certifies instability of a radial orbit with ``u_r != 0`` when ``f``
    does not depend on ``r``.
``curvature_growth_condition``
    ``h(X, X) - Ric(X, X)`` for the unit radial field, which equals
    ``-q_t/q - R`` because ``h = -g_t / 2``; together with convex boundary
    circles, ``<= 0`` certifies instability of any nonconstant orbit.
``dilation_stability_condition``
    ``(1/zeta^2)(psi_r/psi)_r - zeta_t/zeta`` on a dilated arclength curve;
    ``> 0`` certifies (non-strict) stability of the manufactured orbit.

All quantities are coordinate invariant, so they are evaluated directly in
the grid coordinate ``rho``; ``f_ur`` is then the derivative with respect to
``u_rho``. Pole samples carry ``-inf`` (the parallel circles shrink to a
point) and are written as ``null`` in JSON.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy as sp

from .evolve import PeriodicOrbit
from .expr import SYMBOLS, compile_expression
from .geometry import (
    Profile,
    eval_metric,
    geodesic_curvature,
    radial_expression_direct,
    ricci,
)
from .nonlinearity import Nonlinearity
from .operators import Discretization, assemble_laplace_beltrami, radial_derivative

logger = logging.getLogger(__name__)

NOT_APPLICABLE = "not applicable"


# ---------------------------------------------------------------------------
# tensor identities used by the certificates


def h_tensor(g, g_t):
    """``h_ij = 1/2 g_ir g_sj d/dt g^rs`` for a stack of metric matrices."""
    g, g_t = np.asarray(g, float), np.asarray(g_t, float)
    ginv = np.linalg.inv(g)
    ginv_t = -ginv @ g_t @ ginv
    return 0.5 * g @ ginv_t @ g


@lru_cache(maxsize=1)
def verify_h_identity(trials: int = 50, seed: int = 12345) -> float:
    """Check ``h = -g_t / 2`` on random SPD metrics against a finite-difference inverse derivative.

    Returns the largest relative discrepancy and raises if it exceeds 1e-6.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 5))
        a, b = rng.standard_normal((n, n)), rng.standard_normal((n, n))

        def metric(s):
            m = a + s * b
            return m @ m.T + n * np.eye(n)

        eps = 1e-5
        g, g_t = metric(0.0), (metric(eps) - metric(-eps)) / (2 * eps)
        ginv_t = (np.linalg.inv(metric(eps)) - np.linalg.inv(metric(-eps))) / (2 * eps)
        h_fd = 0.5 * g @ ginv_t @ g
        worst = max(worst, float(np.max(np.abs(h_fd + 0.5 * g_t)) / np.max(np.abs(g_t))),
                    float(np.max(np.abs(h_tensor(g, g_t) + 0.5 * g_t)) / np.max(np.abs(g_t))))
    if worst > 1e-6:
        raise ArithmeticError(f"h-tensor identity failed (relative error {worst:.3e})")
    return worst


def christoffel_symbols(g, dg):
    """``Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)``.

    ``g`` is ``(n, n)`` and ``dg[l]`` the derivative of ``g`` along coordinate
    ``l``. Returns ``gamma[k, i, j]``.
    """
    g, dg = np.asarray(g, float), np.asarray(dg, float)
    ginv = np.linalg.inv(g)
    # term[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    term = np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg
    return 0.5 * np.einsum("kl,lij->kij", ginv, term)


def second_fundamental_form_christoffel(profile: Profile, t: float, side: str) -> float:
    """``II(d_theta, d_theta) = <nabla_theta d_theta, nu>`` from the Christoffel symbols of the metric.

    Independent oracle for :func:`boundary_convexity`; coordinates ``(r, theta)``.
    """
    r = profile.a(t) if side == "left" else profile.b(t)
    m = eval_metric(profile, r, t)
    g = np.diag([m.q**2, m.psi**2])
    dg = np.zeros((2, 2, 2))
    dg[0] = np.diag([2 * m.q * m.q_r, 2 * m.psi * m.psi_r])  # d/dr; nothing depends on theta
    gamma = christoffel_symbols(g, dg)
    nu_r = (1.0 if side == "right" else -1.0) / m.q  # outward unit normal, radial component
    return float(g[0, 0] * gamma[0, 1, 1] * nu_r)


def boundary_convexity(profile: Profile, t: float) -> dict:
    """``II(d_theta, d_theta)`` at each boundary circle; ``None`` marks a pole (no boundary)."""
    out = {}
    for side, end, pole, sign in (("left", profile.a, profile.pole_left, 1.0),
                                  ("right", profile.b, profile.pole_right, -1.0)):
        if pole:
            out[side] = None
            continue
        m = eval_metric(profile, end(t), t)
        out[side] = float(sign * m.psi * m.psi_r / m.q)
    return out


# ---------------------------------------------------------------------------
# pointwise conditions


def radial_instability_condition(profile: Profile, r, t, f_ur=0.0):
    """``(1/q)(psi_r/(q psi))_r - q_t/q + f_ur q_r/q`` with the first term from the jet."""
    m = eval_metric(profile, r, t)
    return radial_expression_direct(profile, r, t) - m.q_t / m.q + f_ur * m.q_r / m.q


def radial_instability_condition_identity(profile: Profile, r, t, f_ur=0.0):
    """The same condition assembled as ``-R - k_g^2 - q_t/q + f_ur q_r/q``."""
    m = eval_metric(profile, r, t)
    return -ricci(profile, r, t) - geodesic_curvature(profile, r, t) ** 2 - m.q_t / m.q + f_ur * m.q_r / m.q


def curvature_growth_condition(profile: Profile, r, t):
    """``h(X, X) - Ric(X, X)`` for ``X = d_r / q``, i.e. ``-q_t/q - R``."""
    m = eval_metric(profile, r, t)
    return -m.q_t / m.q - ricci(profile, r, t)


def dilation_stability_condition(profile: Profile, r, t):
    """``(1/zeta^2)(psi_r/psi)_r - zeta_t/zeta`` in the base coordinate ``r`` of a dilated static curve.

    Raises ``ValueError`` unless the profile carries an arclength static
    base curve and a dilation factor.
    """
    curve, zeta = profile.static_base, profile.dilation
    if curve is None or zeta is None:
        raise ValueError("profile is not a dilated static curve")
    x = np.linspace(curve.a, curve.b, 257)
    if np.max(np.abs(curve.speed(x) - 1.0)) > 1e-8:
        raise ValueError("static base curve is not arclength parametrised (|q - 1| > 1e-8)")
    rs = SYMBOLS["r"]
    kappa = compile_expression(sp.diff(sp.diff(curve.psi, rs) / curve.psi, rs), ("r",))
    psi = compile_expression(curve.psi, ("r",))
    r, t = np.broadcast_arrays(np.asarray(r, float), np.asarray(t, float))
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(np.abs(psi(r)) < 1e-12, -np.inf, kappa(r))
    z = zeta(t)
    return k / z**2 - zeta.derivative(t) / z


# ---------------------------------------------------------------------------
# report


@dataclass
class CertificateSection:
    name: str
    verdict: str
    value_certified: bool
    hypotheses: dict
    reasons: list[str]
    max: float
    min: float

    def summary(self) -> dict:
        return {
            "verdict": self.verdict,
            "value_certified": self.value_certified,
            "hypotheses": self.hypotheses,
            "reasons": self.reasons,
            "max": _finite_or_none(self.max),
            "min": _finite_or_none(self.min),
        }


def _finite_or_none(x):
    return float(x) if x is not None and np.isfinite(x) else None


def _extrema(values):
    v = np.asarray(values, float)
    v = v[~np.isnan(v)]
    if v.size == 0:
        return np.nan, np.nan
    return float(v.max()), float(v.min())


@dataclass
class CertificateReport:
    nodes: np.ndarray
    times: np.ndarray
    radial_condition: np.ndarray  # (M + 1, N)
    radial_condition_identity: np.ndarray
    growth_condition: np.ndarray
    ricci: np.ndarray
    k_g: np.ndarray
    qt_over_q: np.ndarray
    fur_qr_over_q: np.ndarray
    boundary: dict
    sections: dict = field(default_factory=dict)
    identity_residual: float = 0.0
    h_identity_error: float = 0.0
    warnings: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rho", "t", "radial_condition", "growth_condition", "R", "k_g", "qt_over_q", "fur_qr_over_q"])
            for j, t in enumerate(self.times):
                for i, x in enumerate(self.nodes):
                    w.writerow([f"{x:.12g}", f"{t:.12g}"] + [
                        f"{arr[j, i]:.12g}" for arr in (self.radial_condition, self.growth_condition, self.ricci,
                                                          self.k_g, self.qt_over_q, self.fur_qr_over_q)])

    def summary(self) -> dict:
        return {
            "sections": {k: s.summary() for k, s in self.sections.items()},
            "boundary_convexity": self.boundary,
            "identity_residual": self.identity_residual,
            "h_identity_error": self.h_identity_error,
            "extrema": {
                "radial_condition": [_finite_or_none(v) for v in _extrema(self.radial_condition)],
                "growth_condition": [_finite_or_none(v) for v in _extrema(self.growth_condition)],
                "ricci": [_finite_or_none(v) for v in _extrema(self.ricci)],
            },
            "grid_caveat": "grid maxima stand in for suprema (O(h^2) uncertainty)",
            "warnings": self.warnings,
        }


def certify_orbit(disc: Discretization, orbit: PeriodicOrbit, nl: Nonlinearity) -> CertificateReport:
    """Evaluate every certificate on the orbit's grid and snapshot times."""
    h_err = verify_h_identity()
    profile = disc.profile
    rho = disc.grid.nodes
    R_, T_ = np.meshgrid(rho, orbit.times)
    ur = radial_derivative(orbit.snapshots.T, disc.grid).T
    fur = np.broadcast_to(nl.f_ur(R_, T_, orbit.snapshots, ur), R_.shape)
    m = eval_metric(profile, R_, T_)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = radial_instability_condition(profile, R_, T_, fur)
        ident = radial_instability_condition_identity(profile, R_, T_, fur)
    growth = curvature_growth_condition(profile, R_, T_)
    both = np.isfinite(direct) & np.isfinite(ident)
    scale = 1.0 + np.abs(direct[both])
    id_res = float(np.max(np.abs(direct[both] - ident[both]) / scale)) if both.any() else 0.0

    boundary_t = [boundary_convexity(profile, float(t)) for t in orbit.times]
    boundary = {}
    for side in ("left", "right"):
        vals = [b[side] for b in boundary_t]
        boundary[side] = None if vals[0] is None else {"max": max(vals), "min": min(vals)}
    convex = all(v is None or v["max"] <= 0 for v in boundary.values())

    report = CertificateReport(rho, orbit.times.copy(), direct, ident, growth, ricci(profile, R_, T_),
                               geodesic_curvature(profile, R_, T_), m.q_t / m.q,
                               np.asarray(fur * m.q_r / m.q, float), boundary,
                               identity_residual=id_res, h_identity_error=h_err)

    # instability for radial orbits with u_r != 0
    hyp = {"radial_monotone": orbit.radial_monotone, "r_independent": nl.r_independent}
    vmax, vmin = _extrema(direct)
    certified = bool(vmax <= 0)
    reasons = []
    if not orbit.radial_monotone:
        reasons.append("statement hypothesis unmet: u_rho changes sign or is too small (radial_monotone false)")
    if not nl.r_independent:
        reasons.append("nonlinearity depends on rho")
    verdict = NOT_APPLICABLE if reasons else ("instability certified" if certified else "not certified")
    report.sections["radial_instability"] = CertificateSection(
        "radial_instability", verdict, certified, hyp, reasons, vmax, vmin)

    # instability from metric growth and curvature, radial direction
    gmax, gmin = _extrema(growth)
    certified = bool(gmax <= 0)
    hyp = {"boundary_convex": convex, "nonconstant_orbit": not orbit.spatially_constant}
    reasons = []
    if not convex:
        reasons.append("a boundary circle is not convex (II > 0)")
    if orbit.spatially_constant:
        reasons.append("orbit is spatially constant")
    verdict = NOT_APPLICABLE if reasons else ("instability certified" if certified else "not certified")
    report.sections["curvature_growth"] = CertificateSection(
        "curvature_growth", verdict, certified, hyp, reasons, gmax, gmin)

    # stability of manufactured orbits on dilated static curves
    if profile.static_base is not None and profile.dilation is not None:
        curve = profile.static_base
        base_r = curve.a + R_ * (curve.b - curve.a)
        reasons, hyp = [], {"dilated_arclength_profile": True, "gradient_free": not nl.gradient_dependent}
        try:
            vals = dilation_stability_condition(profile, base_r, T_)
            smax, smin = _extrema(vals)
        except ValueError as exc:
            reasons.append(str(exc))
            hyp["dilated_arclength_profile"] = False
            smax = smin = np.nan
        if nl.gradient_dependent:
            reasons.append("nonlinearity depends on the gradient")
        certified = bool(smin > 0)
        verdict = NOT_APPLICABLE if reasons else ("stability certified" if certified else "not certified")
        report.sections["dilation_stability"] = CertificateSection(
            "dilation_stability", verdict, certified, hyp, reasons, smax, smin)
    return report


# ---------------------------------------------------------------------------
# reconciliation


@dataclass
class Reconciliation:
    rows: list
    contradictions: list
    verdict: str

    def summary(self) -> dict:
        return {"rows": self.rows, "contradictions": self.contradictions, "verdict": self.verdict}


def reconcile(report: CertificateReport | None, spectra, epsilon: float, floquet_verdict: str | None = None) -> Reconciliation:
    """Cross-check certificate verdicts against the Floquet principal eigenvalues.

    An instability certificate requires ``lambda_1(k=0) <= epsilon`` and a
    stability certificate ``lambda_1 >= -epsilon``; anything else is listed
    as a contradiction.
    """
    lam0 = next((s.lambda1 for s in spectra if s.mode == 0), None)
    lam_star = min((s.lambda1 for s in spectra), default=None)
    rows, bad = [], []
    sections = report.sections if report is not None else {}
    for name, sec in sections.items():
        row = {"certificate": name, "verdict": sec.verdict, "lambda1_mode0": lam0, "lambda1_min": lam_star}
        if sec.verdict == "instability certified":
            row["requirement"] = "lambda1(k=0) <= epsilon"
            row["consistent"] = lam0 is None or lam0 <= epsilon
        elif sec.verdict == "stability certified":
            row["requirement"] = "lambda1(k=0) >= -epsilon"
            row["consistent"] = lam0 is None or lam0 >= -epsilon
        else:
            row["requirement"] = None
            row["consistent"] = None
        if row["consistent"] is False:
            bad.append(f"{name}: {sec.verdict} but lambda1(k=0) = {lam0:.6g} (epsilon {epsilon:.3g})")
        rows.append(row)
    if floquet_verdict is None and lam_star is not None:
        floquet_verdict = "unstable" if lam_star < -epsilon else "stable" if lam_star > epsilon else "marginal"
    verdict = "contradiction" if bad else (floquet_verdict or "undetermined")
    return Reconciliation(rows, bad, verdict)


# ---------------------------------------------------------------------------
# Bochner-Weitzenboeck spot check


@dataclass
class BochnerCheck:
    residual: np.ndarray
    violation: np.ndarray
    interior: slice


def bochner_check(disc: Discretization, u, t: float = 0.0, margin: int = 2) -> BochnerCheck:
    """Discrete Bochner residual and gradient-inequality slack for a radial ``u`` on a static surface.

    Residual: ``1/2 Delta |grad u|^2 - |Hess u|^2 - Ric(grad u, grad u) - <grad Delta u, grad u>``.
    Violation: ``|grad |grad u|^2|^2 - 4 |Hess u|^2 |grad u|^2`` (should be ``<= 0``).
    Both are reported on nodes at least ``margin`` away from either end.
    """
    grid, profile = disc.grid, disc.profile
    u = np.asarray(u, float)
    h, rho = grid.h, grid.nodes
    tt = np.full_like(rho, t)
    m = eval_metric(profile, rho, tt)
    R = ricci(profile, rho, tt)
    lap0 = assemble_laplace_beltrami(profile, grid, t, 0)

    u_r = radial_derivative(u, grid)
    u_rr = np.zeros_like(u)
    u_rr[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2
    grad2 = u_r**2 / m.q**2
    hess_rr = u_rr - m.q_r / m.q * u_r
    with np.errstate(divide="ignore", invalid="ignore"):
        hess_tt = m.psi * m.psi_r * u_r / m.q**2
        hess2 = hess_rr**2 / m.q**4 + hess_tt**2 / m.psi**4
    lap_u = lap0.apply(u)
    lap_grad2 = lap0.apply(grad2)
    d_lap = radial_derivative(lap_u, grid)
    residual = 0.5 * lap_grad2 - hess2 - R * grad2 - d_lap * u_r / m.q**2
    d_grad2 = radial_derivative(grad2, grid)
    violation = d_grad2**2 / m.q**2 - 4 * hess2 * grad2
    inner = slice(margin, grid.n - margin)
    return BochnerCheck(residual[inner], violation[inner], inner)
