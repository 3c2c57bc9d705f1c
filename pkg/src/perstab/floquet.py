"""Linearisation along a periodic orbit, monodromy and principal Floquet data.

Sign convention: the periodic eigenproblem is ``phi_t + A phi = lambda phi``
with ``A = -(Laplacian + f_u + f_ur d/drho)``. A T-periodic eigenfunction is a
fixed direction of the forward propagator with multiplier
``mu = exp(-lambda T)``, so the largest positive multiplier gives the
principal eigenvalue ``lambda_1 = -log(mu_1) / T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evolve import PeriodicOrbit
from .nonlinearity import Nonlinearity
from .operators import Discretization, RadialGrid, TridiagonalStencil, gradient_stencil, radial_derivative


class FloquetError(ArithmeticError):
    pass


class PerronViolation(FloquetError):
    pass


class MonodromyCapExceeded(FloquetError):
    pass


@dataclass
class LinearizedSystem:
    """Snapshot stencils of the linearisation, split like the nonlinear scheme.

    ``diffusion[j]`` is the (mode-k) Laplace-Beltrami stencil at ``t_j`` and
    ``reaction[j]`` the stencil of ``f_u + f_ur d/drho`` along the orbit.
    ``reaction_half`` is evaluated at the midpoint of the first step, which
    the implicit start needs. Propagation applies the same IMEX scheme as
    :func:`perstab.evolve.period_map`, so for reaction terms affine in ``u``
    the monodromy is exactly the Jacobian of the discrete period map.
    """

    times: np.ndarray
    diffusion: list[TridiagonalStencil]
    reaction: list[TridiagonalStencil]
    reaction_half: TridiagonalStencil
    grid: RadialGrid
    k: int
    smoothing: bool = True
    f_u: np.ndarray | None = None  # (M + 1, N), kept for diagnostics
    f_ur: np.ndarray | None = None

    @property
    def period(self) -> float:
        return float(self.times[-1])

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def stencils(self) -> list[TridiagonalStencil]:
        return [d + r for d, r in zip(self.diffusion, self.reaction)]


def _reaction_stencil(nl, grid, t, u):
    rho = grid.nodes
    ur = radial_derivative(u, grid)
    tt = np.full_like(rho, t)
    fu = np.array(np.broadcast_to(nl.f_u(rho, tt, u, ur), rho.shape), dtype=float)
    fur = np.array(np.broadcast_to(nl.f_ur(rho, tt, u, ur), rho.shape), dtype=float)
    st = TridiagonalStencil(np.zeros(grid.n), fu, np.zeros(grid.n))
    if np.any(fur != 0):
        st = st + gradient_stencil(grid, fur)
    return st, fu, fur


def linearize(orbit: PeriodicOrbit, nl: Nonlinearity, disc: Discretization, k: int | None = None) -> LinearizedSystem:
    """Stencils of ``Laplacian_k + f_u + f_ur d/drho`` at every orbit snapshot; ``k`` defaults to ``disc.k``."""
    k = disc.k if k is None else k
    if abs(orbit.period - disc.period) > 1e-12 * disc.period or not nl.compatible_with(disc.period):
        raise FloquetError("orbit, nonlinearity and profile periods do not match")
    dk = disc if disc.k == k else disc.with_mode(k)
    diffusion, reaction, fu_all, fur_all = [], [], [], []
    for t, u in zip(orbit.times, orbit.snapshots):
        st, fu, fur = _reaction_stencil(nl, dk.grid, t, u)
        diffusion.append(dk.operator(t))
        reaction.append(st)
        fu_all.append(fu)
        fur_all.append(fur)
    t_half = 0.5 * (orbit.times[0] + orbit.times[1])
    u_half = 0.5 * (orbit.snapshots[0] + orbit.snapshots[1])
    half = _reaction_stencil(nl, dk.grid, t_half, u_half)[0]
    return LinearizedSystem(orbit.times.copy(), diffusion, reaction, half, dk.grid, k,
                            f_u=np.array(fu_all), f_ur=np.array(fur_all))


def constant_system(disc: Discretization, steps: int, coefficient=0.0, k: int = 0) -> LinearizedSystem:
    """Linearisation about the zero state of ``f = c(t) u``."""
    times = np.linspace(0.0, disc.period, steps + 1)
    orbit = PeriodicOrbit(times, np.zeros((steps + 1, disc.grid.n)), 0.0, 0, disc.grid.h)
    c = coefficient if callable(coefficient) else (lambda t, c=coefficient: np.full_like(t, c))
    nl = Nonlinearity(f=lambda rho, t, u, ur: c(t) * u, f_u=lambda rho, t, u, ur: c(t) + 0 * rho,
                      f_ur=lambda rho, t, u, ur: 0 * rho, name="constant")
    return linearize(orbit, nl, disc, k)


def linear_propagate(sys: LinearizedSystem, phi0, record: bool = False):
    """Propagate ``phi_t = L(t) phi`` over one period.

    Diffusion is Crank-Nicolson and the reaction stencils explicit Heun,
    with the same implicit start as the nonlinear period map. ``phi0`` may be
    a vector or an ``(N, m)`` block of columns.
    """
    phi = np.array(phi0, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise FloquetError("initial perturbation is not finite")
    out = [phi.copy()] if record else None
    for j in range(sys.steps):
        dt = sys.times[j + 1] - sys.times[j]
        d0, d1 = sys.diffusion[j], sys.diffusion[j + 1]
        b0, b1 = sys.reaction[j], sys.reaction[j + 1]
        if j == 0 and sys.smoothing:
            half = 0.5 * dt
            p1 = d1.solve_shifted(phi + half * b0.apply(phi), half)
            phi = d1.solve_shifted(p1 + half * sys.reaction_half.apply(p1), half)
        else:
            base = phi + 0.5 * dt * d0.apply(phi)
            r0 = b0.apply(phi)
            pred = d1.solve_shifted(base + dt * r0, 0.5 * dt)
            phi = d1.solve_shifted(base + 0.5 * dt * (r0 + b1.apply(pred)), 0.5 * dt)
        if not np.all(np.isfinite(phi)):
            raise FloquetError(f"linearised solution became non-finite at t = {sys.times[j + 1]:.6g}")
        if record:
            out.append(phi.copy())
    return (phi, np.array(out)) if record else phi


def monodromy(sys: LinearizedSystem, cap: int = 1024) -> np.ndarray:
    """Dense period map of the linearisation; column ``j`` propagates ``e_j``."""
    n = sys.grid.n
    if n > cap:
        raise MonodromyCapExceeded(f"N = {n} exceeds the dense monodromy cap {cap}; use power iteration only")
    return linear_propagate(sys, np.eye(n))


def rotated(sys: LinearizedSystem, j: int) -> LinearizedSystem:
    """The same periodic system started at snapshot ``j`` instead of 0.

    The reaction stencil at the midpoint of the new first step is the
    average of its neighbours.
    """
    if not 0 <= j < sys.steps:
        raise ValueError("start index out of range")
    t = sys.times
    times = np.concatenate([t[j:] - t[j], t[1:j + 1] + (t[-1] - t[j])])
    diffusion = sys.diffusion[j:] + sys.diffusion[1:j + 1]
    reaction = sys.reaction[j:] + sys.reaction[1:j + 1]
    r0, r1 = reaction[0], reaction[1]
    half = TridiagonalStencil(0.5 * (r0.lower + r1.lower), 0.5 * (r0.diag + r1.diag), 0.5 * (r0.upper + r1.upper),
                              r0.fixed | r1.fixed)
    return LinearizedSystem(times, diffusion, reaction, half, sys.grid, sys.k, sys.smoothing)


def start_independence(sys: LinearizedSystem, fractions=(0.0, 0.25, 0.5, 0.75)) -> dict:
    """Principal multiplier for several start times (equal for the continuous problem)."""
    mus = []
    for frac in fractions:
        j = int(round(frac * sys.steps)) % sys.steps
        mus.append(principal_eigen(monodromy(rotated(sys, j))).mu1)
    mus = np.array(mus)
    return {"starts": list(fractions), "mu1": mus.tolist(),
            "relative_spread": float(np.ptp(mus) / np.max(np.abs(mus)))}


@dataclass
class PrincipalEigen:
    mu1: float
    vector: np.ndarray
    mu2_abs: float
    residual: float
    iterations: int


def _normalise(v):
    v = v / np.linalg.norm(v)
    return -v if v.sum() < 0 else v


def principal_eigen(matrix, tol: float = 1e-8, max_iter: int = 200000, seed: int = 0,
                    sign_tol: float = 1e-6, n: int | None = None) -> PrincipalEigen:
    """Power iteration from the positive constant vector, plus a 2-block orthogonal iteration for ``|mu_2|``.

    ``matrix`` may be a dense array or a callable applying the operator to
    a vector or a column block (then ``n`` is required). Iterates are never
    clipped: a converged vector with entries of both signs, or a block Ritz
    value larger than the power-iteration limit, raises :class:`PerronViolation`.
    """
    if callable(matrix):
        if n is None:
            raise ValueError("n is required when matrix is a callable")
        apply = matrix
    else:
        matrix = np.asarray(matrix, dtype=float)
        if not np.all(np.isfinite(matrix)):
            raise FloquetError("monodromy is not finite")
        n = matrix.shape[0]
        apply = lambda x: matrix @ x  # noqa: E731
    v = _normalise(np.ones(n))
    rng = np.random.default_rng(seed)
    block = np.linalg.qr(np.column_stack([v, rng.standard_normal(n)]))[0]
    mu, res = 0.0, np.inf
    for it in range(1, max_iter + 1):
        w = apply(v)
        mu = float(v @ w)
        res = float(np.linalg.norm(w - mu * v))
        scale = max(abs(mu), 1e-300)
        if res <= tol * scale or res <= tol * 1e-6:
            break
        nw = np.linalg.norm(w)
        if nw == 0:
            raise FloquetError("monodromy annihilates the iterate")
        v = _normalise(w)
        block = np.linalg.qr(apply(block))[0]
    else:
        raise FloquetError(f"power iteration did not converge (residual {res:.3e})")
    for _ in range(50):
        block = np.linalg.qr(apply(block))[0]
    ritz = np.abs(np.linalg.eigvals(block.T @ apply(block)))
    if ritz.max() > abs(mu) * (1 + 1e-6) + 1e-14:
        raise PerronViolation(f"a multiplier of modulus {ritz.max():.6g} dominates the positive-cone limit {mu:.6g}")
    mu2 = float(ritz.min()) if abs(mu) > 0 else 0.0
    vmax = np.max(np.abs(v))
    if np.min(v) < -sign_tol * vmax:
        raise PerronViolation(f"principal vector changes sign (min/max = {np.min(v) / vmax:.3e})")
    if not mu > 0:
        raise PerronViolation(f"principal multiplier is not positive ({mu:.6g})")
    return PrincipalEigen(mu, v, mu2, res / max(abs(mu), 1e-300), it)


@dataclass
class FloquetSpectrum:
    mode: int
    mu1: float
    lambda1: float
    mu2_abs: float
    residual: float
    period: float
    eigenfunction: np.ndarray = field(repr=False)  # (M + 1, N)
    mu1_dense: float | None = None
    iterations: int = 0

    @property
    def gap_ratio(self) -> float:
        return self.mu2_abs / self.mu1

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "mu1": self.mu1,
            "lambda1": self.lambda1,
            "mu2_abs": self.mu2_abs,
            "gap_ratio": self.gap_ratio,
            "residual": self.residual,
            "mu1_dense": self.mu1_dense,
        }

    def eigenfunction_csv(self, path, nodes, times) -> None:
        t = np.repeat(times, nodes.size)
        rho = np.tile(nodes, times.size)
        np.savetxt(path, np.column_stack([t, rho, self.eigenfunction.ravel()]), delimiter=",",
                   header="t,rho,phi", comments="", fmt="%.12g")


def dense_principal(matrix: np.ndarray) -> float:
    """Dominant multiplier from a full eigendecomposition (oracle for the power iteration).

    The eigenvalue of largest modulus must be real, positive and carry a
    single-signed eigenvector; anything else is a :class:`PerronViolation`.
    """
    vals, vecs = np.linalg.eig(matrix)
    i = int(np.argmax(np.abs(vals)))
    mu = vals[i]
    if abs(mu.imag) > 1e-10 * max(1.0, abs(mu)) or not mu.real > 0:
        raise PerronViolation(f"dominant multiplier {mu:.6g} is not real and positive")
    v = vecs[:, i].real
    v = v / v[np.argmax(np.abs(v))]
    if np.min(v) < -1e-6:
        raise PerronViolation("dominant eigenvector changes sign")
    return float(mu.real)


def floquet_spectrum(sys: LinearizedSystem, tol: float = 1e-8, dense_check: bool = True) -> FloquetSpectrum:
    mat = monodromy(sys)
    pe = principal_eigen(mat, tol=tol)
    _, path = linear_propagate(sys, pe.vector, record=True)
    scale = np.exp(-np.log(pe.mu1) * sys.times / sys.period)[:, None]
    eigfun = path * scale  # rescaled so the snapshots are T-periodic
    return FloquetSpectrum(
        mode=sys.k,
        mu1=pe.mu1,
        lambda1=-np.log(pe.mu1) / sys.period,
        mu2_abs=pe.mu2_abs,
        residual=pe.residual,
        period=sys.period,
        eigenfunction=eigfun,
        mu1_dense=dense_principal(mat) if dense_check else None,
        iterations=pe.iterations,
    )


@dataclass(frozen=True)
class Verdict:
    label: str  # "stable" | "unstable" | "marginal"
    lambda_star: float
    mode: int
    epsilon: float


def scheme_epsilon(disc: Discretization, steps: int, coefficient_scale: float = 1.0) -> float:
    """Marginality band ``10 (dt^2 + h^2)`` times a coefficient magnitude."""
    dt = disc.period / steps
    return 10.0 * (dt * dt + disc.grid.h**2) * max(1.0, coefficient_scale)


def coefficient_scale(sys: LinearizedSystem, disc: Discretization) -> float:
    from .geometry import eval_metric

    q = eval_metric(disc.profile, disc.grid.nodes, np.zeros(disc.grid.n)).q
    parts = [1.0 / np.min(q) ** 2]
    if sys.f_u is not None:
        parts.append(float(np.max(np.abs(sys.f_u))))
        parts.append(float(np.max(np.abs(sys.f_ur))) / float(np.min(q)))
    return max(parts)


def classify(spectra: list[FloquetSpectrum], epsilon: float) -> Verdict:
    if not spectra or not any(s.mode == 0 for s in spectra):
        raise ValueError("classify needs at least the mode-0 spectrum")
    worst = min(spectra, key=lambda s: (s.lambda1, s.mode))
    lam = worst.lambda1
    label = "unstable" if lam < -epsilon else "stable" if lam > epsilon else "marginal"
    return Verdict(label, lam, worst.mode, epsilon)


@dataclass
class SignCertificate:
    kind: str  # "sub" or "super"
    residual: np.ndarray  # (M, N) discrete (d/dt - L) w at half steps
    interior_fraction: float
    boundary_flux: dict
    boundary_ok: bool
    certifies: str
    consistent: bool | None = None

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "interior_fraction": self.interior_fraction,
            "boundary_flux": self.boundary_flux,
            "boundary_ok": self.boundary_ok,
            "certifies": self.certifies,
            "consistent": self.consistent,
        }


def subsolution_check(sys: LinearizedSystem, w, kind: str = "sub", lambda1: float | None = None,
                      epsilon: float = 0.0, tol: float = 0.0, exclude: int = 1, metric_q=None) -> SignCertificate:
    """Discrete sign test for ``w_t - L w`` (``<= 0`` for sub-, ``>= 0`` for supersolutions).

    The residual is the Crank-Nicolson defect between consecutive snapshots.
    ``exclude`` rows next to each end are left out of the interior count;
    ``tol`` widens the sign test to absorb scheme error. The outward normal
    derivative at each non-pole end uses a one-sided difference (divided by
    ``metric_q`` at that end when given).
    """
    if kind not in ("sub", "super"):
        raise ValueError("kind must be 'sub' or 'super'")
    w = np.asarray(w, dtype=float)
    if np.any(w < -1e-14) or not np.any(w > 0):
        raise ValueError("w must be nonnegative and not identically zero")
    res = np.empty((sys.steps, sys.grid.n))
    lw = [st.apply(wj) for st, wj in zip(sys.stencils, w)]
    floor = 0.0
    for j in range(sys.steps):
        dt = sys.times[j + 1] - sys.times[j]
        res[j] = (w[j + 1] - w[j]) / dt - 0.5 * (lw[j + 1] + lw[j])
        # cancellation error of the defect itself
        floor = max(floor, 64 * np.finfo(float).eps * (np.max(np.abs(w[j:j + 2])) / dt + np.max(np.abs(lw[j]))))
    inner = res[:, exclude:sys.grid.n - exclude] if exclude else res
    sgn = 1.0 if kind == "sub" else -1.0
    frac = float(np.mean(sgn * inner <= tol + floor))
    h = sys.grid.h
    flux = {}
    if not sys.grid.pole_left:
        qa = 1.0 if metric_q is None else metric_q[0]
        flux["left"] = float(np.max(sgn * (-(w[:, 1] - w[:, 0]) / h / qa)))
    if not sys.grid.pole_right:
        qb = 1.0 if metric_q is None else metric_q[1]
        flux["right"] = float(np.max(sgn * ((w[:, -1] - w[:, -2]) / h / qb)))
    boundary_ok = all(v <= tol for v in flux.values())
    # flux values are stored with the sign of the test (<= 0 means satisfied)
    holds = frac == 1.0 and boundary_ok
    claim = ("lambda1 <= 0" if kind == "sub" else "lambda1 >= 0") if holds else "none"
    consistent = None
    if lambda1 is not None and holds:
        consistent = lambda1 <= epsilon if kind == "sub" else lambda1 >= -epsilon
    return SignCertificate(kind, res, frac, flux, boundary_ok, claim, consistent)
