"""Time stepping, the period map and the periodic-orbit finder.

Diffusion is Crank-Nicolson, the reaction an explicit Heun predictor/corrector.
Each period starts with two implicit half steps (Rannacher start) so that the
stiff diffusion modes, which Crank-Nicolson barely damps, cannot pollute the
period map or its spectrum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .nonlinearity import Nonlinearity
from .operators import Discretization, Field, SolveError, radial_derivative

logger = logging.getLogger(__name__)


class BlowUpError(ArithmeticError):
    def __init__(self, t: float):
        super().__init__(f"solution became non-finite at t = {t:.6g}")
        self.t = t


class OrbitNotFoundError(RuntimeError):
    def __init__(self, residual: float, best: np.ndarray, iterations: int):
        super().__init__(f"no periodic orbit after {iterations} iterations (best residual {residual:.3e})")
        self.residual = residual
        self.best = best
        self.iterations = iterations


@dataclass
class PeriodicOrbit:
    times: np.ndarray
    snapshots: np.ndarray  # (M + 1, N)
    residual: float
    iterations: int
    h: float
    radial_monotone: bool = False
    spatially_constant: bool = False
    seed: str = ""
    history: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def period(self) -> float:
        return float(self.times[-1])

    def field(self, j: int) -> Field:
        return Field(self.snapshots[j], float(self.times[j]))

    def to_csv(self, path, nodes) -> None:
        t = np.repeat(self.times, nodes.size)
        rho = np.tile(nodes, self.times.size)
        np.savetxt(path, np.column_stack([t, rho, self.snapshots.ravel()]), delimiter=",",
                   header="t,rho,u", comments="", fmt="%.12g")


def _reaction(nl: Nonlinearity, disc: Discretization, t: float, u: np.ndarray) -> np.ndarray:
    rho = disc.grid.nodes
    with np.errstate(over="ignore", invalid="ignore"):
        f = nl.f(rho, np.full_like(rho, t), u, radial_derivative(u, disc.grid))
    return _checked(np.broadcast_to(f, u.shape), t)


def _checked(u: np.ndarray, t: float) -> np.ndarray:
    if not np.all(np.isfinite(u)):
        raise BlowUpError(t)
    return u


def step(u, t: float, dt: float, nl: Nonlinearity, disc: Discretization) -> np.ndarray:
    """One IMEX Crank-Nicolson / Heun step from ``t`` to ``t + dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u.values if isinstance(u, Field) else u, dtype=float)
    l0, l1 = disc.operator(t), disc.operator(t + dt)
    base = u + 0.5 * dt * l0.apply(u)
    f0 = _reaction(nl, disc, t, u)
    try:
        pred = _checked(l1.solve_shifted(_checked(base + dt * f0, t), 0.5 * dt), t + dt)
        f1 = _reaction(nl, disc, t + dt, pred)
        out = l1.solve_shifted(_checked(base + 0.5 * dt * (f0 + f1), t + dt), 0.5 * dt)
    except SolveError as exc:
        raise SolveError(f"step at t = {t:.6g}: {exc}") from exc
    return _checked(out, t + dt)


def implicit_start(u, t: float, dt: float, nl: Nonlinearity, disc: Discretization) -> np.ndarray:
    """Two implicit-diffusion half steps covering ``[t, t + dt]``."""
    u = np.asarray(u, dtype=float)
    l1 = disc.operator(t + dt)
    half = 0.5 * dt
    u1 = _checked(l1.solve_shifted(u + half * _reaction(nl, disc, t, u), half), t + half)
    return _checked(l1.solve_shifted(u1 + half * _reaction(nl, disc, t + half, u1), half), t + dt)


def period_map(u0, nl: Nonlinearity, disc: Discretization, steps: int, record: bool = False,
               smoothing: bool = True):
    """Advance ``u0`` over one period with ``steps`` steps.

    Returns the final values, plus the ``(steps + 1, N)`` snapshot array when
    ``record`` is set.
    """
    if steps < 16:
        raise ValueError("need at least 16 steps per period")
    u = np.asarray(u0.values if isinstance(u0, Field) else u0, dtype=float).copy()
    period = disc.period
    times = np.linspace(0.0, period, steps + 1)
    snaps = np.empty((steps + 1, u.size)) if record else None
    if record:
        snaps[0] = u
    for j in range(steps):
        dt = times[j + 1] - times[j]
        if j == 0 and smoothing:
            u = implicit_start(u, times[j], dt, nl, disc)
        else:
            u = step(u, times[j], dt, nl, disc)
        if record:
            snaps[j + 1] = u
    return (u, snaps) if record else u


def _monotone(snapshots: np.ndarray, disc: Discretization) -> bool:
    ur = radial_derivative(snapshots.T, disc.grid).T[:, 1:-1]
    h = disc.grid.h
    return bool(np.min(np.abs(ur)) > 10 * h * h and (np.all(ur > 0) or np.all(ur < 0)))


def find_periodic_orbit(guess, nl: Nonlinearity, disc: Discretization, steps: int, tol: float = 1e-9,
                        max_iter: int = 60, newton: bool = True, seed: str = "") -> PeriodicOrbit:
    """Solve ``period_map(u0) = u0``.

    Newton steps use the monodromy of the linearisation along the current
    trajectory as Jacobian, with a short backtracking line search; when that
    fails to reduce the residual a damped Picard step ``u0 <- (u0 + P(u0)) / 2``
    is taken instead.
    """
    from .floquet import linearize, monodromy

    if not tol > 0:
        raise ValueError("tol must be positive")
    if not nl.compatible_with(disc.period):
        raise ValueError("nonlinearity period does not divide the profile period")
    u0 = np.asarray(guess.values if isinstance(guess, Field) else guess, dtype=float).copy()
    times = np.linspace(0.0, disc.period, steps + 1)

    def evaluate(v):
        vT, snaps = period_map(v, nl, disc, steps, record=True)
        return vT - v, snaps

    G, snaps = evaluate(u0)
    res = float(np.max(np.abs(G)))
    best = (res, u0, snaps)
    history = [res]
    for it in range(1, max_iter + 1):
        if res <= tol:
            break
        moved = False
        if newton:
            orbit_like = PeriodicOrbit(times, snaps, res, it, disc.grid.h)
            jac = monodromy(linearize(orbit_like, nl, disc, 0)) - np.eye(u0.size)
            delta = np.linalg.lstsq(jac, -G, rcond=1e-13)[0]
            for lam in (1.0, 0.5, 0.25, 0.125):
                cand = u0 + lam * delta
                try:
                    Gc, sc = evaluate(cand)
                except (ArithmeticError, SolveError):
                    continue
                rc = float(np.max(np.abs(Gc)))
                if rc < (1 - 1e-4 * lam) * res:
                    u0, G, snaps, res, moved = cand, Gc, sc, rc, True
                    break
        if not moved:
            u0 = u0 + 0.5 * G
            G, snaps = evaluate(u0)
            res = float(np.max(np.abs(G)))
        history.append(res)
        if res < best[0]:
            best = (res, u0, snaps)
        logger.debug("orbit iteration %d: residual %.3e", it, res)
    res, u0, snaps = best
    if res > tol:
        raise OrbitNotFoundError(res, u0, len(history) - 1)
    spread = np.ptp(snaps, axis=1).max()
    scale = max(1.0, float(np.abs(snaps).max()))
    return PeriodicOrbit(times, snaps, res, len(history) - 1, disc.grid.h,
                         radial_monotone=_monotone(snaps, disc),
                         spatially_constant=bool(spread <= 1e-8 * scale),
                         seed=seed, history=history)
