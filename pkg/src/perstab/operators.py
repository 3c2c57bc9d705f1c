"""Finite-volume Laplace-Beltrami stencils on the fixed radial grid.

For Fourier mode ``k`` the operator on ``rho in [0, 1]`` is::

    (1 / (psi q)) d/drho ((psi / q) du/drho) - k^2 / psi^2 u

discretised in flux form with face coefficients ``psi/q`` evaluated at the
cell midpoints. Node weights ``w_i`` (the discrete area element) make every
``k = 0`` stencil with Neumann or pole closure symmetric in the
``w``-weighted inner product and conservative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .geometry import Profile, ReparametrizedProfile, eval_metric, dilution_coefficient

_GAUSS = np.polynomial.legendre.leggauss(4)


class ClosureError(ValueError):
    pass


class SolveError(ArithmeticError):
    pass


@dataclass(frozen=True)
class RadialGrid:
    n: int
    pole_left: bool = False
    pole_right: bool = False

    def __post_init__(self):
        if self.n < 8:
            raise ValueError("RadialGrid needs at least 8 nodes")

    @property
    def h(self) -> float:
        return 1.0 / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n)

    @property
    def faces(self) -> np.ndarray:
        return (np.arange(self.n - 1) + 0.5) * self.h

    @classmethod
    def for_profile(cls, profile: Profile, n: int) -> "RadialGrid":
        return cls(n, profile.pole_left, profile.pole_right)


@dataclass(frozen=True)
class Field:
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("Field values must be a finite 1-D array")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class TridiagonalStencil:
    """Row ``i`` maps ``u`` to ``lower[i] u[i-1] + diag[i] u[i] + upper[i] u[i+1]``.

    ``fixed`` marks Dirichlet rows (value pinned to zero); their coefficients
    are ignored by :meth:`apply` and by the solvers.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    fixed: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.fixed is None:
            object.__setattr__(self, "fixed", np.zeros(self.diag.shape, dtype=bool))

    @property
    def n(self) -> int:
        return self.diag.size

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = self.diag.reshape((-1,) + (1,) * (u.ndim - 1)) * u
        out[1:] += self.lower[1:].reshape((-1,) + (1,) * (u.ndim - 1)) * u[:-1]
        out[:-1] += self.upper[:-1].reshape((-1,) + (1,) * (u.ndim - 1)) * u[1:]
        out[self.fixed] = 0.0
        return out

    def to_dense(self) -> np.ndarray:
        a = np.diag(self.diag) + np.diag(self.lower[1:], -1) + np.diag(self.upper[:-1], 1)
        a[self.fixed] = 0.0
        return a

    def __add__(self, other: "TridiagonalStencil") -> "TridiagonalStencil":
        return TridiagonalStencil(self.lower + other.lower, self.diag + other.diag,
                                  self.upper + other.upper, self.fixed | other.fixed)

    def add_diagonal(self, values) -> "TridiagonalStencil":
        return TridiagonalStencil(self.lower, self.diag + values, self.upper, self.fixed)

    def solve_shifted(self, rhs: np.ndarray, theta: float) -> np.ndarray:
        """Solve ``(I - theta * S) x = rhs``; fixed rows give ``x = 0``."""
        n = self.n
        ab = np.zeros((3, n))
        ab[0, 1:] = -theta * self.upper[:-1]
        ab[1] = 1.0 - theta * self.diag
        ab[2, :-1] = -theta * self.lower[1:]
        rhs = np.array(rhs, dtype=float)
        if self.fixed.any():
            idx = np.flatnonzero(self.fixed)
            ab[1, idx] = 1.0
            ab[0, idx[idx + 1 < n] + 1] = 0.0  # upper entry of row i lives at ab[0, i+1]
            ab[2, idx[idx > 0] - 1] = 0.0  # lower entry of row i lives at ab[2, i-1]
            rhs[idx] = 0.0
        try:
            x = solve_banded((1, 1), ab, rhs, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SolveError(f"tridiagonal solve failed: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise SolveError("tridiagonal solve produced non-finite values")
        return x


def _zero_stencil(n):
    return TridiagonalStencil(np.zeros(n), np.zeros(n), np.zeros(n))


def _require_fixed_domain(profile: Profile):
    if not isinstance(profile, ReparametrizedProfile):
        a, b = profile.a(0.0), profile.b(0.0)
        if abs(a) > 1e-14 or abs(b - 1.0) > 1e-14:
            raise ValueError("stencils need a profile on rho in [0, 1]; call reparametrize() first")


def _pole_volume(profile: Profile, grid: RadialGrid, t: float, side: str):
    """Area element integrated over the half cell next to a pole, and its time derivative."""
    x, w = _GAUSS
    h2 = 0.5 * grid.h
    s = 0.5 * h2 * (x + 1.0)
    rho = s if side == "left" else 1.0 - s
    m = eval_metric(profile, rho, np.full_like(rho, t))
    scale = 0.5 * h2
    return scale * np.dot(w, m.g), scale * np.dot(w, m.g_t)


def node_weights(profile: Profile, grid: RadialGrid, t: float) -> np.ndarray:
    """Discrete area element: ``psi q h`` inside, half cells at the ends, exact half-cell area at poles."""
    _require_fixed_domain(profile)
    m = eval_metric(profile, grid.nodes, np.full(grid.n, t))
    w = m.g * grid.h
    w[0] *= 0.5
    w[-1] *= 0.5
    if grid.pole_left:
        w[0] = _pole_volume(profile, grid, t, "left")[0]
    if grid.pole_right:
        w[-1] = _pole_volume(profile, grid, t, "right")[0]
    return w


def neumann_closure(stencil: TridiagonalStencil, side: str, face_coef: float, cell_weight: float,
                    h: float, pole: bool = False) -> TridiagonalStencil:
    """Zero-flux boundary row: ghost reflection ``u[-1] = u[1]`` in flux form.

    ``face_coef`` is ``psi/q`` at the adjacent face and ``cell_weight`` the
    node value of ``psi q``. Equivalent to a half control volume with no flux
    through the boundary face.
    """
    if pole:
        raise ClosureError("Neumann closure cannot be applied at a pole")
    lower, diag, upper = stencil.lower.copy(), stencil.diag.copy(), stencil.upper.copy()
    c = 2.0 * face_coef / (cell_weight * h * h)
    if side == "left":
        upper[0], diag[0], lower[0] = c, -c, 0.0
    elif side == "right":
        lower[-1], diag[-1], upper[-1] = c, -c, 0.0
    else:
        raise ClosureError(f"side must be 'left' or 'right', not {side!r}")
    return TridiagonalStencil(lower, diag, upper, stencil.fixed)


def pole_row(profile: Profile, grid: RadialGrid, t: float, side: str = "left") -> tuple[float, float]:
    """Axis row for mode 0: flux through the first face over the half-cell area.

    Returns ``(diag, offdiag)``. With ``psi ~ psi_r rho`` near the axis this
    reduces to ``2 (u1 - u0) (psi/q)_{1/2} / (h^2 * psi_r q h / 4)``.
    """
    face = grid.faces[0] if side == "left" else grid.faces[-1]
    m = eval_metric(profile, face, t)
    vol = _pole_volume(profile, grid, t, side)[0]
    c = float(m.psi / m.q) / (grid.h * vol)
    return -c, c


def assemble_laplace_beltrami(profile: Profile, grid: RadialGrid, t: float, k: int = 0) -> TridiagonalStencil:
    _require_fixed_domain(profile)
    if k < 0:
        raise ValueError("Fourier mode must be non-negative")
    n, h = grid.n, grid.h
    tn = np.full(n, float(t))
    node = eval_metric(profile, grid.nodes, tn)
    face = eval_metric(profile, grid.faces, tn[:-1])
    c = face.psi / face.q
    weight = node.g

    lower, diag, upper = np.zeros(n), np.zeros(n), np.zeros(n)
    interior = slice(1, n - 1)
    denom = weight[interior] * h * h
    lower[interior] = c[:-1] / denom
    upper[interior] = c[1:] / denom
    diag[interior] = -(lower[interior] + upper[interior])
    stencil = TridiagonalStencil(lower, diag, upper)

    fixed = np.zeros(n, dtype=bool)
    for side, is_pole, idx, fidx in (("left", grid.pole_left, 0, 0), ("right", grid.pole_right, -1, -1)):
        if not is_pole:
            stencil = neumann_closure(stencil, side, c[fidx], weight[idx], h)
        elif k == 0:
            d, off = pole_row(profile, grid, t, side)
            stencil.diag[idx] = d
            if side == "left":
                stencil.upper[0] = off
            else:
                stencil.lower[-1] = off
        else:
            fixed[idx] = True

    if k > 0:
        with np.errstate(divide="ignore"):
            potential = np.where(fixed, 0.0, k * k / np.where(fixed, 1.0, node.psi) ** 2)
        stencil = stencil.add_diagonal(-potential)
    return TridiagonalStencil(stencil.lower, stencil.diag, stencil.upper, fixed)


def gradient_stencil(grid: RadialGrid, coef) -> TridiagonalStencil:
    """Centered ``coef * d/drho``; boundary and pole rows vanish (``u_rho = 0`` there)."""
    n, h = grid.n, grid.h
    coef = np.broadcast_to(np.asarray(coef, dtype=float), (n,))
    lower, upper = np.zeros(n), np.zeros(n)
    lower[1:-1] = -coef[1:-1] / (2 * h)
    upper[1:-1] = coef[1:-1] / (2 * h)
    return TridiagonalStencil(lower, np.zeros(n), upper)


def radial_derivative(u: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Centered differences along the first axis; zero at the end nodes."""
    u = np.asarray(u, dtype=float)
    d = np.zeros_like(u)
    d[1:-1] = (u[2:] - u[:-2]) / (2 * grid.h)
    return d


def dilution_rates(profile: Profile, grid: RadialGrid, t: float) -> np.ndarray:
    """Nodal ``(1/g) dg/dt``; pole nodes use the half-cell area so discrete mass is exact."""
    d = dilution_coefficient(profile, grid.nodes, np.full(grid.n, float(t)))
    for side, is_pole, idx in (("left", grid.pole_left, 0), ("right", grid.pole_right, -1)):
        if is_pole:
            vol, vol_t = _pole_volume(profile, grid, t, side)
            d[idx] = vol_t / vol
    return d


class Discretization:
    """Profile, grid, mode and model switches shared by a run; caches stencils per time."""

    def __init__(self, profile: Profile, n: int, k: int = 0, conservation: bool = False):
        from .geometry import reparametrize

        self.profile = reparametrize(profile)
        self.grid = RadialGrid.for_profile(self.profile, n)
        self.k = k
        self.conservation = conservation
        self.period = self.profile.period
        self._cache: dict[float, TridiagonalStencil] = {}

    def with_mode(self, k: int) -> "Discretization":
        other = Discretization.__new__(Discretization)
        other.__dict__.update(self.__dict__)
        other.k = k
        other._cache = {}
        return other

    def operator(self, t: float) -> TridiagonalStencil:
        """Diffusion part at time ``t`` (including the dilution sink when enabled)."""
        key = float(t)
        st = self._cache.get(key)
        if st is None:
            st = assemble_laplace_beltrami(self.profile, self.grid, key, self.k)
            if self.conservation:
                st = st.add_diagonal(-dilution_rates(self.profile, self.grid, key))
            if len(self._cache) > 4096:
                self._cache.clear()
            self._cache[key] = st
        return st

    def weights(self, t: float) -> np.ndarray:
        return node_weights(self.profile, self.grid, t)
