"""Profiles given as sampled tables on a rectangular ``(r, t)`` lattice.

File layout (plain text, ``#`` comments allowed)::

    nr nt period
    r t psi chi        # nr * nt rows, r-major, t fastest

The ``t`` samples must be uniform on ``[0, period)``; the endpoint
``t = period`` is implied by periodicity. The ``r`` samples must be uniform.
Derivatives come from fourth-order finite differences (one-sided at the
``r`` ends, periodic in ``t``) and are interpolated with bicubic splines.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .geometry import GeometryError, Profile, ProfileJet


def _d1_r(f, h):
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    w0 = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    w1 = np.array([-3, -10, 18, -6, 1]) / (12 * h)
    d[0] = np.tensordot(w0, f[0:5], axes=(0, 0))
    d[1] = np.tensordot(w1, f[0:5], axes=(0, 0))
    d[-1] = -np.tensordot(w0, f[-1:-6:-1], axes=(0, 0))
    d[-2] = -np.tensordot(w1, f[-1:-6:-1], axes=(0, 0))
    return d


def _d2_r(f, h):
    d = np.empty_like(f)
    d[2:-2] = (-f[:-4] + 16 * f[1:-3] - 30 * f[2:-2] + 16 * f[3:-1] - f[4:]) / (12 * h**2)
    w0 = np.array([45, -154, 214, -156, 61, -10]) / (12 * h**2)
    w1 = np.array([10, -15, -4, 14, -6, 1]) / (12 * h**2)
    d[0] = np.tensordot(w0, f[0:6], axes=(0, 0))
    d[1] = np.tensordot(w1, f[0:6], axes=(0, 0))
    d[-1] = np.tensordot(w0, f[-1:-7:-1], axes=(0, 0))
    d[-2] = np.tensordot(w1, f[-1:-7:-1], axes=(0, 0))
    return d


def _d1_t(f, h):
    return (np.roll(f, 2, 1) - 8 * np.roll(f, 1, 1) + 8 * np.roll(f, -1, 1) - np.roll(f, -2, 1)) / (12 * h)


class SampledProfile(Profile):
    """Profile interpolated from lattice samples of ``psi`` and ``chi``."""

    def __init__(self, r, t, psi, chi, period, name="table"):
        r, t = np.asarray(r, float), np.asarray(t, float)
        psi, chi = np.asarray(psi, float), np.asarray(chi, float)
        if psi.shape != (r.size, t.size) or chi.shape != psi.shape:
            raise GeometryError("sample arrays must have shape (nr, nt)")
        if r.size < 6 or t.size < 5:
            raise GeometryError("need at least 6 r samples and 5 t samples")
        hr, ht = np.diff(r), np.diff(t)
        if np.ptp(hr) > 1e-9 * hr[0] or np.ptp(ht) > 1e-9 * ht[0] or hr[0] <= 0 or ht[0] <= 0:
            raise GeometryError("table lattice must be uniform and increasing")
        if abs(t[0]) > 1e-12 or abs(t[-1] + ht[0] - period) > 1e-9 * period:
            raise GeometryError("t samples must cover [0, period) uniformly")
        self.name = name
        self.period = float(period)
        self._r0, self._r1 = r[0], r[-1]
        h, k = hr[0], ht[0]
        fields = {}
        for key, f in (("psi", psi), ("chi", chi)):
            f_r = _d1_r(f, h)
            fields[key] = f
            fields[key + "_r"] = f_r
            fields[key + "_rr"] = _d2_r(f, h)
            fields[key + "_t"] = _d1_t(f, k)
            fields[key + "_rt"] = _d1_t(f_r, k)
        # wrap a few samples on each side so the t-splines see periodic data
        tt = np.concatenate([t[-3:] - period, t, t[:4] + period])
        self._splines = {
            key: RectBivariateSpline(r, tt, np.concatenate([v[:, -3:], v, v[:, :4]], axis=1), kx=3, ky=3)
            for key, v in fields.items()
        }

    def a(self, t):
        return np.full(np.shape(t), self._r0)

    def b(self, t):
        return np.full(np.shape(t), self._r1)

    def jet(self, r, t):
        r, t = np.broadcast_arrays(np.asarray(r, float), np.asarray(t, float))
        tm = np.mod(t, self.period)
        vals = {k: s.ev(r, tm) for k, s in self._splines.items()}
        return ProfileJet(**{k: vals[k] for k in ProfileJet.__dataclass_fields__})


def load_profile_table(path) -> SampledProfile:
    path = Path(path)
    lines = [ln.split("#", 1)[0].strip() for ln in path.read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise GeometryError(f"{path}: empty profile table")
    head = lines[0].split()
    if len(head) != 3:
        raise GeometryError(f"{path}: header must be 'nr nt period'")
    nr, nt, period = int(head[0]), int(head[1]), float(head[2])
    data = np.loadtxt(lines[1:], ndmin=2)
    if data.shape != (nr * nt, 4):
        raise GeometryError(f"{path}: expected {nr * nt} rows of 4 columns, got {data.shape}")
    r = data[::nt, 0]
    t = data[:nt, 1]
    psi = data[:, 2].reshape(nr, nt)
    chi = data[:, 3].reshape(nr, nt)
    return SampledProfile(r, t, psi, chi, period, name=path.stem)


def write_profile_table(path, profile: Profile, nr: int, nt: int) -> None:
    """Sample an analytic profile with constant endpoints onto a table file."""
    a, b = float(profile.a(0.0)), float(profile.b(0.0))
    r = np.linspace(a, b, nr)
    t = np.arange(nt) * profile.period / nt
    R, T = np.meshgrid(r, t, indexing="ij")
    j = profile.jet(R, T)
    rows = np.column_stack([R.ravel(), T.ravel(), j.psi.ravel(), j.chi.ravel()])
    with open(path, "w") as fh:
        fh.write(f"{nr} {nt} {profile.period!r}\n")
        np.savetxt(fh, rows, fmt="%.17g")
