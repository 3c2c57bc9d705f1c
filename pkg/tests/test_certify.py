import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from perstab.certify import (
    bochner_check,
    boundary_convexity,
    certify_orbit,
    christoffel_symbols,
    curvature_growth_condition,
    dilation_stability_condition,
    h_tensor,
    radial_instability_condition,
    radial_instability_condition_identity,
    reconcile,
    second_fundamental_form_christoffel,
    verify_h_identity,
)
from perstab.floquet import FloquetSpectrum
from perstab.geometry import deformed_cone, dilated_sphere, dilated_static_profile, spherical_cap
from perstab.operators import Discretization

RHO, RHO_DOT = "1 + 0.1*sin(2*pi*t)", lambda t: 0.2 * np.pi * np.cos(2 * np.pi * t)


def _rho(t):
    return 1 + 0.1 * np.sin(2 * np.pi * t)


def _samples(a, b, n=100, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(a, b, n), rng.uniform(0, 1, n)


def test_uniform_sphere_dilation_formula():
    p = dilated_sphere(rho1=RHO, rho2=RHO, a="0.2", b="2.9")
    r, t = _samples(0.2, 2.9)
    rho, rd = _rho(t), RHO_DOT(t)
    expected = -(1 + rho * rd * np.sin(r) ** 2) / (rho**2 * np.sin(r) ** 2)
    assert np.max(np.abs(radial_instability_condition(p, r, t) - expected)) < 1e-8
    assert np.max(np.abs(radial_instability_condition_identity(p, r, t) - expected)) < 1e-8


def test_cone_formula():
    r2, r2_dot = (lambda t: 1.5 + 0.2 * np.cos(2 * np.pi * t)), (lambda t: -0.4 * np.pi * np.sin(2 * np.pi * t))
    p = deformed_cone(rho1=RHO, rho2="1.5 + 0.2*cos(2*pi*t)")
    r, t = _samples(0.5, 1.5)
    s = _rho(t) ** 2 + r2(t) ** 2
    expected = -1 / (s * r**2) - (RHO_DOT(t) * _rho(t) + r2_dot(t) * r2(t)) / s
    assert np.max(np.abs(radial_instability_condition(p, r, t) - expected)) < 1e-8


def test_gradient_term_enters_with_q_r_over_q():
    p = dilated_sphere(rho1=RHO, rho2="1 + 0.2*cos(2*pi*t)", a="0.3", b="2.5")
    r, t = _samples(0.3, 2.5)
    diff = radial_instability_condition(p, r, t, 0.7) - radial_instability_condition(p, r, t)
    h = 1e-6
    from perstab.geometry import eval_metric

    q = eval_metric(p, r, t).q
    q_r = (eval_metric(p, r + h, t).q - eval_metric(p, r - h, t).q) / (2 * h)
    assert np.allclose(diff, 0.7 * q_r / q, atol=1e-8)


def test_curvature_growth_on_dilated_sphere():
    p = dilated_sphere(rho1=RHO, rho2=RHO, a="0.2", b="2.9")
    r, t = _samples(0.2, 2.9)
    expected = -RHO_DOT(t) / _rho(t) - 1 / _rho(t) ** 2
    assert np.allclose(curvature_growth_condition(p, r, t), expected, atol=1e-10)


def test_h_tensor_identity():
    assert verify_h_identity() < 1e-6
    g = np.diag([2.0, 3.0])
    g_t = np.diag([0.4, -0.6])
    assert np.allclose(h_tensor(g, g_t), -0.5 * g_t)


def test_christoffel_on_polar_plane():
    # g = diag(1, r^2): Gamma^r_thth = -r, Gamma^th_rth = 1/r
    r = 2.0
    g = np.diag([1.0, r * r])
    dg = np.zeros((2, 2, 2))
    dg[0] = np.diag([0.0, 2 * r])
    gamma = christoffel_symbols(g, dg)
    assert gamma[0, 1, 1] == pytest.approx(-r)
    assert gamma[1, 0, 1] == pytest.approx(1 / r) and gamma[1, 1, 0] == pytest.approx(1 / r)


@pytest.mark.parametrize(
    "profile",
    [
        spherical_cap(R0=RHO, b="1.2"),
        spherical_cap(R0=RHO, b="2.0"),
        deformed_cone(rho1=RHO, rho2="1.5"),
        dilated_sphere(rho1=RHO, rho2="1 + 0.2*cos(2*pi*t)", a="0.3", b="2.5"),
        dilated_static_profile("cosh(r)", "-0.8", "0.8", zeta=RHO),
    ],
)
def test_boundary_convexity_matches_christoffel(profile):
    for t in (0.0, 0.3, 0.7):
        closed = boundary_convexity(profile, t)
        for side in ("left", "right"):
            if closed[side] is None:
                assert profile.poles[0 if side == "left" else 1]
                continue
            assert closed[side] == pytest.approx(second_fundamental_form_christoffel(profile, t, side), rel=1e-12)


def test_cap_convexity_changes_past_equator():
    assert boundary_convexity(spherical_cap(b="1.2"), 0.0)["right"] < 0
    assert boundary_convexity(spherical_cap(b="2.0"), 0.0)["right"] > 0
    assert boundary_convexity(spherical_cap(b="1.2"), 0.0)["left"] is None


def test_dilation_stability_on_sphere():
    p = dilated_static_profile("sin(r)", "0.2", "2.9", zeta=RHO, chi="cos(r)")
    r, t = _samples(0.2, 2.9)
    expected = -1 / (_rho(t) ** 2 * np.sin(r) ** 2) - RHO_DOT(t) / _rho(t)
    assert np.allclose(dilation_stability_condition(p, r, t), expected, atol=1e-10)
    with pytest.raises(ValueError, match="not a dilated"):
        dilation_stability_condition(spherical_cap(), r, t)
    with pytest.raises(ValueError, match="arclength"):
        dilation_stability_condition(dilated_static_profile("2*sin(r)", "0.2", "1.2", chi="cos(r)"), 0.5, 0.0)


def test_certify_unstable_fixture(tmp_path):
    from helpers import manufactured_orbit

    _, nl, disc, orbit = manufactured_orbit("sphere")
    rep = certify_orbit(disc, orbit, nl)
    assert rep.identity_residual < 1e-8
    sec = rep.sections["radial_instability"]
    assert sec.verdict == "instability certified" and sec.max < 0
    assert rep.sections["dilation_stability"].verdict == "not certified"
    assert rep.boundary == {"left": None, "right": None}
    rep.to_csv(tmp_path / "cert.csv")
    assert (tmp_path / "cert.csv").read_text().startswith("rho,t,radial_condition")
    s = rep.summary()
    assert s["extrema"]["radial_condition"][0] < 0


def test_certify_stable_fixture():
    from helpers import manufactured_orbit

    _, nl, disc, orbit = manufactured_orbit("band")
    rep = certify_orbit(disc, orbit, nl)
    assert rep.sections["dilation_stability"].verdict == "stability certified"
    assert rep.sections["radial_instability"].verdict == "not certified"


def _spectrum(lam, mode=0):
    return FloquetSpectrum(mode, float(np.exp(-lam)), lam, 0.1, 0.0, 1.0, np.zeros((2, 2)))


def test_reconcile_flags_contradictions():
    from helpers import manufactured_orbit

    _, nl, disc, orbit = manufactured_orbit("sphere")
    rep = certify_orbit(disc, orbit, nl)
    ok = reconcile(rep, [_spectrum(-2.0)], 1e-2)
    assert ok.verdict == "unstable" and not ok.contradictions
    bad = reconcile(rep, [_spectrum(0.5)], 1e-2)
    assert bad.verdict == "contradiction" and "radial_instability" in bad.contradictions[0]
    assert reconcile(None, [_spectrum(0.0)], 1e-2).verdict == "marginal"


def test_bochner_second_order():
    disc_levels = [Discretization(dilated_static_profile("cosh(r)", "-0.8", "0.8"), n) for n in (101, 201, 401)]
    errs, viol = [], []
    for disc in disc_levels:
        x = disc.grid.nodes
        u = np.cos(np.pi * x) + 0.3 * np.cos(2 * np.pi * x)
        chk = bochner_check(disc, u)
        errs.append(np.max(np.abs(chk.residual)))
        viol.append(max(0.0, np.max(chk.violation)))
    slopes = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(slopes > 1.8)
    assert viol[-1] <= viol[0]


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 1.5), st.floats(0.5, 2.0), st.floats(0, 1))
def test_boundary_convexity_property(rho1, rho2, t):
    p = deformed_cone(rho1=str(rho1), rho2=str(rho2))
    for side in ("left", "right"):
        assert boundary_convexity(p, t)[side] == pytest.approx(second_fundamental_form_christoffel(p, t, side))
