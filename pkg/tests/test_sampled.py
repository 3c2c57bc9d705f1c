import numpy as np
import pytest

from perstab.geometry import GeometryError, dilated_sphere, radial_expression, ricci
from perstab.sampled import SampledProfile, load_profile_table, write_profile_table

ANALYTIC = dilated_sphere(rho1="1 + 0.1*sin(2*pi*t)", rho2="1 + 0.1*cos(2*pi*t)", a="0.3", b="1.4")


def _errors(tmp_path, nr, nt):
    path = tmp_path / f"table_{nr}.txt"
    write_profile_table(path, ANALYTIC, nr, nt)
    prof = load_profile_table(path)
    rng = np.random.default_rng(1)
    r, t = rng.uniform(0.35, 1.35, 50), rng.uniform(0, 1, 50)
    return (np.max(np.abs(ricci(prof, r, t) - ricci(ANALYTIC, r, t))),
            np.max(np.abs(radial_expression(prof, r, t) - radial_expression(ANALYTIC, r, t))))


def test_table_round_trip_converges(tmp_path):
    coarse = _errors(tmp_path, 41, 32)
    fine = _errors(tmp_path, 81, 64)
    for c, f in zip(coarse, fine):
        assert f < 1e-3
        assert c / f > 3.5  # at least second order


def test_table_is_periodic(tmp_path):
    path = tmp_path / "p.txt"
    write_profile_table(path, ANALYTIC, 21, 16)
    prof = load_profile_table(path)
    assert prof.period == 1.0
    r = np.linspace(0.3, 1.4, 9)
    assert np.allclose(ricci(prof, r, 0.25), ricci(prof, r, 1.25), atol=1e-12)


def test_bad_tables(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("3 2 1.0\n0 0 1 0\n")
    with pytest.raises(GeometryError, match="expected 6 rows"):
        load_profile_table(path)
    path.write_text("")
    with pytest.raises(GeometryError, match="empty"):
        load_profile_table(path)
    r = np.linspace(0, 1, 8)
    t = np.linspace(0, 1, 8)  # includes t = period
    with pytest.raises(GeometryError, match="cover"):
        SampledProfile(r, t, np.ones((8, 8)), np.ones((8, 8)), 1.0)
    with pytest.raises(GeometryError, match="uniform"):
        SampledProfile(r**2, t[:-1], np.ones((8, 7)), np.ones((8, 7)), 8 / 7)
