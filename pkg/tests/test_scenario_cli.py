import json
from pathlib import Path

import pytest

from perstab.cli import main
from perstab.pipeline import CoherenceError, check_coherence, run
from perstab.scenario import ConfigError, parse_scenario, parse_scenario_text

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

SMALL = """
[profile]
family = "spherical_cap"
[profile.parameters]
R0 = "1 + 0.1*sin(2*pi*t)"
b = "1.2"

[nonlinearity]
kind = "expression"
expression = "{f}"

[grid]
N = 21
M = 32
K = 1

[solver]
seeds = [{seed}]
max_iter = {max_iter}
"""


def _write(tmp_path, text, name="case.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def _small(f="u*(1 + 0.5*sin(2*pi*t) - u)", seed="0.5", max_iter=50):
    return SMALL.format(f=f, seed=seed, max_iter=max_iter)


def _report(out):
    return json.loads((out / "report.json").read_text())


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_scenarios_parse(path):
    sc = parse_scenario(path)
    assert sc.N >= 8 and sc.M >= 16 and len(sc.digest) == 64


@pytest.mark.parametrize(
    "edit, path",
    [
        (lambda s: s.replace("N = 21", "Nx = 21"), "grid.Nx"),
        (lambda s: s.replace("[grid]", "[gird]"), "gird"),
        (lambda s: s.replace("N = 21", "N = 4"), "grid.N"),
        (lambda s: s.replace("M = 32", "M = 8"), "grid.M"),
        (lambda s: s.replace('b = "1.2"', 'b = "1.2"\nbogus = "1"'), "profile.parameters.bogus"),
        (lambda s: s.replace("seeds = [0.5]", "seeds = []"), "solver.seeds"),
        (lambda s: s.replace('kind = "expression"', 'kind = "cubic"'), "nonlinearity.kind"),
        (lambda s: s.replace("spherical_cap", "torus"), "profile.family"),
        (lambda s: s.replace('seeds = [0.5]', 'seeds = ["exact"]'), "solver.seeds[0]"),
    ],
)
def test_config_errors_name_the_field(edit, path):
    with pytest.raises(ConfigError) as info:
        parse_scenario_text(edit(_small()))
    assert info.value.path == path


def test_fisher_alpha_out_of_range():
    text = _small().replace('kind = "expression"\nexpression = "u*(1 + 0.5*sin(2*pi*t) - u)"',
                            'kind = "fisher"\nalpha = 1.5\nm = "1"')
    with pytest.raises(ConfigError) as info:
        parse_scenario_text(text)
    assert info.value.path == "nonlinearity.alpha"


def test_missing_section_and_expression_column():
    text = _small()
    with pytest.raises(ConfigError) as info:
        parse_scenario_text(text[: text.index("[grid]")])
    assert info.value.path == "grid"
    with pytest.raises(ConfigError) as info:
        parse_scenario_text(_small(f="u*(1 + foo)"))
    assert info.value.path == "nonlinearity.expression" and info.value.column == 8


def test_toml_syntax_error_has_position():
    text = _small().replace("N = 21", "N = = 21")
    with pytest.raises(ConfigError) as info:
        parse_scenario_text(text)
    line = next(i for i, s in enumerate(text.splitlines(), 1) if "N = = 21" in s)
    assert info.value.line == line and info.value.column is not None


def test_cli_config_error_exit_and_report(tmp_path, capsys):
    cfg = _write(tmp_path, _small().replace("N = 21", "N = 4"))
    assert main(["floquet", "--config", str(cfg)]) == 4
    assert "config error" in capsys.readouterr().err
    assert not (tmp_path / "case_out").exists()
    out = tmp_path / "out"
    assert main(["floquet", "--config", str(cfg), "--out", str(out), "--quiet"]) == 4
    rep = _report(out)
    assert rep["exit_code"] == 4 and rep["error"]["path"] == "grid.N"
    assert main(["floquet", "--config", str(_write(tmp_path, _small(), "ok.toml")), "--modes", "-1"]) == 4
    assert main(["floquet", "--config", str(tmp_path / "missing.toml"), "--quiet"]) == 4


def test_cli_numerical_failure_exits_3(tmp_path):
    cfg = _write(tmp_path, _small(f="u^3", seed="3.0"))
    out = tmp_path / "out"
    assert main(["floquet", "--config", str(cfg), "--out", str(out), "--quiet"]) == 3
    rep = _report(out)
    assert rep["exit_code"] == 3 and rep["error"]["type"] == "OrbitNotFoundError"
    assert rep["seeds"][0]["status"] == "failed"


def test_cli_floquet_default_out_and_modes(tmp_path, capsys):
    cfg = _write(tmp_path, _small())
    code = main(["floquet", "--config", str(cfg), "--modes", "2"])
    assert code in (0, 2)
    assert "floquet" in capsys.readouterr().out
    rep = _report(tmp_path / "case_out")
    assert [s["mode"] for s in rep["spectra"]] == [0, 1, 2]
    # mode 2 sits below the Crank-Nicolson oscillation floor on this coarse grid
    low = rep["spectra"][2]
    assert not low["resolved"] and low["lambda1_lower_bound"] > rep["spectra"][1]["lambda1"]
    assert rep["verdict"]["label"] == "stable"
    assert rep["exit_code"] == code and rep["schema_version"] == 1
    for key in ("scenario", "discretization", "orbit", "seeds", "epsilon", "warnings", "timings"):
        assert key in rep
    csv = rep["orbit"]["csv_path"]
    assert not Path(csv).is_absolute() and (tmp_path / "case_out" / csv).exists()
    check_coherence(rep)


def test_reports_are_deterministic(tmp_path):
    cfg = _write(tmp_path, _small())
    reps = []
    for name in ("a", "b"):
        main(["analyze", "--config", str(cfg), "--out", str(tmp_path / name), "--quiet"])
        rep = _report(tmp_path / name)
        rep.pop("timings")
        reps.append(rep)
    assert reps[0] == reps[1]


def test_coherence_check_catches_tampering(tmp_path):
    sc = parse_scenario(_write(tmp_path, _small()))
    code, rep = run(sc, "floquet", tmp_path / "out", None)
    check_coherence(rep)
    rep["verdict"]["label"] = "unstable"
    with pytest.raises(CoherenceError):
        check_coherence(rep)


@pytest.mark.parametrize("command", ["evolve", "certify", "convergence"])
def test_other_commands_run(tmp_path, command):
    cfg = _write(tmp_path, _small())
    out = tmp_path / command
    code = main([command, "--config", str(cfg), "--out", str(out), "--quiet"])
    rep = _report(out)
    assert rep["command"] == command and rep["exit_code"] == code and code in (0, 2)
