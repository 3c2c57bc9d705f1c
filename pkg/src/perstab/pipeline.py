"""Run a scenario: orbit, spectra, certificates, reconciliation and the JSON report.

Exit codes: 0 completed, 2 hypotheses of the radial instability certificate
not met (report still written), 3 numerical failure or an incoherent report,
4 configuration error.
"""

from __future__ import annotations

import json
import logging
import math
import time
from pathlib import Path

import numpy as np

from .certify import certify_orbit, reconcile
from .evolve import BlowUpError, OrbitNotFoundError, PeriodicOrbit, find_periodic_orbit
from .floquet import (
    FloquetError,
    PerronViolation,
    classify,
    coefficient_scale,
    floquet_spectrum,
    linearize,
    monodromy,
    scheme_epsilon,
    start_independence,
    subsolution_check,
)
from .geometry import GeometryError, boundary_assumption_warnings, eval_metric
from .operators import Discretization, SolveError, radial_derivative
from .scenario import ConfigError, Scenario

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
COMMANDS = ("evolve", "floquet", "certify", "analyze", "convergence")
EXIT_OK, EXIT_HYPOTHESES, EXIT_NUMERICAL, EXIT_CONFIG = 0, 2, 3, 4
# a mode may be reported by its spectral-radius bound only when that bound is
# this far below the mode-0 multiplier, so it cannot decide the verdict
UNRESOLVED_RATIO = 1e-3
NUMERICAL_ERRORS = (OrbitNotFoundError, BlowUpError, SolveError, FloquetError, GeometryError, ArithmeticError)


class CoherenceError(RuntimeError):
    pass


def to_jsonable(obj):
    """Plain JSON values; non-finite floats become ``null``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def dump_report(report: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(to_jsonable(report), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def _orbit_summary(orbit: PeriodicOrbit) -> dict:
    return {
        "residual": orbit.residual,
        "iterations": orbit.iterations,
        "radial_monotone": orbit.radial_monotone,
        "spatially_constant": orbit.spatially_constant,
        "seed": orbit.seed,
        "history": orbit.history,
        "min": float(orbit.snapshots.min()),
        "max": float(orbit.snapshots.max()),
        "steps": orbit.steps,
    }


class Run:
    """State of one scenario run; each stage fills part of ``report``."""

    def __init__(self, scenario: Scenario, command: str, out_dir: Path, modes: int | None = None):
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}", "command")
        self.sc = scenario
        self.command = command
        self.out = Path(out_dir)
        self.csv = self.out / scenario.csv_dir
        self.K = scenario.K if modes is None else modes
        if self.K < 0:
            raise ConfigError("must be >= 0", "modes")
        self.timings: dict = {}
        self.report: dict = {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "scenario": {"name": scenario.source.name, "sha256": scenario.digest, "config": scenario.raw},
            "warnings": [],
            "error": None,
        }

    # -- stages ---------------------------------------------------------

    def _timed(self, name, fn, *args):
        t0 = time.perf_counter()
        try:
            return fn(*args)
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0

    def discretize(self, N=None, M=None) -> Discretization:
        return Discretization(self.sc.profile, N or self.sc.N, conservation=self.sc.conservation)

    def orbit(self, disc: Discretization, M: int, record: bool = True) -> PeriodicOrbit:
        attempts, found = [], None
        for seed in self.sc.seeds:
            guess = self.sc.seed_values(seed, disc.grid.nodes)
            try:
                orb = find_periodic_orbit(guess, self.sc.nonlinearity, disc, M, tol=self.sc.tol,
                                          max_iter=self.sc.max_iter, newton=self.sc.newton, seed=str(seed))
            except (OrbitNotFoundError, BlowUpError, SolveError) as exc:
                attempts.append({"seed": str(seed), "status": "failed", "message": str(exc),
                                 "residual": getattr(exc, "residual", None)})
                continue
            attempts.append({"seed": str(seed), "status": "converged", "residual": orb.residual,
                             "iterations": orb.iterations})
            if found is None:
                found = orb
        if record:
            self.report["seeds"] = attempts
        if found is None:
            best = [a["residual"] for a in attempts if a.get("residual") is not None]
            raise OrbitNotFoundError(min(best, default=np.inf), None, self.sc.max_iter)
        return found

    def spectra(self, disc: Discretization, orbit: PeriodicOrbit, write_csv: bool = True):
        spectra, systems, unresolved = [], {}, None
        for k in range(self.K + 1):
            sys = linearize(orbit, self.sc.nonlinearity, disc, k)
            try:
                sp = floquet_spectrum(sys)
            except PerronViolation:
                # The principal multiplier of a high mode can sink below the
                # oscillatory Crank-Nicolson multipliers. Every multiplier is
                # bounded by the spectral radius, which still bounds lambda1(k).
                radius = float(np.max(np.abs(np.linalg.eigvals(monodromy(sys)))))
                if k == 0 or not radius < UNRESOLVED_RATIO * spectra[0].mu1:
                    raise
                unresolved = {"mode": k, "resolved": False,
                              "lambda1_lower_bound": -np.log(max(radius, 1e-300)) / sys.period,
                              "skipped_modes": list(range(k + 1, self.K + 1))}
                self.report["warnings"].append(
                    f"mode {k}: principal multiplier below the scheme's oscillatory floor; "
                    f"reporting lambda1 >= {unresolved['lambda1_lower_bound']:.4g} and skipping higher modes")
                break
            systems[k] = sys
            spectra.append(sp)
        entries = []
        for sp in spectra:
            entry = sp.summary()
            entry["resolved"] = True
            if write_csv:
                name = f"eigfun_k{sp.mode}.csv"
                sp.eigenfunction_csv(self.csv / name, disc.grid.nodes, orbit.times)
                entry["eigfun_csv_path"] = str(Path(self.sc.csv_dir) / name)
            entries.append(entry)
        if unresolved is not None:
            entries.append(unresolved)
        eps = scheme_epsilon(disc, orbit.steps, coefficient_scale(systems[0], disc))
        verdict = classify(spectra, eps)
        self.report["spectra"] = entries
        self.report["epsilon"] = eps
        self.report["verdict"] = {"label": verdict.label, "lambda_star": verdict.lambda_star,
                                  "mode": verdict.mode, "epsilon": verdict.epsilon}
        return spectra, systems, verdict

    def certificates(self, disc, orbit):
        cert = certify_orbit(disc, orbit, self.sc.nonlinearity)
        cert.to_csv(self.csv / "certificates.csv")
        summary = cert.summary()
        summary["csv_path"] = str(Path(self.sc.csv_dir) / "certificates.csv")
        self.report["certificates"] = summary
        self.report["warnings"].extend(cert.warnings)
        return cert

    def sign_tests(self, disc, orbit, system, spectrum, eps):
        out = []
        if not orbit.radial_monotone:
            self.report["sign_tests"] = [{"skipped": "u_rho is not of one sign (radial_monotone false)"}]
            return
        u_rho = radial_derivative(orbit.snapshots.T, disc.grid).T
        R_, T_ = np.meshgrid(disc.grid.nodes, orbit.times)
        q = eval_metric(disc.profile, R_, T_).q
        w = np.abs(u_rho) / q
        rep = subsolution_check(system, w, "sub", lambda1=spectrum.lambda1, epsilon=eps)
        out.append({"witness": "|u_rho|/q", **rep.summary()})
        ms = self.sc.manufactured
        if ms is not None:
            w = np.abs(u_rho) / ms.zeta(orbit.times)[:, None]
            rep = subsolution_check(system, w, "super", lambda1=spectrum.lambda1, epsilon=eps)
            out.append({"witness": "u_rho/zeta", **rep.summary()})
        self.report["sign_tests"] = out

    # -- commands -------------------------------------------------------

    def execute(self) -> int:
        self.out.mkdir(parents=True, exist_ok=True)
        self.csv.mkdir(parents=True, exist_ok=True)
        self.report["warnings"].extend(boundary_assumption_warnings(self.sc.profile))
        if self.command == "convergence":
            return self._convergence()
        disc = self.discretize()
        M = self.sc.M
        self.report["discretization"] = {"N": disc.grid.n, "M": M, "K": self.K, "h": disc.grid.h,
                                         "dt": disc.period / M, "conservation": self.sc.conservation,
                                         "pole_left": disc.grid.pole_left, "pole_right": disc.grid.pole_right}
        orbit = self._timed("orbit", self.orbit, disc, M)
        orbit.to_csv(self.csv / "orbit.csv", disc.grid.nodes)
        self.report["orbit"] = {**_orbit_summary(orbit), "csv_path": str(Path(self.sc.csv_dir) / "orbit.csv")}
        if orbit.spatially_constant:
            self.report["warnings"].append("the periodic orbit found is spatially constant")
        if self.command == "evolve":
            return EXIT_OK

        spectra = systems = verdict = None
        if self.command in ("floquet", "analyze"):
            spectra, systems, verdict = self._timed("spectra", self.spectra, disc, orbit)
            self.report["start_independence"] = self._timed("start_independence", start_independence, systems[0])
            if self.command == "floquet":
                return EXIT_OK

        cert = self._timed("certificates", self.certificates, disc, orbit)
        if self.command == "analyze":
            self._timed("sign_tests", self.sign_tests, disc, orbit, systems[0], spectra[0], self.report["epsilon"])
            rec = reconcile(cert, spectra, self.report["epsilon"], verdict.label)
            self.report["reconciliation"] = rec.summary()
            check_coherence(self.report)
            if rec.contradictions:
                self.report["error"] = {"type": "Contradiction", "message": "; ".join(rec.contradictions)}
                return EXIT_NUMERICAL
        section = cert.sections["radial_instability"]
        return EXIT_HYPOTHESES if section.reasons else EXIT_OK

    def _convergence(self) -> int:
        N0, M0 = self.sc.N, self.sc.M
        levels = [((N0 - 1) * 2**i + 1, M0 * 2**i) for i in range(3)]
        rows, orbits = [], []
        for N, M in levels:
            disc = self.discretize(N)
            orbit = self._timed("orbit", self.orbit, disc, M, False)
            sys = linearize(orbit, self.sc.nonlinearity, disc, 0)
            sp = self._timed("spectra", floquet_spectrum, sys)
            rows.append({"N": N, "M": M, "h": disc.grid.h, "dt": disc.period / M, "lambda1": sp.lambda1,
                         "orbit_residual": orbit.residual})
            orbits.append(orbit.snapshots)
        lam = [r["lambda1"] for r in rows]
        # differences of coarse-grid samples between consecutive levels
        diffs = [np.max(np.abs(orbits[i + 1][:: 2, :: 2] - orbits[i])) for i in range(2)]
        self.report["convergence"] = {
            "levels": rows,
            "lambda1_slope": _slope(lam[0] - lam[1], lam[1] - lam[2]),
            "orbit_differences": diffs,
            "orbit_slope": _slope(diffs[0], diffs[1]),
        }
        return EXIT_OK


def _slope(d0, d1):
    if d1 == 0 or d0 == 0:
        return None
    return float(np.log2(abs(d0) / abs(d1)))


def check_coherence(report: dict) -> None:
    """Re-derive the verdict and the reconciliation flags from the serialised spectra."""
    data = json.loads(json.dumps(to_jsonable(report), allow_nan=False))
    spectra = [s for s in data.get("spectra") or [] if s.get("resolved", True)]
    eps = data["epsilon"]
    lam = [s["lambda1"] for s in spectra]
    lam_star = min(lam)
    label = "unstable" if lam_star < -eps else "stable" if lam_star > eps else "marginal"
    if label != data["verdict"]["label"]:
        raise CoherenceError(f"verdict {data['verdict']['label']!r} does not match the spectra ({label!r})")
    for s in data.get("spectra") or []:
        if not s.get("resolved", True) and s["lambda1_lower_bound"] < lam_star - eps:
            raise CoherenceError(f"unresolved mode {s['mode']} could undercut lambda*")
    lam0 = next(s["lambda1"] for s in spectra if s["mode"] == 0)
    for row in (data.get("reconciliation") or {}).get("rows", []):
        expected = None
        if row["verdict"] == "instability certified":
            expected = lam0 <= eps
        elif row["verdict"] == "stability certified":
            expected = lam0 >= -eps
        if row["consistent"] != expected:
            raise CoherenceError(f"reconciliation row {row['certificate']!r} disagrees with the spectra")


def run(scenario: Scenario, command: str, out_dir, modes: int | None = None) -> tuple[int, dict]:
    """Execute ``command`` and write the report; returns ``(exit_code, report)``."""
    runner = Run(scenario, command, out_dir, modes)
    t0 = time.perf_counter()
    try:
        code = runner.execute()
    except CoherenceError as exc:
        code = EXIT_NUMERICAL
        runner.report["error"] = {"type": "CoherenceError", "message": str(exc)}
    except NUMERICAL_ERRORS as exc:
        logger.error("numerical failure: %s", exc)
        code = EXIT_NUMERICAL
        runner.report["error"] = {"type": type(exc).__name__, "message": str(exc)}
    runner.timings["total"] = time.perf_counter() - t0
    runner.report["exit_code"] = code
    runner.report["status"] = {EXIT_OK: "completed", EXIT_HYPOTHESES: "hypotheses not met",
                               EXIT_NUMERICAL: "numerical failure"}[code]
    runner.report["timings"] = runner.timings
    dump_report(runner.report, runner.out / scenario.report)
    return code, runner.report
