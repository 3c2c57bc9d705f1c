import re

CRITERIA = {
    1: "curvature formulas",
    2: "example condition formulas",
    3: "heat-flow oracle",
    4: "Floquet sign conventions",
    5: "Perron structure",
    6: "kernel mode",
    7: "instability end-to-end",
    8: "stability end-to-end",
    9: "sharpness ordering",
    10: "Bochner check",
    11: "determinism and exit codes",
}
_outcomes: dict[int, list[bool]] = {}


def pytest_runtest_logreport(report):
    match = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not match:
        return
    if report.when == "call" or report.outcome == "failed":
        _outcomes.setdefault(int(match.group(1)), []).append(report.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number, name in CRITERIA.items():
        results = _outcomes.get(number)
        status = "NOT RUN" if results is None else "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} ({name}): {status}")
