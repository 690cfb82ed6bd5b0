import sys


def pytest_terminal_summary(terminalreporter):
    # repeat the acceptance gate's PASS/FAIL lines after the run
    results = []
    for name, module in list(sys.modules.items()):
        if name.rsplit(".", 1)[-1] == "test_acceptance":
            results = getattr(module, "RESULTS", [])
    if results:
        terminalreporter.section("acceptance criteria")
        for line in sorted(results, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
