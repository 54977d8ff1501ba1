import sys


def pytest_terminal_summary(terminalreporter):
    """Print one PASS/FAIL line per executed acceptance criterion."""
    module = sys.modules.get("test_acceptance")
    if module is None or not getattr(module, "RESULTS", None):
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for tag, description, verdict in sorted(module.RESULTS, key=lambda r: (len(r[0]), r[0])):
        terminalreporter.write_line(f"  {tag} {description}: {verdict}")
