import pytest


@pytest.fixture
def write_values(tmp_path):
    """Write a one-column CSV and return its path."""

    def _write(values, name="series.csv", column="value"):
        path = tmp_path / name
        lines = [column] + [repr(float(v)) if not isinstance(v, str) else v for v in values]
        path.write_text("\n".join(lines) + "\n")
        return path

    return _write


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
