import configparser
import io

import numpy as np
import pytest

from railchannel.config import default_config_text, parse_config_text


def config_text(overrides: dict | None = None) -> str:
    """Default INI text with ``{"section.key": value}`` overrides applied."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(default_config_text())
    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        parser[section][key] = str(value)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def make_config(overrides: dict | None = None):
    return parse_config_text(config_text(overrides))


STATIC_CDL = {
    "scenario.ut_speed_mps": 0.0,
    "scenario.n_rx": 1,
    "scenario.duration_s": 0.2,
    "cdl.table": "5G-R-Rural",
    "cdl.rays_per_cluster": 1,
}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
