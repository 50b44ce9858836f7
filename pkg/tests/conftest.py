"""Shared fixtures and the acceptance-line terminal reporter."""
from __future__ import annotations

import pytest

from steklov import mesh

_ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    _ACCEPTANCE_LINES.append(f"criterion {number:02d} {status}  {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def disk_coarse():
    return mesh.disk_mesh(10, 48)


@pytest.fixture(scope="session")
def square_coarse():
    return mesh.rectangle_mesh(1.0, 1.0, 8, 8)


@pytest.fixture(scope="session")
def annulus_coarse():
    return mesh.annulus_mesh(0.5, 1.0, 8, 32)
