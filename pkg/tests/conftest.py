from __future__ import annotations

import numpy as np
import pytest

from covtest.matrix import center_rows


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def toy():
    """The 2 x 2 worked example: X = [[1, 2], [3, 4]], y = (0.5, -0.5)."""
    return np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([0.5, -0.5])


@pytest.fixture
def centered_instance(rng):
    def make(p=6, n=12):
        X = center_rows(rng.standard_normal((p, n)))
        y = rng.standard_normal(n)
        return X, y - y.mean()
    return make


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    lines = []
    for key in ("passed", "failed", "xfailed", "xpassed"):
        for rep in terminalreporter.stats.get(key, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props and rep.when == "call":
                lines.append((props["criterion"], rep.passed, props.get("detail", "")))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(lines):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
