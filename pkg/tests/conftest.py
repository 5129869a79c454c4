from __future__ import annotations

import numpy as np
import pytest

from keeporig.core import Image


@pytest.fixture
def np_rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def random_image(rng: np.random.Generator, w: int, h: int, c: int = 3) -> Image:
    return Image.from_array(rng.integers(0, 256, size=(h, w, c), dtype=np.uint8))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One verdict line per release-gate criterion at the end of the run."""
    rows = []
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" in nodeid and getattr(rep, "when", "call") == "call":
                rows.append((nodeid.split("::")[-1], key == "passed"))
    if not rows:
        return
    terminalreporter.write_sep("=", "release gate")
    for name, ok in sorted(rows):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
