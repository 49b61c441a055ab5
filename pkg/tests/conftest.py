import math
import shutil
from pathlib import Path

import numpy as np
import pytest

from scenesmith.model import ObjectNode, OrientedBox, WallSegment

ROOT = Path(__file__).resolve().parents[1]
FIXTURE = ROOT / "fixtures" / "demo"


def obj(oid, center, dims, yaw=0.0, label="storage", **kw):
    """Object shorthand: center (x, y[, z]) with z defaulting to half height."""
    if len(center) == 2:
        center = (center[0], center[1], dims[1] / 2)
    return ObjectNode(oid, OrientedBox(center, dims, yaw), label, **kw)


def rect_walls(w=4.0, h=3.0, x0=0.0, y0=0.0, height=2.5):
    p = [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)]
    names = ["s", "e", "n", "w"]
    return [WallSegment(f"w-{names[i]}", p[i], p[(i + 1) % 4], height) for i in range(4)]


def deg(x):
    return math.radians(x)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


@pytest.fixture
def demo(tmp_path):
    """A private copy of the shipped demo inputs."""
    dst = tmp_path / "demo"
    shutil.copytree(FIXTURE, dst)
    return dst


ACCEPTANCE_LINES: list[str] = []


def verdict(tag: str, ok: bool, detail: str) -> bool:
    """Record and print one acceptance line; returns ok so tests can assert on it."""
    line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
