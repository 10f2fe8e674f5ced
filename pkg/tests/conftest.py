import json

import numpy as np
import pytest

from contourlra.corpus import generate_ribbons
from contourlra.geometry import Contour


@pytest.fixture(scope="session")
def ribbons():
    return generate_ribbons(500, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def square(x0=0.0, y0=0.0, side=1.0):
    return Contour([[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side]])


def random_frame(rng, dim, m):
    q, _ = np.linalg.qr(rng.normal(size=(dim, m)))
    return q


def zero_mean_frame(rng, m, n=14):
    """Orthonormal 2n x m frame whose columns have zero mean per axis."""
    q = rng.normal(size=(n, 2, m))
    q -= q.mean(axis=0)
    return np.linalg.qr(q.reshape(2 * n, m))[0]


def exact_rank_contours(seed, count=200, m=6, n=14):
    """Contours whose centered coordinates lie in a fixed m-dim subspace; returns (contours, frame)."""
    rng = np.random.default_rng(seed)
    u = zero_mean_frame(rng, m, n)
    cols = u @ rng.normal(0, 40, size=(m, count))
    shifts = rng.uniform(100, 900, size=(count, 1, 2))
    return [Contour(c.reshape(n, 2) + s) for c, s in zip(cols.T, shifts)], u


def write_jsonl(path, contours, prefix="img"):
    with open(path, "w") as fh:
        for i, c in enumerate(contours):
            fh.write(json.dumps({"id": f"{prefix}{i}", "polygons": [c.points.tolist()]}) + "\n")
    return path


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion(number, ok, detail)."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        _CRITERIA[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
