import numpy as np
import pytest

from dyadic_embed import LatticeSpec, gen_cascade_weight

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    """Record one pass/fail line for an acceptance criterion."""

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"[criterion {number:2d}] {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_weight(spec: LatticeSpec, rng: np.random.Generator, zeros: bool = False):
    """Cascade weight, optionally with some cells zeroed out."""
    w = gen_cascade_weight(spec, rng.uniform(0.1, 0.45), rng)
    if not zeros:
        return w
    mass = w.cell_mass.copy()
    mass[rng.random(spec.shape) < 0.3] = 0.0
    if not mass.sum() > 0:
        mass.flat[0] = 1.0
    return type(w)(spec, mass)


def random_function(spec: LatticeSpec, rng: np.random.Generator) -> np.ndarray:
    """Nonnegative grid function with spiky structure and a few zeros."""
    f = rng.random(spec.shape) ** rng.uniform(1, 6)
    f[rng.random(spec.shape) < 0.15] = 0.0
    return f


def rel_close(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol * max(abs(a), abs(b)) or a == b
