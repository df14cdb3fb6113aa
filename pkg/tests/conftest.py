import numpy as np
import pytest

from vhyst.experiments import benchmark_material
from vhyst.model import MagnetizationState, PinningCell, SolverConfig


@pytest.fixture
def cell():
    """The single-cell benchmark used throughout: a_s = 50, j_s = 1.545, chi = 140."""
    return PinningCell(a_s=50.0, j_s=1.545, chi=140.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


@pytest.fixture(scope="session")
def material5():
    return benchmark_material(5)


@pytest.fixture(scope="session")
def material20():
    return benchmark_material(20)


def random_state(model, rng, d=2, fill=0.6):
    """Random feasible memory with |J_k| < fill * j_s,k."""
    j_s = model.stacked.j_s
    directions = rng.normal(size=(model.K, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = fill * j_s * rng.uniform(0, 1, size=model.K)
    return MagnetizationState(directions * radii[:, None])


def central_difference(f, x, h=None):
    """Gradient of scalar f by central differences, step 1e-6 * max(1, |x|)."""
    x = np.asarray(x, dtype=float)
    h = 1e-6 * max(1.0, float(np.linalg.norm(x))) if h is None else h
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def jacobian_difference(f, x, h):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.stack(cols, axis=1)


TIGHT = SolverConfig(eps=1e-8, tol=1e-12)


# --------------------------------------------------------------------------- acceptance report

_VERDICTS: list[str] = []


def record_verdict(number: int, title: str, checks: dict[str, bool], detail: str) -> None:
    """Log one PASS/FAIL line for an acceptance criterion, then assert it."""
    failed = [name for name, ok in checks.items() if not ok]
    line = f"criterion {number} {title}: {'PASS' if not failed else 'FAIL'} | {detail}"
    if failed:
        line += f" | failing checks: {', '.join(failed)}"
    _VERDICTS.append(line)
    print(line)
    assert not failed, line


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
