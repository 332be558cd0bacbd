import numpy as np
import pytest

from fermidyn.density import DensityMatrix
from fermidyn.lattice import build_lattice, make_potential


def random_projector(lattice, rank, hbar, seed=0):
    rng = np.random.default_rng(seed)
    n = len(lattice)
    a = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    q, _ = np.linalg.qr(a)
    return DensityMatrix(q @ q.conj().T, lattice, hbar)


def random_mixed(lattice, hbar, seed=0):
    """Hermitian 0 <= gamma <= 1 with random eigenvectors and occupations."""
    rng = np.random.default_rng(seed)
    n = len(lattice)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, _ = np.linalg.qr(a)
    occ = rng.uniform(0, 1, size=n)
    return DensityMatrix((q * occ) @ q.conj().T, lattice, hbar)


def cubic_potential(v, dim=3):
    """Vhat = v on the 2d nearest-neighbour vectors."""
    coeffs = {}
    for axis in range(dim):
        for s in (1, -1):
            k = [0] * dim
            k[axis] = s
            coeffs[tuple(k)] = v
    return make_potential(coeffs, dim=dim)


@pytest.fixture
def lattice_1d():
    return build_lattice(1, 5)


@pytest.fixture
def lattice_2d():
    return build_lattice(2, 2)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line, then fail the test if needed."""

    def _verdict(number: int, title: str, ok: bool, detail: str, elapsed: float, limit: float):
        ok = bool(ok) and elapsed < limit
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail} [{elapsed:.1f}s of {limit:g}s]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _verdict


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
