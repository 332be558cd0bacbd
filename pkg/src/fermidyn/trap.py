"""Non-interacting fermions in an anisotropic harmonic trap.

The one-body Hamiltonian is h = sum_i (p_i^2 + w_i^2 x_i^2).  Its ground-state
Slater determinant fills the Hermite levels n_i = 0..cap_i on every axis, so
the one-particle density matrix is a diagonal projector in the occupation
basis |n1, n2, n3>.  The commutator trace norms ||[x_i, omega_N]||_tr and
||[p_i, omega_N]||_tr have a closed form; a brute-force singular-value sum over
explicitly built matrices serves as its independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.linalg import svdvals

from .errors import ScenarioError

__all__ = [
    "TrapSpec",
    "HermiteDensityMatrix",
    "nmax_levels",
    "ladder_matrix",
    "commutator_trace_norm_analytic",
    "commutator_trace_norm_unshifted",
    "commutator_trace_norm_bruteforce",
    "spatial_extension",
]


@dataclass(frozen=True)
class TrapSpec:
    frequencies: tuple[float, float, float]
    caps: tuple[int, int, int]
    hbar: float

    def __post_init__(self):
        w = tuple(float(x) for x in self.frequencies)
        caps = tuple(int(c) for c in self.caps)
        if len(w) != 3 or len(caps) != 3:
            raise ScenarioError("a trap needs three frequencies and three level caps")
        if any(x <= 0 for x in w):
            raise ScenarioError(f"trap frequencies must be positive, got {w}")
        if list(w) != sorted(w):
            raise ScenarioError(f"trap frequencies must be sorted ascending, got {w}")
        if any(c < 0 for c in caps):
            raise ScenarioError(f"level caps must be non-negative, got {caps}")
        if not self.hbar > 0:
            raise ScenarioError("hbar must be positive")
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "caps", caps)

    @property
    def n_particles(self) -> int:
        return math.prod(c + 1 for c in self.caps)


def nmax_levels(n_target: int, energy: float, frequencies) -> tuple[tuple[int, int, int], int]:
    """Level caps filling all three oscillators up to a common energy.

    cap_i = floor(N^(1/3) E w_1 / w_i).  Returns the caps and the realised
    particle number prod(cap_i + 1), which generally differs from ``n_target``.
    """
    if energy <= 0:
        raise ScenarioError(f"energy scale E must be positive, got {energy}")
    if n_target < 1:
        raise ScenarioError("target particle number must be positive")
    w = tuple(float(x) for x in frequencies)
    if any(x <= 0 for x in w) or list(w) != sorted(w):
        raise ScenarioError(f"frequencies must be positive and sorted, got {w}")
    root = round(n_target ** (1.0 / 3.0))
    cube_root = float(root) if root**3 == n_target else n_target ** (1.0 / 3.0)
    # the 1e-9 slack keeps exact products such as 3.0000000000000004 from flooring wrong
    caps = tuple(int(math.floor(cube_root * energy * w[0] / wi + 1e-9)) for wi in w)
    return caps, math.prod(c + 1 for c in caps)


class HermiteDensityMatrix:
    """Projector onto levels n_i <= cap_i, in a per-axis truncated Hermite basis."""

    def __init__(self, caps, truncation):
        self.caps = tuple(int(c) for c in caps)
        self.truncation = tuple(int(t) for t in truncation)
        if any(t < c + 1 for c, t in zip(self.caps, self.truncation)):
            raise ScenarioError("truncation must hold every occupied level")

    def axis_projector(self, axis: int) -> np.ndarray:
        diag = (np.arange(self.truncation[axis]) <= self.caps[axis]).astype(float)
        return np.diag(diag)

    def matrix(self) -> np.ndarray:
        return reduce(np.kron, [self.axis_projector(i) for i in range(3)])

    @property
    def trace(self) -> int:
        return math.prod(c + 1 for c in self.caps)


def ladder_matrix(truncation: int) -> np.ndarray:
    """Annihilation operator a on levels 0..truncation-1: sqrt(n) on the superdiagonal."""
    if truncation < 1:
        raise ScenarioError("truncation must be at least 1")
    return np.diag(np.sqrt(np.arange(1, truncation, dtype=float)), k=1)


def _axis_operator(kind: str, truncation: int, omega: float, hbar: float) -> np.ndarray:
    a = ladder_matrix(truncation)
    if kind == "position":
        return math.sqrt(hbar / (2 * omega)) * (a + a.T)
    if kind == "momentum":
        return 1j * math.sqrt(hbar * omega / 2) * (a.T - a)
    raise ScenarioError(f"operator must be 'position' or 'momentum', got {kind!r}")


def commutator_trace_norm_analytic(spec: TrapSpec, axis: int, operator: str = "position") -> float:
    """Closed form sqrt(hbar/(2 w_i)) sqrt(cap_i + 1) * 2 * prod_{j != i}(cap_j + 1).

    The momentum norm carries sqrt(hbar w_i / 2) instead, i.e. it is w_i times
    the position norm.
    """
    w = spec.frequencies[axis]
    if operator == "position":
        pref = math.sqrt(spec.hbar / (2 * w))
    elif operator == "momentum":
        pref = math.sqrt(spec.hbar * w / 2)
    else:
        raise ScenarioError(f"operator must be 'position' or 'momentum', got {operator!r}")
    transverse = math.prod(c + 1 for j, c in enumerate(spec.caps) if j != axis)
    return pref * math.sqrt(spec.caps[axis] + 1) * 2 * transverse


def commutator_trace_norm_unshifted(spec: TrapSpec, axis: int) -> float:
    """Same closed form with transverse factor prod_{j != i} cap_j (no +1); only reported alongside."""
    transverse = math.prod(c for j, c in enumerate(spec.caps) if j != axis)
    return math.sqrt(spec.hbar / (2 * spec.frequencies[axis])) * math.sqrt(spec.caps[axis] + 1) * 2 * transverse


def commutator_matrix(spec: TrapSpec, axis: int, operator: str = "position", truncation=None, density=None) -> np.ndarray:
    """Explicit [X, omega] on the tensor-product Hermite space.

    The active axis needs cap + 2 levels (the commutator couples cap and
    cap + 1); the transverse axes only need their occupied levels.
    """
    if truncation is None:
        truncation = [c + 1 for c in spec.caps]
        truncation[axis] = spec.caps[axis] + 2
    truncation = tuple(int(t) for t in truncation)
    if truncation[axis] < spec.caps[axis] + 2:
        raise ScenarioError(
            f"truncation {truncation[axis]} on axis {axis} cannot hold [X, omega]; need >= {spec.caps[axis] + 2}"
        )
    if density is None:
        density = HermiteDensityMatrix(spec.caps, truncation).matrix()
    factors = [np.eye(t) for t in truncation]
    factors[axis] = _axis_operator(operator, truncation[axis], spec.frequencies[axis], spec.hbar)
    op = reduce(np.kron, factors)
    return op @ density - density @ op


def commutator_trace_norm_bruteforce(spec: TrapSpec, operator: str, axis: int, truncation=None, density=None) -> float:
    """Sum of singular values of the explicitly assembled commutator matrix."""
    return float(svdvals(commutator_matrix(spec, axis, operator, truncation, density)).sum())


def spatial_extension(spec: TrapSpec, axis: int) -> float:
    """sqrt(<x_i^2>) = sqrt(hbar (cap_i + 1) / (2 w_i))."""
    return math.sqrt(spec.hbar * (spec.caps[axis] + 1) / (2 * spec.frequencies[axis]))
