"""One-particle density matrices in the plane-wave basis of a momentum lattice."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ScenarioError
from .lattice import MomentumLattice

__all__ = ["DensityMatrix", "slater_projector", "orbitals"]

HERMITIAN_TOL = 1e-13


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian operator gamma_{k,k'} = <k| gamma |k'> on ``lattice``.

    The matrix is symmetrised on construction after checking that its
    anti-Hermitian part is below ``HERMITIAN_TOL`` relative to its size.
    """

    matrix: np.ndarray = field(repr=False)
    lattice: MomentumLattice
    hbar: float

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = len(self.lattice)
        if m.shape != (n, n):
            raise ScenarioError(f"density matrix shape {m.shape} does not match lattice size {n}")
        scale = max(1.0, float(np.abs(m).max(initial=0.0)))
        skew = float(np.abs(m - m.conj().T).max(initial=0.0))
        if skew > HERMITIAN_TOL * scale * max(1, n):
            raise ScenarioError(f"density matrix is not Hermitian (residual {skew:.2e})")
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def idempotency_residual(self) -> float:
        """Hilbert-Schmidt norm of gamma^2 - gamma."""
        m = self.matrix
        return float(np.linalg.norm(m @ m - m))

    def is_projector(self, tol: float = 1e-10) -> bool:
        return self.idempotency_residual() <= tol

    def spectrum(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def spectrum_violation(self) -> float:
        """How far the spectrum leaves [0, 1] (0 when 0 <= gamma <= 1)."""
        ev = self.spectrum()
        return float(max(0.0, -ev.min(initial=0.0), ev.max(initial=0.0) - 1.0))

    def with_matrix(self, matrix: np.ndarray) -> "DensityMatrix":
        return DensityMatrix(matrix, self.lattice, self.hbar)


def slater_projector(orbitals_: np.ndarray, lattice: MomentumLattice, hbar: float) -> DensityMatrix:
    """omega = sum_j |phi_j><phi_j| for orthonormal columns of ``orbitals_``."""
    phi = np.asarray(orbitals_, dtype=complex)
    return DensityMatrix(phi @ phi.conj().T, lattice, hbar)


def orbitals(gamma: DensityMatrix, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Spectral decomposition, largest occupations first.  Display helper only."""
    ev, vec = np.linalg.eigh(gamma.matrix)
    order = np.argsort(ev)[::-1]
    ev, vec = ev[order], vec[:, order]
    if n is not None:
        ev, vec = ev[:n], vec[:, :n]
    return ev, vec
