"""Time-dependent Hartree-Fock propagation in the plane-wave basis.

    i hbar d(omega)/dt = [h(omega), omega],
    h(omega) = hbar^2 |k|^2 + (1/N) (V * rho) - (1/N) X,

with matrix elements (Fourier convention of :mod:`fermidyn.lattice`)

    direct_{k,k'}   = (1/N) Vhat(k - k') rhohat(k - k'),  rhohat(q) = sum_m omega_{m+q, m}
    exchange_{k,k'} = (1/N) sum_q Vhat(q) omega_{k-q, k'-q}.

Momenta pushed outside the lattice by an interaction are dropped; the exact
many-body oracle uses the same truncation rule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import svdvals

from .density import DensityMatrix
from .errors import NumericalError, ScenarioError
from .lattice import MomentumLattice, Potential

__all__ = [
    "DensityMatrix",
    "kinetic_matrix",
    "density_fourier",
    "direct_term",
    "exchange_term",
    "hf_generator",
    "hf_energy",
    "hf_step",
    "hf_evolve",
    "HFTrajectory",
    "free_evolution",
    "trace_norm_distance",
    "check_basis_covers",
    "one_body_matrix",
    "ground_state_projector",
]

log = logging.getLogger(__name__)


def kinetic_matrix(lattice: MomentumLattice, hbar: float) -> np.ndarray:
    return np.diag(hbar**2 * lattice.sq_norms.astype(float)).astype(complex)


def _matrix(omega) -> np.ndarray:
    return omega.matrix if isinstance(omega, DensityMatrix) else np.asarray(omega, dtype=complex)


def density_fourier(omega, lattice: MomentumLattice, q) -> complex:
    """rhohat(q) = sum_m omega_{m+q, m} (zero terms where m + q leaves the lattice)."""
    m = _matrix(omega)
    target = lattice.shifted(q)
    ok = target >= 0
    return complex(m[target[ok], np.flatnonzero(ok)].sum())


def direct_term(omega, V: Potential, n: float, lattice: MomentumLattice | None = None) -> np.ndarray:
    """Matrix of the multiplication operator (1/N) V * rho."""
    lattice = omega.lattice if lattice is None else lattice
    m = _matrix(omega)
    out = np.zeros_like(m)
    for q, vq in V.items():
        coeff = vq * density_fourier(m, lattice, q) / n
        target = lattice.shifted(q)
        ok = target >= 0
        out[target[ok], np.flatnonzero(ok)] += coeff
    return out


def exchange_term(omega, V: Potential, n: float, lattice: MomentumLattice | None = None) -> np.ndarray:
    """Matrix of the integral operator with kernel (1/N) V(x - x') omega(x; x')."""
    lattice = omega.lattice if lattice is None else lattice
    m = _matrix(omega)
    out = np.zeros_like(m)
    for q, vq in V.items():
        src = lattice.shifted(tuple(-c for c in q))  # index of k - q
        ok = np.flatnonzero(src >= 0)
        s = src[ok]
        out[np.ix_(ok, ok)] += (vq / n) * m[np.ix_(s, s)]
    return out


def hf_generator(omega, V: Potential, n: float, include_exchange: bool = True, lattice=None, hbar=None) -> np.ndarray:
    lattice = omega.lattice if lattice is None else lattice
    hbar = omega.hbar if hbar is None else hbar
    h = kinetic_matrix(lattice, hbar) + direct_term(omega, V, n, lattice)
    if include_exchange:
        h -= exchange_term(omega, V, n, lattice)
    return h


def hf_energy(omega, V: Potential, n: float, include_exchange: bool = True, lattice=None, hbar=None) -> float:
    """tr(K omega) + 1/2 tr(direct omega) - 1/2 tr(exchange omega); conserved by the flow."""
    lattice = omega.lattice if lattice is None else lattice
    hbar = omega.hbar if hbar is None else hbar
    m = _matrix(omega)
    kin = hbar**2 * float(np.dot(lattice.sq_norms, np.diag(m).real))
    e = kin + 0.5 * np.trace(direct_term(m, V, n, lattice) @ m).real
    if include_exchange:
        e -= 0.5 * np.trace(exchange_term(m, V, n, lattice) @ m).real
    return float(e)


def _unitary(h: np.ndarray, tau: float) -> np.ndarray:
    ev, vec = np.linalg.eigh(h)
    return (vec * np.exp(-1j * tau * ev)) @ vec.conj().T


def hf_step(m, V, n, dt, hbar, lattice, include_exchange=True, midpoint_iters=50, tol=1e-13, guess=None):
    """One self-consistent exponential-midpoint step.

    Solves omega' = U omega U^*, U = exp(-i dt h((omega + omega')/2) / hbar) by
    fixed-point iteration.  Because h is the gradient of the quadratic energy
    and U commutes with the midpoint generator, the converged step conserves
    the energy exactly; conjugation preserves trace and spectrum.
    Returns (omega', U, iterations).
    """
    nxt = m if guess is None else guess
    tau = dt / hbar
    for it in range(1, midpoint_iters + 1):
        h_mid = hf_generator(0.5 * (m + nxt), V, n, include_exchange, lattice, hbar)
        u = _unitary(h_mid, tau)
        new = u @ m @ u.conj().T
        change = float(np.abs(new - nxt).max())
        nxt = new
        if change < tol:
            return nxt, u, it
    raise NumericalError(f"midpoint iteration did not converge in {midpoint_iters} iterations (residual {change:.2e})")


@dataclass
class HFTrajectory:
    times: np.ndarray
    states: list[DensityMatrix] = field(repr=False)
    iterations: list[int] = field(repr=False, default_factory=list)

    @property
    def final(self) -> DensityMatrix:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.states)


def hf_evolve(
    omega0: DensityMatrix,
    V: Potential,
    t_final: float,
    dt: float,
    n: float | None = None,
    include_exchange: bool = True,
    midpoint_iters: int = 50,
    tol: float = 1e-13,
    save_every: int = 1,
    spectrum_tol: float = 1e-8,
) -> HFTrajectory:
    """Integrate the Hartree-Fock equation from ``omega0`` up to ``t_final``.

    ``n`` is the particle number in the 1/N coupling (defaults to the rounded
    trace of ``omega0``).  Snapshots are kept every ``save_every`` steps plus
    the final one.
    """
    if dt <= 0:
        raise ScenarioError("dt must be positive")
    if t_final < 0:
        raise ScenarioError("t_final must be non-negative")
    if omega0.spectrum_violation() > spectrum_tol:
        raise ScenarioError("initial density matrix must satisfy 0 <= omega <= 1")
    lattice, hbar = omega0.lattice, omega0.hbar
    n = float(round(omega0.trace)) if n is None else float(n)
    steps = int(round(t_final / dt))
    if steps and abs(steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ScenarioError(f"t_final = {t_final} is not a multiple of dt = {dt}")
    m = np.array(omega0.matrix)
    times, states, iters = [0.0], [omega0], []
    u_prev = None
    for step in range(1, steps + 1):
        guess = None if u_prev is None else u_prev @ m @ u_prev.conj().T
        m, u_prev, it = hf_step(m, V, n, dt, hbar, lattice, include_exchange, midpoint_iters, tol, guess)
        m = 0.5 * (m + m.conj().T)
        iters.append(it)
        if not np.isfinite(m).all():
            raise NumericalError(f"non-finite density matrix at step {step}")
        if step % save_every == 0 or step == steps:
            snap = DensityMatrix(m, lattice, hbar)
            viol = snap.spectrum_violation()
            if viol > spectrum_tol:
                raise NumericalError(f"spectrum left [0, 1] by {viol:.2e} at t = {step * dt}")
            times.append(step * dt)
            states.append(snap)
    return HFTrajectory(np.array(times), states, iters)


def free_evolution(omega0: DensityMatrix, t: float) -> DensityMatrix:
    """exp(-i t hbar K) omega0 exp(i t hbar K) with K = diag(|k|^2)."""
    phase = np.exp(-1j * t * omega0.hbar * omega0.lattice.sq_norms)
    return omega0.with_matrix(phase[:, None] * omega0.matrix * phase.conj()[None, :])


def trace_norm_distance(a, b) -> float:
    """Sum of singular values of a - b."""
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix) and a.lattice != b.lattice:
        raise ScenarioError("density matrices live on different bases")
    ma, mb = _matrix(a), _matrix(b)
    if ma.shape != mb.shape:
        raise ScenarioError(f"shape mismatch {ma.shape} vs {mb.shape}")
    return float(svdvals(ma - mb).sum())


def check_basis_covers(lattice: MomentumLattice, kf: float, V: Potential) -> None:
    """Require cutoff >= k_F + diam supp Vhat so the Fermi ball's interaction shell fits."""
    need = kf + V.support_diameter
    if lattice.cutoff + 1e-12 < need:
        raise ScenarioError(f"lattice cutoff {lattice.cutoff} is below k_F + diam supp Vhat = {need}")


def one_body_matrix(lattice: MomentumLattice, hbar: float, external: Potential | None = None) -> np.ndarray:
    """hbar^2 |k|^2 plus the multiplication operator by an external potential."""
    h = kinetic_matrix(lattice, hbar)
    if external is not None:
        for q, uq in external.items():
            target = lattice.shifted(q)
            ok = target >= 0
            h[target[ok], np.flatnonzero(ok)] += uq
    return h


def ground_state_projector(lattice: MomentumLattice, hbar: float, n: int, external: Potential | None = None, gap_tol: float = 1e-9):
    """Projector onto the n lowest orbitals of hbar^2 |k|^2 + U; returns (omega, orbitals).

    Raises when the n-th and (n+1)-th levels are degenerate, since the
    ground state would then not be unique.
    """
    if not 0 < n <= len(lattice):
        raise ScenarioError(f"cannot fill {n} orbitals on a lattice of {len(lattice)} modes")
    ev, vec = np.linalg.eigh(one_body_matrix(lattice, hbar, external))
    if n < len(ev) and ev[n] - ev[n - 1] < gap_tol * max(1.0, abs(ev[n])):
        raise ScenarioError(f"levels {n - 1} and {n} are degenerate; the {n}-particle ground state is not unique")
    phi = vec[:, :n]
    return DensityMatrix(phi @ phi.conj().T, lattice, hbar), phi
