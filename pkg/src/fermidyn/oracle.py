"""Exact many-fermion reference calculations at desk scale.

Occupation-number states are Python ints used as bitmasks over an ordered
mode list.  Bit j set means mode j is occupied, and the state is

    a*_{j1} a*_{j2} ... a*_{jN} |0>,   j1 < j2 < ... < jN,

so a_j and a*_j carry the sign (-1)^(number of occupied modes below j).

Two Fock spaces are provided: the fixed-N space used for exact dynamics, and
a particle-hole space in which the Fermi sea is the vacuum, only the chosen
shell modes are materialised, and every state has as many particles as
holes.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .density import DensityMatrix
from .errors import ResourceLimitError, ScenarioError
from .lattice import FermiBall, MomentumLattice, Potential
from .patches import PatchDecomposition
from .rpa import BosonState, PairExcitationSpec, RpaBlocks, pair_list

__all__ = [
    "FockBasis",
    "build_fock_basis",
    "build_hamiltonian",
    "slater_state",
    "slater_from_orbitals",
    "evolve_exact",
    "reduced_density_matrix",
    "energy",
    "ParticleHoleSpace",
    "particle_hole_space",
    "pair_operator_matrix",
    "materialize_pair_excitation",
    "DENSE_LIMIT",
    "DIMENSION_CAP",
]

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
DIMENSION_CAP = 200_000


def _sign_below(state: int, j: int) -> int:
    return -1 if bin(state & ((1 << j) - 1)).count("1") % 2 else 1


def _annihilate(state: int, j: int) -> tuple[int, int]:
    """(sign, new state); sign 0 when mode j is empty."""
    if not state >> j & 1:
        return 0, state
    return _sign_below(state, j), state ^ (1 << j)


def _create(state: int, j: int) -> tuple[int, int]:
    if state >> j & 1:
        return 0, state
    return _sign_below(state, j), state | (1 << j)


@dataclass(frozen=True, eq=False)
class FockBasis:
    """All N-particle occupation states over the points of ``lattice``."""

    lattice: MomentumLattice
    n: int
    states: tuple[int, ...] = field(repr=False)
    _index: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self._index:
            self._index.update({s: i for i, s in enumerate(self.states)})

    @property
    def n_modes(self) -> int:
        return len(self.lattice)

    @property
    def dim(self) -> int:
        return len(self.states)

    def index(self, state: int) -> int:
        return self._index.get(state, -1)

    def occupied(self, i: int) -> tuple[int, ...]:
        s = self.states[i]
        return tuple(j for j in range(self.n_modes) if s >> j & 1)


def build_fock_basis(lattice: MomentumLattice, n: int, cap: int = DIMENSION_CAP) -> FockBasis:
    """Fixed-N basis; states enumerated as increasing mode-index tuples."""
    m = len(lattice)
    if not 0 < n <= m:
        raise ScenarioError(f"particle number {n} must lie in 1..{m}")
    if m > 62:
        raise ResourceLimitError(f"{m} modes exceed the 62-mode bitmask limit")
    dim = math.comb(m, n)
    if dim > cap:
        raise ResourceLimitError(f"Fock dimension C({m}, {n}) = {dim} exceeds the cap {cap}")
    states = tuple(sum(1 << j for j in combo) for combo in itertools.combinations(range(m), n))
    return FockBasis(lattice, n, states)


def _hopping_table(basis: FockBasis):
    """For every state and every (k, k') the index and sign of a*_{k'} a_k |state>."""
    rows, cols, ks, kps, signs = [], [], [], [], []
    for i, s in enumerate(basis.states):
        for k in range(basis.n_modes):
            s1, t = _annihilate(s, k)
            if not s1:
                continue
            for kp in range(basis.n_modes):
                s2, u = _create(t, kp)
                if not s2:
                    continue
                rows.append(basis.index(u))
                cols.append(i)
                ks.append(k)
                kps.append(kp)
                signs.append(s1 * s2)
    return np.array(rows), np.array(cols), np.array(ks), np.array(kps), np.array(signs, dtype=float)


def build_hamiltonian(basis: FockBasis, V: Potential, hbar: float, n_coupling: float | None = None) -> sp.csr_matrix:
    """hbar^2 sum |p|^2 a*_p a_p + (1/2N) sum Vhat(k) a*_{p+k} a*_{q-k} a_q a_p.

    Terms whose outgoing momenta leave the lattice are dropped.
    """
    lat = basis.lattice
    n = float(basis.n if n_coupling is None else n_coupling)
    kin = hbar**2 * lat.sq_norms.astype(float)
    diag = np.array([kin[list(basis.occupied(i))].sum() for i in range(basis.dim)])
    rows, cols, vals = [np.arange(basis.dim)], [np.arange(basis.dim)], [diag.astype(complex)]
    r, c, v = [], [], []
    items = list(V.items())
    plus = {q: lat.shifted(q) for q, _ in items}
    minus = {q: lat.shifted(tuple(-x for x in q)) for q, _ in items}
    for i, s in enumerate(basis.states):
        occ = basis.occupied(i)
        for p in occ:
            s1, t1 = _annihilate(s, p)
            for q in occ:
                if q == p:
                    continue
                s2, t2 = _annihilate(t1, q)
                for kvec, vk in items:
                    pk, qk = plus[kvec][p], minus[kvec][q]
                    if pk < 0 or qk < 0:
                        continue
                    s3, t3 = _create(t2, qk)
                    if not s3:
                        continue
                    s4, t4 = _create(t3, pk)
                    if not s4:
                        continue
                    r.append(basis.index(t4))
                    c.append(i)
                    v.append(vk / (2 * n) * s1 * s2 * s3 * s4)
    if r:
        rows.append(np.array(r))
        cols.append(np.array(c))
        vals.append(np.array(v, dtype=complex))
    h = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(basis.dim, basis.dim))
    h.sum_duplicates()
    return h


def slater_state(basis: FockBasis, occupied: Sequence) -> np.ndarray:
    """Unit vector of the determinant filling the given modes (indices or lattice vectors)."""
    idx = []
    for m in occupied:
        j = int(m) if isinstance(m, (int, np.integer)) else basis.lattice.index_of(m)
        if j < 0:
            raise ScenarioError(f"mode {m} is not in the basis")
        idx.append(j)
    if len(set(idx)) != basis.n:
        raise ScenarioError(f"a Slater state needs {basis.n} distinct modes, got {len(set(idx))}")
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.index(sum(1 << j for j in idx))] = 1.0
    return psi


def slater_from_orbitals(basis: FockBasis, phi: np.ndarray) -> np.ndarray:
    """a*(phi_1) ... a*(phi_N)|0>: amplitude det(phi[S, :]) on the mode set S."""
    phi = np.asarray(phi, dtype=complex)
    if phi.shape != (basis.n_modes, basis.n):
        raise ScenarioError(f"orbital matrix must be {basis.n_modes} x {basis.n}")
    return np.array([np.linalg.det(phi[list(basis.occupied(i)), :]) for i in range(basis.dim)])


def evolve_exact(psi0: np.ndarray, h, t: float, hbar: float) -> np.ndarray:
    """exp(-i H t / hbar) psi0: dense spectral for small spaces, Krylov-type otherwise."""
    dim = h.shape[0]
    if dim > DIMENSION_CAP:
        raise ResourceLimitError(f"Fock dimension {dim} exceeds the cap {DIMENSION_CAP}")
    if t == 0:
        return np.array(psi0, dtype=complex)
    if dim <= DENSE_LIMIT:
        dense = h.toarray() if sp.issparse(h) else np.asarray(h)
        ev, vec = np.linalg.eigh(dense)
        return vec @ (np.exp(-1j * ev * t / hbar) * (vec.conj().T @ psi0))
    return expm_multiply((-1j * t / hbar) * sp.csr_matrix(h), np.asarray(psi0, dtype=complex))


def energy(psi: np.ndarray, h) -> float:
    return float(np.vdot(psi, h @ psi).real)


def reduced_density_matrix(basis: FockBasis, psi: np.ndarray, hbar: float) -> DensityMatrix:
    """gamma_{k,k'} = <psi, a*_{k'} a_k psi>, trace N."""
    table = getattr(basis, "_hop", None)
    if table is None:
        table = _hopping_table(basis)
        object.__setattr__(basis, "_hop", table)
    rows, cols, ks, kps, signs = table
    contrib = np.conj(psi[rows]) * psi[cols] * signs
    m = basis.n_modes
    gamma = np.zeros((m, m), dtype=complex)
    np.add.at(gamma, (ks, kps), contrib)
    return DensityMatrix(gamma, basis.lattice, hbar)


# ---------------------------------------------------------------- particle-hole frame


@dataclass(frozen=True, eq=False)
class ParticleHoleSpace:
    """Balanced excitations of the Fermi sea over a finite set of shell modes.

    Modes 0..P-1 are particles (outside the ball), P..P+H-1 holes (inside).
    A basis state with j particles and j holes is created from the vacuum by
    the corresponding creation operators in increasing mode order.
    """

    particles: tuple[tuple[int, ...], ...]
    holes: tuple[tuple[int, ...], ...]
    max_pairs: int
    states: tuple[int, ...] = field(repr=False)
    _index: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self._index:
            self._index.update({s: i for i, s in enumerate(self.states)})

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def n_particle_modes(self) -> int:
        return len(self.particles)

    def mode(self, q, hole: bool) -> int:
        q = tuple(int(c) for c in q)
        try:
            return self.holes.index(q) + len(self.particles) if hole else self.particles.index(q)
        except ValueError:
            raise ScenarioError(f"{'hole' if hole else 'particle'} mode {q} is not materialised") from None

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self._index[0]] = 1.0
        return v

    def pair_count(self) -> np.ndarray:
        pmask = (1 << len(self.particles)) - 1
        return np.array([bin(s & pmask).count("1") for s in self.states])

    def number_operators(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """(N^p, N^h) as diagonal matrices."""
        pmask = (1 << len(self.particles)) - 1
        npart = np.array([bin(s & pmask).count("1") for s in self.states], dtype=float)
        nhole = np.array([bin(s >> len(self.particles)).count("1") for s in self.states], dtype=float)
        return sp.diags(npart).tocsr(), sp.diags(nhole).tocsr()

    def total_number(self) -> sp.csr_matrix:
        npart, nhole = self.number_operators()
        return (npart + nhole).tocsr()

    def pair_creation(self, p: int, h: int) -> sp.csr_matrix:
        """a*_p a*_h (hole created first); pairs beyond ``max_pairs`` are dropped."""
        r, c, v = [], [], []
        for i, s in enumerate(self.states):
            s1, t = _create(s, h)
            if not s1:
                continue
            s2, u = _create(t, p)
            if not s2:
                continue
            j = self._index.get(u, -1)
            if j >= 0:
                r.append(j)
                c.append(i)
                v.append(float(s1 * s2))
        return sp.csr_matrix((v, (r, c)), shape=(self.dim, self.dim))


def particle_hole_space(particles: Sequence, holes: Sequence, max_pairs: int, cap: int = DIMENSION_CAP) -> ParticleHoleSpace:
    parts = tuple(dict.fromkeys(tuple(int(c) for c in p) for p in particles))
    hls = tuple(dict.fromkeys(tuple(int(c) for c in h) for h in holes))
    np_, nh = len(parts), len(hls)
    if np_ + nh > 62:
        raise ResourceLimitError(f"{np_ + nh} modes exceed the 62-mode bitmask limit")
    dim = sum(math.comb(np_, j) * math.comb(nh, j) for j in range(max_pairs + 1))
    if dim > cap:
        raise ResourceLimitError(f"particle-hole dimension {dim} exceeds the cap {cap}")
    states = []
    for j in range(max_pairs + 1):
        for pc in itertools.combinations(range(np_), j):
            pbits = sum(1 << x for x in pc)
            for hc in itertools.combinations(range(nh), j):
                states.append(pbits | sum(1 << (np_ + x) for x in hc))
    return ParticleHoleSpace(parts, hls, max_pairs, tuple(states))


def _delocalized_pairs(k, fb: FermiBall, space: ParticleHoleSpace):
    k = np.asarray(k, dtype=np.int64)
    pairs = []
    for h in fb.members:
        p = h + k
        if not fb.contains(p):
            pairs.append((tuple(int(c) for c in p), tuple(int(c) for c in h)))
    return pairs


def pair_operator_matrix(k, alpha: int | None, pd: PatchDecomposition | None, fb: FermiBall, space: ParticleHoleSpace) -> sp.csr_matrix:
    """b*_alpha(k) = n_alpha(k)^-1 sum_{p - h = k} a*_p a*_h over patch alpha.

    With ``alpha=None`` the unnormalised delocalised b*(k) over the whole Fermi
    ball is returned instead.
    """
    if alpha is None:
        pairs = _delocalized_pairs(k, fb, space)
        norm = 1.0
    else:
        if pd is None:
            raise ScenarioError("a patch decomposition is needed for patch pair operators")
        pairs = pair_list(k, alpha, pd)
        if not pairs:
            raise ScenarioError(f"n_alpha(k) = 0 for alpha = {alpha}, k = {tuple(int(c) for c in k)}")
        norm = math.sqrt(len(pairs))
    op = sp.csr_matrix((space.dim, space.dim))
    for p, h in pairs:
        op = op + space.pair_creation(space.mode(p, False), space.mode(h, True))
    return (op / norm).tocsr()


def materialize_pair_excitation(spec: PairExcitationSpec, blocks: dict[tuple, RpaBlocks], pd: PatchDecomposition, space: ParticleHoleSpace) -> tuple[np.ndarray, float]:
    """(xi, Z_m) with xi = c*(phi_1) ... c*(phi_m) Omega / Z_m.

    c*(phi) = sum_k sum_{alpha in I_k} phi(k)_alpha c*_alpha(k), where
    c*_alpha(k) = b*_alpha(k) on I_k^+ and b*_alpha(-k) on I_{-k}^+.
    """
    if spec.m > space.max_pairs:
        raise ScenarioError(f"{spec.m} pair excitations need max_pairs >= {spec.m}")
    cache: dict = {}

    def c_star(phi: BosonState) -> sp.csr_matrix:
        total = sp.csr_matrix((space.dim, space.dim), dtype=complex)
        for k, amp in phi.amplitudes.items():
            b = blocks[k]
            kv = np.array(k)
            for i, alpha in enumerate(b.sets.all):
                if amp[i] == 0:
                    continue
                kk = kv if i < len(b.sets.plus) else -kv
                key = (tuple(kk), alpha)
                if key not in cache:
                    cache[key] = pair_operator_matrix(kk, alpha, pd, pd.fb, space)
                total = total + amp[i] * cache[key]
        return total

    v = space.vacuum()
    for phi in reversed(spec.states):
        v = c_star(phi) @ v
    z = float(np.linalg.norm(v))
    if z == 0:
        raise ScenarioError("the pair excitation vanishes")
    return v / z, z
