"""Bosonized description of pair excitations around the Fermi sphere.

For every momentum transfer k in the northern half of supp Vhat, patch pair
operators c*_alpha(k) are indexed by I_k = I_k^+ followed by I_{-k}^+.  The
effective quadratic boson Hamiltonian is built from

    D_aa = |k . w_a| / |k|                        (w_a = unit patch centre)
    W_ab, Wt_ab = Vhat(k) / (2 hbar kappa N |k|) n_a n_b

where W lives on the diagonal blocks (both indices in I_k^+ or both in
I_{-k}^+) and Wt on the off-diagonal blocks.  A Bogoliubov kernel K brings it
to the diagonal form with matrix E; RPA energies and excitation spectra
follow.  All matrix functions use symmetric eigendecompositions.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import NumericalError, ScenarioError
from .lattice import Potential, ScalingConstants, parse_vector
from .patches import PatchDecomposition

__all__ = [
    "IndexSets",
    "RpaBlocks",
    "BosonState",
    "PairExcitationSpec",
    "index_sets",
    "pair_count",
    "pair_list",
    "build_blocks",
    "bogoliubov_kernel",
    "diagonalized_block",
    "build_mode",
    "build_all_modes",
    "rpa_energy_correction",
    "excitation_spectrum",
    "linearization_residual",
    "boson_evolve",
    "pair_excitation_state",
    "m_condition",
    "default_patch_count",
]

log = logging.getLogger(__name__)

DEFAULT_DELTA = 2.0 / 45.0
PD_TOL = 1e-12


def default_patch_count(n: int, delta: float = DEFAULT_DELTA) -> int:
    """M = N^(4 delta), rounded to the nearest even integer >= 2."""
    m = n ** (4 * delta)
    return max(2, 2 * round(m / 2))


def _vec(k) -> np.ndarray:
    if isinstance(k, str):
        k = parse_vector(k, 3)
    return np.asarray(k, dtype=np.int64).reshape(3)


@dataclass(frozen=True)
class IndexSets:
    plus: tuple[int, ...]  # I_k^+
    minus: tuple[int, ...]  # I_{-k}^+

    @property
    def all(self) -> tuple[int, ...]:
        return self.plus + self.minus

    def __len__(self) -> int:
        return len(self.plus) + len(self.minus)


def index_sets(k, pd: PatchDecomposition, delta: float, n: int) -> IndexSets:
    """Patches with k . w_a >= N^-delta (plus) and -k . w_a >= N^-delta (minus)."""
    k = _vec(k).astype(float)
    proj = pd.unit_centers @ k
    thr = n ** (-delta)
    plus = tuple(int(a) for a in np.flatnonzero(proj >= thr))
    minus = tuple(int(a) for a in np.flatnonzero(-proj >= thr))
    return IndexSets(plus, minus)


def pair_list(k, alpha: int, pd: PatchDecomposition) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """All (p, h) in patch alpha with p outside, h inside the Fermi ball and p - h = k."""
    k = _vec(k)
    fb = pd.fb
    pts = pd.members[alpha]
    holes = pts[fb.mask(pts)]
    out = []
    for h in holes:
        p = h + k
        if pd.patch_of(p) == alpha and not fb.contains(p):
            out.append((tuple(int(c) for c in p), tuple(int(c) for c in h)))
    return out


def pair_count(k, alpha: int, pd: PatchDecomposition) -> tuple[float, float]:
    """(n_exact, n_approx): sqrt of the pair count, and sqrt(4 pi k_F^2 / M |k . w_a|)."""
    exact = math.sqrt(len(pair_list(k, alpha, pd)))
    proj = abs(float(pd.unit_centers[alpha] @ _vec(k)))
    approx = math.sqrt(4 * math.pi * pd.fb.kf**2 / pd.m * proj)
    return exact, approx


def _normalizations(k, sets: IndexSets, pd: PatchDecomposition) -> np.ndarray:
    k = _vec(k)
    return np.array([pair_count(k, a, pd)[0] for a in sets.plus] + [pair_count(-k, a, pd)[0] for a in sets.minus])


def build_blocks(k, sets: IndexSets, norms: np.ndarray, pd: PatchDecomposition, V: Potential, sc: ScalingConstants, n: int, vhat: float | None = None):
    """(D, W, Wt) over I_k.  ``vhat`` overrides Vhat(k) (used for scaling sweeps)."""
    k = _vec(k)
    knorm = float(np.linalg.norm(k))
    w = pd.unit_centers[list(sets.all)]
    d = np.diag(np.abs(w @ k) / knorm)
    v = V(tuple(int(c) for c in k)) if vhat is None else vhat
    outer = v / (2 * sc.hbar * sc.kappa * n * knorm) * np.outer(norms, norms)
    same = np.zeros(outer.shape, dtype=bool)
    np_ = len(sets.plus)
    same[:np_, :np_] = True
    same[np_:, np_:] = True
    return d, np.where(same, outer, 0.0), np.where(same, 0.0, outer)


def _sym_eig(a: np.ndarray, what: str):
    a = 0.5 * (a + a.T)
    ev, vec = np.linalg.eigh(a)
    scale = max(1.0, float(np.abs(ev).max(initial=0.0)))
    if ev.size and ev.min() <= PD_TOL * scale:
        raise NumericalError(f"{what} is not positive definite (minimum eigenvalue {ev.min():.3e})")
    return ev, vec


def _fun(ev: np.ndarray, vec: np.ndarray, f) -> np.ndarray:
    return (vec * f(ev)) @ vec.T


def bogoliubov_kernel(d: np.ndarray, w: np.ndarray, wt: np.ndarray):
    """E = (A^1/2 B A^1/2)^1/2, S = A^1/2 E^-1/2, K = log(S S^T)/2 with A = D+W-Wt, B = D+W+Wt."""
    if not np.any(wt):
        # A = B, so E = A and S = 1 exactly
        a = d + w
        _sym_eig(a, "D + W")
        eye = np.eye(len(a))
        return 0.5 * (a + a.T), eye, np.zeros_like(a)
    a_ev, a_vec = _sym_eig(d + w - wt, "D + W - Wt")
    a_half = _fun(a_ev, a_vec, np.sqrt)
    e_ev, e_vec = _sym_eig(a_half @ (d + w + wt) @ a_half, "A^1/2 (D + W + Wt) A^1/2")
    e = _fun(e_ev, e_vec, np.sqrt)
    s = a_half @ _fun(e_ev, e_vec, lambda x: x ** (-0.25))
    ss_ev, ss_vec = _sym_eig(s @ s.T, "S S^T")
    kmat = 0.5 * _fun(ss_ev, ss_vec, np.log)
    return 0.5 * (e + e.T), s, 0.5 * (kmat + kmat.T)


def diagonalized_block(d, w, wt, kmat):
    """Return (curly K, R): the transformed diagonal block and the leftover off-diagonal part."""
    ev, vec = np.linalg.eigh(kmat)
    ch = _fun(ev, vec, np.cosh)
    sh = _fun(ev, vec, np.sinh)
    dw = d + w
    curly = ch @ dw @ ch + sh @ dw @ sh + ch @ wt @ sh + sh @ wt @ ch
    resid = sh @ dw @ ch + ch @ dw @ sh + ch @ wt @ ch + sh @ wt @ sh
    return 0.5 * (curly + curly.conj().T), resid


@dataclass(frozen=True, eq=False)
class RpaBlocks:
    k: tuple[int, int, int]
    sets: IndexSets
    norms: np.ndarray = field(repr=False)
    d: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    wt: np.ndarray = field(repr=False)
    e: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)
    kernel: np.ndarray = field(repr=False)
    curly: np.ndarray = field(repr=False)
    residual: np.ndarray = field(repr=False)

    @property
    def knorm(self) -> float:
        return float(np.linalg.norm(self.k))

    @property
    def size(self) -> int:
        return len(self.sets)

    def correlation_trace(self) -> float:
        """tr(E - D - W)."""
        return float(np.trace(self.e - self.d - self.w))

    def residual_ratio(self) -> float:
        return float(np.linalg.norm(self.residual) / np.linalg.norm(self.d + self.w))


@dataclass
class ModeReport:
    k: tuple[int, int, int]
    reason: str
    dropped_patches: list[int] = field(default_factory=list)


def build_mode(k, pd: PatchDecomposition, V: Potential, sc: ScalingConstants, delta: float = DEFAULT_DELTA, vhat: float | None = None, report: list | None = None) -> RpaBlocks | None:
    """All matrices for one k; None (with a report entry) when I_k is empty.

    Patches with a zero pair count are removed from I_k and reported.
    """
    k = tuple(int(c) for c in _vec(k))
    n = pd.fb.n
    sets = index_sets(k, pd, delta, n)
    kv = np.array(k)
    plus = tuple(a for a in sets.plus if pair_count(kv, a, pd)[0] > 0)
    minus = tuple(a for a in sets.minus if pair_count(-kv, a, pd)[0] > 0)
    dropped = sorted(set(sets.all) - set(plus + minus))
    if dropped and report is not None:
        report.append(ModeReport(k, "zero pair count", dropped))
    sets = IndexSets(plus, minus)
    if len(sets) == 0:
        msg = f"mode k = {k} has an empty index set and is dropped"
        warnings.warn(msg, RuntimeWarning)
        if report is not None:
            report.append(ModeReport(k, "empty index set"))
        return None
    norms = _normalizations(kv, sets, pd)
    d, w, wt = build_blocks(kv, sets, norms, pd, V, sc, n, vhat)
    e, s, kmat = bogoliubov_kernel(d, w, wt)
    curly, resid = diagonalized_block(d, w, wt, kmat)
    return RpaBlocks(k, sets, norms, d, w, wt, e, s, kmat, curly, resid)


def build_all_modes(pd: PatchDecomposition, V: Potential, sc: ScalingConstants, delta: float = DEFAULT_DELTA, modes: Sequence | None = None, report: list | None = None) -> dict[tuple[int, int, int], RpaBlocks]:
    """Blocks for every k in ``modes`` (default: the northern half of supp Vhat)."""
    modes = V.gamma_nor if modes is None else [tuple(int(c) for c in _vec(k)) for k in modes]
    out = {}
    for k in modes:
        b = build_mode(k, pd, V, sc, delta, report=report)
        if b is not None:
            out[b.k] = b
    return out


def rpa_energy_correction(blocks: Mapping[tuple, RpaBlocks], sc: ScalingConstants) -> tuple[float, dict]:
    """sum_k hbar kappa |k| tr(E - D - W), and the per-mode terms."""
    per = {k: sc.hbar * sc.kappa * b.knorm * b.correlation_trace() for k, b in blocks.items()}
    return float(sum(per.values())), per


def excitation_spectrum(b: RpaBlocks, sc: ScalingConstants) -> np.ndarray:
    """Eigenvalues of 2 hbar kappa |k| E(k), ascending."""
    return np.sort(np.linalg.eigvalsh(2 * sc.hbar * sc.kappa * b.knorm * b.e))


def linearization_residual(k, alpha: int, pd: PatchDecomposition, sc: ScalingConstants) -> float:
    """Worst relative error of e(p) - e(h) ~ 2 hbar^2 k_F k.w_a over the pairs of patch alpha."""
    pairs = pair_list(k, alpha, pd)
    if not pairs:
        raise ScenarioError(f"patch {alpha} has no pairs for k = {tuple(_vec(k))}")
    kf, h2 = pd.fb.kf, sc.hbar**2
    lin = 2 * h2 * kf * float(pd.unit_centers[alpha] @ _vec(k))
    kf2 = float(pd.fb.kf_sq)
    worst = 0.0
    for p, h in pairs:
        ep = h2 * abs(sum(c * c for c in p) - kf2)
        eh = h2 * abs(sum(c * c for c in h) - kf2)
        worst = max(worst, abs(ep + eh - lin) / abs(lin))
    return worst


@dataclass
class BosonState:
    """Amplitudes (k, alpha) -> complex, stored as one vector over I_k per mode."""

    amplitudes: dict[tuple[int, int, int], np.ndarray]

    def norm(self) -> float:
        return math.sqrt(sum(float(np.vdot(v, v).real) for v in self.amplitudes.values()))

    def normalized(self) -> "BosonState":
        nrm = self.norm()
        if nrm == 0:
            raise ScenarioError("cannot normalise the zero boson state")
        return BosonState({k: v / nrm for k, v in self.amplitudes.items()})


def boson_evolve(phi: BosonState, blocks: Mapping[tuple, RpaBlocks], sc: ScalingConstants, t: float) -> BosonState:
    """phi(k) -> exp(-i t 2 kappa |k| curlyK(k)) phi(k) on every mode."""
    out = {}
    for k, v in phi.amplitudes.items():
        b = blocks.get(k)
        if b is None:
            raise ScenarioError(f"boson state has weight on unbuilt mode {k}")
        v = np.asarray(v, dtype=complex)
        if v.shape != (b.size,):
            raise ScenarioError(f"amplitude for mode {k} has length {v.shape}, expected {b.size}")
        ev, vec = np.linalg.eigh(b.curly)
        out[k] = vec @ (np.exp(-1j * t * 2 * sc.kappa * b.knorm * ev) * (vec.conj().T @ v))
    return BosonState(out)


def m_condition(m: int, n: int, delta: float) -> tuple[float, float]:
    """(m^3 (2m-1)!!, N^delta); the construction wants the first much smaller."""
    dfact = math.prod(range(2 * m - 1, 0, -2))
    return float(m**3 * dfact), float(n**delta)


@dataclass(frozen=True)
class PairExcitationSpec:
    """c*(phi_1) ... c*(phi_m) Omega, to be normalised when materialised."""

    states: tuple[BosonState, ...]
    m_condition_ok: bool

    @property
    def m(self) -> int:
        return len(self.states)


def pair_excitation_state(phis: Sequence[BosonState], n: int, delta: float = DEFAULT_DELTA) -> PairExcitationSpec:
    if not phis:
        raise ScenarioError("a pair excitation needs at least one boson state")
    for i, phi in enumerate(phis):
        if abs(phi.norm() - 1.0) > 1e-10:
            raise ScenarioError(f"boson state {i} is not normalised (norm {phi.norm():.6g})")
    lhs, rhs = m_condition(len(phis), n, delta)
    ok = lhs < rhs
    if not ok:
        warnings.warn(f"m^3 (2m-1)!! = {lhs:g} is not small against N^delta = {rhs:.4g}", RuntimeWarning)
    return PairExcitationSpec(tuple(phis), ok)
