"""Momentum lattice, Fermi ball, scaling constants and interaction potentials.

Everything here lives on the integer lattice Z^d dual to the torus
[0, 2*pi)^d.  Plane waves are normalised as (2*pi)^(-d/2) exp(i k.x) and a
potential is stored through its Fourier coefficients,

    V(x) = sum_k Vhat(k) exp(i k.x),

so that the two-body matrix element <p+k, q-k| V(x1 - x2) |p, q> is exactly
Vhat(k).  With this convention every convolution constant is 1: the direct
term, the exchange term and the Vlasov force all use Vhat(q) without extra
factors of 2*pi.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from .errors import ScenarioError

__all__ = [
    "MomentumLattice",
    "FermiBall",
    "HbarConvention",
    "ScalingConstants",
    "Potential",
    "build_lattice",
    "build_fermi_ball",
    "scaling_constants",
    "dispersion",
    "make_potential",
    "unit_ball_kappa",
    "parse_vector",
]


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value)
    return Fraction(float(value))


def _check_dim(dim: int) -> int:
    if dim not in (1, 2, 3):
        raise ScenarioError(f"dimension must be 1, 2 or 3, got {dim!r}")
    return int(dim)


def _points_in_ball(dim: int, radius_sq: Fraction) -> np.ndarray:
    rmax = math.isqrt(math.floor(radius_sq))
    axis = range(-rmax, rmax + 1)
    pts = [p for p in itertools.product(axis, repeat=dim) if sum(c * c for c in p) <= radius_sq]
    # itertools.product already yields lexicographic order
    return np.array(pts, dtype=np.int64).reshape(-1, dim)


@dataclass(frozen=True, eq=False)
class MomentumLattice:
    """Integer momenta k in Z^d with |k| <= cutoff, in lexicographic order."""

    dim: int
    cutoff: float
    points: np.ndarray = field(repr=False)
    _index: dict = field(repr=False, default_factory=dict)
    _shift_cache: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        self.points.setflags(write=False)
        if not self._index:
            self._index.update({tuple(int(c) for c in p): i for i, p in enumerate(self.points)})

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MomentumLattice):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.points, other.points)

    def __hash__(self) -> int:
        return hash((self.dim, self.points.tobytes()))

    @property
    def sq_norms(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.points, self.points)

    @property
    def axis_extent(self) -> int:
        """Largest |k_i| over all points and axes."""
        return int(np.abs(self.points).max()) if len(self.points) else 0

    def index_of(self, k) -> int:
        """Index of ``k`` or -1 when it is not on the lattice."""
        return self._index.get(tuple(int(c) for c in np.atleast_1d(k)), -1)

    def __contains__(self, k) -> bool:
        return self.index_of(k) >= 0

    def shifted(self, q) -> np.ndarray:
        """``out[i]`` is the index of ``points[i] + q`` (or -1 outside the lattice)."""
        key = tuple(int(c) for c in np.atleast_1d(q))
        cached = self._shift_cache.get(key)
        if cached is None:
            cached = np.array([self._index.get(tuple(int(a + b) for a, b in zip(p, key)), -1) for p in self.points])
            cached.setflags(write=False)
            self._shift_cache[key] = cached
        return cached

    def digest(self) -> bytes:
        """SHA-256 of the ordered point list, used to tag exported matrices."""
        import hashlib

        return hashlib.sha256(np.ascontiguousarray(self.points, dtype="<i8").tobytes()).digest()


def build_lattice(dim: int, cutoff) -> MomentumLattice:
    """All k in Z^d with |k| <= cutoff.  Contains 0 and is closed under k -> -k."""
    dim = _check_dim(dim)
    c = _as_fraction(cutoff)
    if c < 0:
        raise ScenarioError(f"lattice cutoff must be non-negative, got {cutoff!r}")
    return MomentumLattice(dim, float(c), _points_in_ball(dim, c * c))


@dataclass(frozen=True, eq=False)
class FermiBall:
    """B_F = {k in Z^d : |k| <= k_F}; N = |B_F|."""

    kf: float
    dim: int
    kf_sq: Fraction
    members: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.members)

    def contains(self, k) -> bool:
        k = np.atleast_1d(np.asarray(k, dtype=np.int64))
        return int(k @ k) <= self.kf_sq

    def mask(self, points: np.ndarray) -> np.ndarray:
        """Boolean membership of each row of an integer point array."""
        sq = np.einsum("ij,ij->i", points, points)
        # exact: integer |k|^2 against the rational k_F^2
        return sq * self.kf_sq.denominator <= self.kf_sq.numerator

    def complement(self, lattice: MomentumLattice) -> np.ndarray:
        """Points of ``lattice`` outside the ball."""
        return lattice.points[~self.mask(lattice.points)]

    def projector(self, lattice: MomentumLattice) -> np.ndarray:
        """Diagonal 0/1 matrix of the plane-wave Fermi ball in ``lattice``."""
        m = self.mask(lattice.points)
        if m.sum() != self.n:
            raise ScenarioError("lattice does not contain the whole Fermi ball")
        return np.diag(m.astype(float)).astype(complex)


def build_fermi_ball(kf, dim: int = 3) -> FermiBall:
    dim = _check_dim(dim)
    kf_frac = _as_fraction(kf)
    if kf_frac <= 0:
        raise ScenarioError(f"Fermi momentum must be positive, got {kf!r}")
    kf_sq = kf_frac * kf_frac
    members = _points_in_ball(dim, kf_sq)
    members.setflags(write=False)
    return FermiBall(float(kf_frac), dim, kf_sq, members)


class HbarConvention(str, enum.Enum):
    BULK = "bulk"  # hbar = N^(-1/d)
    RPA = "rpa"  # hbar = kappa / k_F, d = 3 only


def unit_ball_kappa(dim: int) -> float:
    """kappa_d = |unit ball|^(-1/d), so that N ~ (k_F / kappa_d)^d.  (3/4pi)^(1/3) for d = 3."""
    vol = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}[_check_dim(dim)]
    return vol ** (-1.0 / dim)


@dataclass(frozen=True)
class ScalingConstants:
    hbar: float
    kappa: float
    convention: HbarConvention
    dim: int = 3

    def __post_init__(self):
        if not self.hbar > 0:
            raise ScenarioError(f"hbar must be positive, got {self.hbar!r}")


def scaling_constants(fb: FermiBall, convention: HbarConvention | str = HbarConvention.BULK) -> ScalingConstants:
    convention = HbarConvention(convention)
    kappa = unit_ball_kappa(fb.dim)
    if convention is HbarConvention.BULK:
        hbar = fb.n ** (-1.0 / fb.dim)
    else:
        if fb.dim != 3:
            raise ScenarioError("the RPA hbar convention is defined for d = 3 only")
        hbar = kappa / fb.kf
    return ScalingConstants(hbar, kappa, convention, fb.dim)


def dispersion(k, fb: FermiBall, sc: ScalingConstants) -> float:
    """Pair excitation energy e(k) = hbar^2 | |k|^2 - k_F^2 |."""
    k = np.atleast_1d(np.asarray(k, dtype=np.int64))
    return sc.hbar**2 * abs(float(int(k @ k) - fb.kf_sq))


def parse_vector(key, dim: int | None = None) -> tuple[int, ...]:
    """Accept 3, (1, 0, 0), [1, 0, 0] or "1,0,0" and return an int tuple."""
    if isinstance(key, str):
        parts = [s for s in key.replace("(", "").replace(")", "").replace(" ", "").split(",") if s]
        try:
            vec = tuple(int(s) for s in parts)
        except ValueError as exc:
            raise ScenarioError(f"cannot read lattice vector {key!r}") from exc
    elif isinstance(key, (int, np.integer)):
        vec = (int(key),)
    else:
        vec = tuple(int(c) for c in key)
    if dim is not None and len(vec) != dim:
        raise ScenarioError(f"lattice vector {key!r} has dimension {len(vec)}, expected {dim}")
    return vec


def _is_northern(k: tuple[int, ...]) -> bool:
    # last nonzero component positive: k3 > 0, or k3 = 0 and k2 > 0, ...
    for c in reversed(k):
        if c != 0:
            return c > 0
    return False


@dataclass(frozen=True, eq=False)
class Potential:
    """Finitely supported, even Fourier coefficients k -> Vhat(k)."""

    dim: int
    coeffs: Mapping[tuple[int, ...], float] = field(repr=False)

    def __call__(self, k) -> float:
        return self.coeffs.get(parse_vector(k) if not isinstance(k, tuple) else k, 0.0)

    def items(self) -> Iterable[tuple[tuple[int, ...], float]]:
        return sorted(self.coeffs.items())

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def support(self) -> list[tuple[int, ...]]:
        return sorted(self.coeffs)

    @property
    def gamma_nor(self) -> list[tuple[int, ...]]:
        """Half of supp Vhat minus the origin, chosen by the sign of the last nonzero component."""
        return [k for k in self.support if _is_northern(k)]

    @property
    def support_radius(self) -> float:
        """max |k| over the support (0 for the free potential)."""
        return max((math.sqrt(sum(c * c for c in k)) for k in self.coeffs), default=0.0)

    @property
    def support_diameter(self) -> float:
        pts = np.array(self.support, dtype=float).reshape(-1, self.dim)
        if len(pts) < 2:
            return 0.0
        diff = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((diff**2).sum(-1)).max())

    def scaled(self, s: float) -> "Potential":
        return make_potential({k: s * v for k, v in self.coeffs.items()}, dim=self.dim)

    def to_dict(self) -> dict[str, float]:
        return {",".join(str(c) for c in k): float(v) for k, v in self.items()}


def make_potential(coeffs: Mapping, dim: int | None = None, nonnegative: bool = False, atol: float = 0.0) -> Potential:
    """Validate a coefficient map and build a :class:`Potential`.

    ``nonnegative=True`` additionally enforces Vhat >= 0, as required by the
    bosonization pipeline.  Zero coefficients are dropped from the support.
    """
    parsed: dict[tuple[int, ...], float] = {}
    for key, value in dict(coeffs).items():
        vec = parse_vector(key, dim)
        if dim is None:
            dim = len(vec)
        value = float(value)
        if not math.isfinite(value):
            raise ScenarioError(f"Vhat{vec} is not finite")
        if vec in parsed:
            raise ScenarioError(f"duplicate coefficient for k = {vec}")
        if value != 0.0:
            parsed[vec] = value
    if dim is None:
        dim = 3
    _check_dim(dim)
    for vec, value in parsed.items():
        neg = tuple(-c for c in vec)
        partner = parsed.get(neg, 0.0)
        if abs(partner - value) > atol:
            raise ScenarioError(
                f"potential violates the symmetry rule Vhat(k) = Vhat(-k): "
                f"Vhat{vec} = {value} but Vhat{neg} = {partner}"
            )
        if nonnegative and value < 0:
            raise ScenarioError(f"potential must be non-negative here, Vhat{vec} = {value}")
    return Potential(dim, parsed)
