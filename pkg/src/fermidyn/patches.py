"""Decomposition of the shell around the Fermi sphere into separated patches.

The northern hemisphere of directions is cut into P = M/2 cells of equal
solid angle by a zonal construction:

* P = 1: the whole hemisphere;
* P = 2, 3: one band split into P azimuthal sectors;
* P >= 4: a polar cap of solid angle 2*pi/P followed by collars.  Collar
  sizes are rounded with carry so the cell counts add up, and collar
  boundaries are then placed so that every cell has exactly the same area.

Southern patches are point reflections of northern ones, so patch
``alpha + M/2`` is ``-patch alpha``.  Shell points closer than a margin to
the boundary surfaces of their cell (cones of constant polar angle, meridian
planes and the equator) are discarded; the margin grows until every pair of
points from different patches is further apart than the required corridor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ScenarioError
from .lattice import FermiBall, Potential

__all__ = ["PatchDecomposition", "build_patches", "shell_points", "zonal_cells"]


@dataclass(frozen=True)
class _Cell:
    cos_top: float  # cos of the upper polar boundary (1.0 for the pole)
    cos_bottom: float
    phi0: float
    width: float  # azimuthal width; 2*pi for an undivided cap or band

    @property
    def theta_top(self) -> float:
        return math.acos(max(-1.0, min(1.0, self.cos_top)))

    @property
    def theta_bottom(self) -> float:
        return math.acos(max(-1.0, min(1.0, self.cos_bottom)))


def zonal_cells(p: int) -> list[_Cell]:
    """Equal-area cells covering the northern hemisphere (cos theta in [0, 1])."""
    if p < 1:
        raise ScenarioError("need at least one cell per hemisphere")
    if p == 1:
        return [_Cell(1.0, 0.0, 0.0, 2 * math.pi)]
    if p <= 3:
        w = 2 * math.pi / p
        return [_Cell(1.0, 0.0, j * w, w) for j in range(p)]
    cap_cos = 1.0 - 1.0 / p
    theta_cap = math.acos(cap_cos)
    side = math.sqrt(2 * math.pi / p)
    n_collars = max(1, round((math.pi / 2 - theta_cap) / side))
    edges = np.linspace(theta_cap, math.pi / 2, n_collars + 1)
    ideal = [p * (math.cos(a) - math.cos(b)) for a, b in zip(edges[:-1], edges[1:])]
    counts, carry = [], 0.0
    for x in ideal:
        c = max(1, round(x + carry))
        carry += x - c
        counts.append(c)
    counts[-1] += (p - 1) - sum(counts)
    if counts[-1] < 1:
        raise ScenarioError(f"zonal partition failed for {p} cells per hemisphere")
    cells = [_Cell(1.0, cap_cos, 0.0, 2 * math.pi)]
    top = cap_cos
    for c in counts:
        bottom = top - c / p
        if abs(bottom) < 1e-12:
            bottom = 0.0
        w = 2 * math.pi / c
        cells.extend(_Cell(top, bottom, j * w, w) for j in range(c))
        top = bottom
    return cells


def shell_points(fb: FermiBall, radius: float) -> np.ndarray:
    """Integer points q with k_F - radius < |q| <= k_F + radius."""
    kf = fb.kf
    rmax = int(math.floor(kf + radius))
    ax = np.arange(-rmax, rmax + 1)
    grid = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    r = np.sqrt((grid**2).sum(1))
    keep = (r > kf - radius + 1e-12) & (r <= kf + radius + 1e-12)
    return grid[keep]


def _cell_index(q: np.ndarray, cells: list[_Cell]) -> np.ndarray:
    """Cell of every northern point (z > 0)."""
    r = np.linalg.norm(q, axis=1)
    cz = q[:, 2] / r
    phi = np.mod(np.arctan2(q[:, 1], q[:, 0]), 2 * math.pi)
    out = np.full(len(q), -1)
    for i, c in enumerate(cells):
        lo = 0.0 if c.cos_bottom == 0.0 else c.cos_bottom
        inside = (cz <= c.cos_top + 1e-15) & (cz > lo) if c.cos_top < 1.0 else cz > lo
        if c.width < 2 * math.pi:
            rel = np.mod(phi - c.phi0, 2 * math.pi)
            inside &= rel < c.width
        out[inside & (out < 0)] = i
    return out


def _boundary_distance(q: np.ndarray, cell: _Cell) -> np.ndarray:
    """Lower bound on the distance from each point to the boundary of ``cell``."""
    r = np.linalg.norm(q, axis=1)
    theta = np.arccos(np.clip(q[:, 2] / r, -1, 1))
    dist = np.full(len(q), np.inf)
    for tb, present in ((cell.theta_top, cell.cos_top < 1.0), (cell.theta_bottom, True)):
        if present:
            dtheta = np.minimum(np.abs(theta - tb), math.pi / 2)
            dist = np.minimum(dist, r * np.sin(dtheta))
    if cell.width < 2 * math.pi:
        phi = np.arctan2(q[:, 1], q[:, 0])
        for pb in (cell.phi0, cell.phi0 + cell.width):
            dphi = np.abs(np.angle(np.exp(1j * (phi - pb))))
            dist = np.minimum(dist, r * np.sin(theta) * np.sin(np.minimum(dphi, math.pi / 2)))
    return dist


@dataclass(frozen=True, eq=False)
class PatchDecomposition:
    """Patches B_1..B_M of the Fermi shell with centres omega_alpha, |omega_alpha| = k_F."""

    fb: FermiBall
    m: int
    members: tuple[np.ndarray, ...] = field(repr=False)
    centers: np.ndarray = field(repr=False)
    corridor: float
    required_corridor: float
    shell_radius: float
    _lookup: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self._lookup:
            for a, pts in enumerate(self.members):
                self._lookup.update({tuple(int(c) for c in p): a for p in pts})

    def patch_of(self, q) -> int:
        """Patch index of ``q`` or -1 (corridor, or off the shell)."""
        return self._lookup.get(tuple(int(c) for c in q), -1)

    def contains(self, q, alpha: int) -> bool:
        return self.patch_of(q) == alpha

    def reflect(self, alpha: int) -> int:
        half = self.m // 2
        return (alpha + half) % self.m

    @property
    def unit_centers(self) -> np.ndarray:
        return self.centers / self.fb.kf

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(p) for p in self.members])

    def degenerate_patches(self) -> list[int]:
        """Patches whose size is off the mean by more than a factor 4."""
        c = self.counts
        mean = c.mean()
        return [a for a, n in enumerate(c) if n == 0 or n > 4 * mean or 4 * n < mean]

    def min_separation(self) -> tuple[float, int, int]:
        """Smallest distance between points of different patches and the pair realising it."""
        return _min_separation(self.members)


def _min_separation(members) -> tuple[float, int, int]:
    best = (math.inf, -1, -1)
    trees = [cKDTree(p) if len(p) else None for p in members]
    for a in range(len(members)):
        for b in range(a + 1, len(members)):
            if trees[a] is None or trees[b] is None:
                continue
            d, _ = trees[b].query(members[a], k=1)
            dmin = float(np.min(d))
            if dmin < best[0]:
                best = (dmin, a, b)
    return best


def build_patches(fb: FermiBall, m: int, V: Potential, margin_step: float = 0.5, max_rounds: int = 40) -> PatchDecomposition:
    """Equal-area zonal patches, reflected to the south, separated by corridors.

    The corridor must be wider than twice the support radius of Vhat, so that no
    momentum transfer in the support links two different patches.
    """
    if fb.dim != 3:
        raise ScenarioError("patch decompositions are built in three dimensions")
    if m < 2 or m % 2:
        raise ScenarioError(f"patch count must be even and >= 2, got {m}")
    radius = V.support_radius
    need = 2 * radius
    shell_r = max(radius, 1.0)
    pts = shell_points(fb, shell_r)
    north = pts[pts[:, 2] > 0]
    if len(north) == 0:
        raise ScenarioError("the Fermi shell is empty")
    cells = zonal_cells(m // 2)
    owner = _cell_index(north.astype(float), cells)
    dist = np.full(len(north), np.inf)
    for i, c in enumerate(cells):
        sel = owner == i
        dist[sel] = _boundary_distance(north[sel].astype(float), c)
    dist = np.minimum(dist, north[:, 2])  # the equator separates each patch from its reflection
    margin = 0.5 * need + 1e-9
    for _ in range(max_rounds):
        keep = dist >= margin
        north_members = [north[keep & (owner == i)] for i in range(len(cells))]
        members = north_members + [-p for p in north_members]
        if any(len(p) == 0 for p in north_members):
            empty = [i for i, p in enumerate(north_members) if len(p) == 0]
            raise ScenarioError(
                f"corridors of width > {need:g} leave patch {empty[0]} empty at k_F = {fb.kf}, M = {m}; "
                "use fewer patches or a larger Fermi momentum"
            )
        sep, a, b = _min_separation(members)
        if sep > need:
            break
        margin += margin_step
    else:
        raise ScenarioError(f"patches {a} and {b} are only {sep:.3f} apart; corridor must exceed {need:g}")
    centers = []
    for p in members:
        mean = p.mean(axis=0)
        centers.append(fb.kf * mean / np.linalg.norm(mean))
    return PatchDecomposition(fb, m, tuple(np.ascontiguousarray(p) for p in members), np.array(centers), sep, need, shell_r)
