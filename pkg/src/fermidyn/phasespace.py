"""Phase-space densities on the torus: Wigner/Weyl maps and the Vlasov flow.

Grid conventions
----------------
Positions: ``nx`` points per axis on [0, 2*pi).  Momenta: ``2*J + 1`` points
per axis, p_j = j * dp with j = -J..J.  For densities coming from a density
matrix, dp = hbar/2: the Wigner function of a torus state is a sum of point
masses at the half-lattice momenta hbar*(m + n)/2, and each grid value stores
the mass of its cell divided by the cell volume.  With this choice

    sum(f) * cell_volume = hbar^d tr(gamma),

and ``weyl_quantize`` is the exact inverse of ``wigner_transform`` whenever
nx >= 4*K + 1 (K = largest lattice momentum component).

The Vlasov equation

    d_t f + 2 p . grad_x f = -F . grad_p f,   F = -grad(V * rho_f),

is integrated by Strang splitting.  The transport velocity is 2p because the
kinetic energy is p^2 (no 1/2m).  Transport is an exact spectral shift in x;
the force kick is a cubic B-spline shift in p, applied in Fourier space so it
conserves mass to rounding.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .density import DensityMatrix
from .errors import NumericalError, ScenarioError
from .lattice import MomentumLattice, Potential

__all__ = [
    "PhaseGrid",
    "PhaseSpaceDensity",
    "wigner_grid",
    "wigner_transform",
    "weyl_quantize",
    "w11_norm",
    "mean_field_force",
    "vlasov_evolve",
    "semiclassical_observable",
    "phase_space_observable",
    "kinetic_moment",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhaseGrid:
    dim: int
    nx: int
    jmax: int
    dp: float
    hbar: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ScenarioError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if self.nx < 1 or self.jmax < 0 or not self.dp > 0 or not self.hbar > 0:
            raise ScenarioError(f"invalid phase-space grid {self}")

    @property
    def n_p(self) -> int:
        return 2 * self.jmax + 1

    @property
    def dx(self) -> float:
        return 2 * math.pi / self.nx

    @property
    def p_min(self) -> float:
        return -self.jmax * self.dp

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(self.nx)

    @property
    def p(self) -> np.ndarray:
        return self.dp * np.arange(-self.jmax, self.jmax + 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nx,) * self.dim + (self.n_p,) * self.dim

    @property
    def cell_volume(self) -> float:
        return (self.dx * self.dp) ** self.dim

    @property
    def x_axes(self) -> tuple[int, ...]:
        return tuple(range(self.dim))

    @property
    def p_axes(self) -> tuple[int, ...]:
        return tuple(range(self.dim, 2 * self.dim))

    def axis_array(self, values: np.ndarray, axis: int) -> np.ndarray:
        """Reshape a 1-D array so it broadcasts along ``axis`` of a grid array."""
        shape = [1] * (2 * self.dim)
        shape[axis] = -1
        return values.reshape(shape)

    @property
    def is_wigner_grid(self) -> bool:
        return abs(self.dp - 0.5 * self.hbar) <= 1e-12 * self.hbar


@dataclass(frozen=True, eq=False)
class PhaseSpaceDensity:
    """Real density f(x, p) sampled on a :class:`PhaseGrid`."""

    values: np.ndarray = field(repr=False)
    grid: PhaseGrid

    def __post_init__(self):
        v = np.asarray(self.values)
        if np.iscomplexobj(v):
            raise ScenarioError("phase-space densities are real")
        v = v.astype(float)
        if v.shape != self.grid.shape:
            raise ScenarioError(f"values have shape {v.shape}, grid expects {self.grid.shape}")
        object.__setattr__(self, "values", v)

    @property
    def hbar(self) -> float:
        return self.grid.hbar

    @property
    def weights(self) -> float:
        """Quadrature weight of every grid point (uniform grid)."""
        return self.grid.cell_volume

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    @property
    def has_negative_part(self) -> bool:
        return bool((self.values < 0).any())

    def negative_mass(self) -> float:
        return float(-self.values[self.values < 0].sum() * self.grid.cell_volume)

    def position_density(self) -> np.ndarray:
        """rho_f(x) = int f(x, p) dp."""
        return self.values.sum(axis=self.grid.p_axes) * self.grid.dp**self.grid.dim

    def with_values(self, values: np.ndarray) -> "PhaseSpaceDensity":
        return PhaseSpaceDensity(values, self.grid)


def wigner_grid(lattice: MomentumLattice, hbar: float, data_extent: int | None = None, nx: int | None = None, jmax: int | None = None) -> PhaseGrid:
    """Grid that represents every density matrix on ``lattice`` exactly.

    Momentum bounds default to twice the largest |hbar k| present in the data
    (``data_extent`` in lattice units), and never below what the lattice needs.
    """
    kax = lattice.axis_extent
    data_extent = kax if data_extent is None else data_extent
    if nx is None:
        nx = 4 * kax + 1
    if jmax is None:
        jmax = max(2 * kax, 4 * data_extent)
    return PhaseGrid(lattice.dim, int(nx), int(jmax), 0.5 * hbar, hbar)


def _data_extent(m: np.ndarray, lattice: MomentumLattice, rel: float = 1e-12) -> int:
    diag = np.abs(np.diag(m))
    keep = diag > rel * max(1.0, float(diag.max(initial=0.0)))
    if not keep.any():
        return 0
    return int(np.abs(lattice.points[keep]).max())


def _pair_indices(lattice: MomentumLattice):
    pts = lattice.points
    j = pts[:, None, :] + pts[None, :, :]
    q = pts[:, None, :] - pts[None, :, :]
    return j, q


def wigner_transform(gamma: DensityMatrix, grid: PhaseGrid | None = None) -> PhaseSpaceDensity:
    """Wigner function of ``gamma`` realised as an exact finite Fourier sum.

    Each entry gamma_{m,n} contributes 2^d (2 pi)^(-d) gamma_{m,n} e^{i(m-n).x}
    to the momentum cell at hbar (m + n)/2.
    """
    lattice, hbar = gamma.lattice, gamma.hbar
    m = gamma.matrix
    if grid is None:
        grid = wigner_grid(lattice, hbar, _data_extent(m, lattice))
    d = lattice.dim
    if not grid.is_wigner_grid:
        raise ScenarioError(f"momentum spacing {grid.dp} must equal hbar/2 = {hbar / 2}")
    kax = lattice.axis_extent
    if grid.nx < 4 * kax + 1:
        raise ScenarioError(f"spatial grid of {grid.nx} points aliases lattice momenta up to {kax}; need {4 * kax + 1}")
    j, q = _pair_indices(lattice)
    nz = np.abs(m) > 0
    if (np.abs(j[nz]) > grid.jmax).any():
        raise ScenarioError(f"momentum grid (jmax = {grid.jmax}) too small for hbar * lattice momenta")
    coeff = np.zeros(grid.shape, dtype=complex)
    index = tuple(q[nz][:, a] % grid.nx for a in range(d)) + tuple(j[nz][:, a] + grid.jmax for a in range(d))
    np.add.at(coeff, index, m[nz] * (2.0 / (2 * math.pi)) ** d)
    vals = np.fft.ifftn(coeff, axes=grid.x_axes) * grid.nx**d
    return PhaseSpaceDensity(vals.real, grid)


def _parity_project(coeff: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Move Fourier content sitting on the wrong momentum sublattice to its neighbours.

    A plane-wave density matrix can only produce x-frequency q at momentum
    index j with j = q (mod 2) on every axis.  Content violating this (created
    by interpolation during Vlasov kicks) is split evenly between j - 1 and
    j + 1, which preserves mass and first moments.  Representable data is left
    untouched.
    """
    d = grid.dim
    qs = np.rint(np.fft.fftfreq(grid.nx) * grid.nx).astype(int)
    js = np.arange(-grid.jmax, grid.jmax + 1)
    out = coeff
    for a in range(d):
        qa = grid.axis_array(qs, a)
        ja = grid.axis_array(js, d + a)
        bad = ((ja - qa) % 2).astype(bool)
        moved = np.where(bad, out, 0.0)
        out = out - moved + 0.5 * (np.roll(moved, 1, axis=d + a) + np.roll(moved, -1, axis=d + a))
    return out


def weyl_quantize(f: PhaseSpaceDensity, lattice: MomentumLattice) -> DensityMatrix:
    """Density matrix with Wigner function ``f`` (after parity projection).

    gamma_{m,n} = (pi)^d * (x-Fourier coefficient of f at frequency m - n,
    momentum cell hbar (m + n)/2).  Content at momenta beyond the lattice is
    dropped.
    """
    grid = f.grid
    d = grid.dim
    if lattice.dim != d:
        raise ScenarioError("lattice and phase-space grid have different dimensions")
    if not grid.is_wigner_grid:
        raise ScenarioError(f"momentum spacing {grid.dp} must equal hbar/2 to quantize")
    kax = lattice.axis_extent
    if grid.nx < 4 * kax + 1:
        raise ScenarioError(f"spatial grid of {grid.nx} points cannot resolve lattice momenta up to {kax}")
    coeff = np.fft.fftn(f.values, axes=grid.x_axes) / grid.nx**d
    coeff = _parity_project(coeff, grid)
    j, q = _pair_indices(lattice)
    inside = (np.abs(j) <= grid.jmax).all(axis=-1)
    index = tuple(np.where(inside, q[..., a] % grid.nx, 0) for a in range(d)) + tuple(
        np.where(inside, j[..., a] + grid.jmax, 0) for a in range(d)
    )
    gamma = np.where(inside, coeff[index], 0.0) * math.pi**d
    return DensityMatrix(0.5 * (gamma + gamma.conj().T), lattice, grid.hbar)


def w11_norm(f: PhaseSpaceDensity) -> float:
    """sum_{|b| <= 1} int |grad^b f|: centred differences, periodic in x, one-sided at the p edges."""
    g = f.grid
    v = f.values
    total = np.abs(v).sum()
    for a in g.x_axes:
        total += np.abs((np.roll(v, -1, axis=a) - np.roll(v, 1, axis=a)) / (2 * g.dx)).sum()
    for a in g.p_axes:
        if v.shape[a] > 1:
            total += np.abs(np.gradient(v, g.dp, axis=a)).sum()
    return float(total * g.cell_volume)


def _potential_fourier(V: Potential, grid: PhaseGrid) -> list[tuple[tuple[int, ...], float]]:
    out = []
    for q, vq in V.items():
        if any(2 * abs(c) >= grid.nx for c in q):
            raise ScenarioError(f"potential mode {q} is not resolved by {grid.nx} spatial points")
        out.append((tuple(c % grid.nx for c in q), vq))
    return out


def _x_frequencies(grid: PhaseGrid) -> list[np.ndarray]:
    qs = np.fft.fftfreq(grid.nx) * grid.nx
    return [qs.reshape([-1 if b == a else 1 for b in range(grid.dim)]) for a in range(grid.dim)]


def mean_field_force(f: PhaseSpaceDensity, V: Potential) -> np.ndarray:
    """F = -grad(V * rho_f) on the spatial grid, shape (d, nx, ..., nx)."""
    g = f.grid
    d = g.dim
    out = np.zeros((d,) + (g.nx,) * d)
    if V.is_zero:
        return out
    rho_hat = np.fft.fftn(f.position_density()) / g.nx**d
    phi_hat = np.zeros_like(rho_hat)
    for idx, vq in _potential_fourier(V, g):
        phi_hat[idx] += vq * (2 * math.pi) ** d * rho_hat[idx]
    for a, qa in enumerate(_x_frequencies(g)):
        out[a] = (np.fft.ifftn(-1j * qa * phi_hat) * g.nx**d).real
    return out


def _cubic_bspline(t: np.ndarray) -> np.ndarray:
    t = np.abs(t)
    return np.where(t < 1, 2.0 / 3.0 - t**2 + 0.5 * t**3, np.where(t < 2, (2 - t) ** 3 / 6.0, 0.0))


def _bspline_shift(values: np.ndarray, shift: np.ndarray, axis: int) -> np.ndarray:
    """Periodic cubic B-spline interpolation of ``values`` at index - shift along ``axis``.

    ``shift`` (in grid cells) broadcasts against ``values`` with length 1 along
    ``axis``.  In Fourier space the operation multiplies each mode by
    ghat_shift(w) / bhat(w); the zero mode is multiplied by exactly 1.
    """
    n = values.shape[axis]
    w = 2 * math.pi * np.fft.fftfreq(n)
    wshape = [1] * values.ndim
    wshape[axis] = n
    w = w.reshape(wshape)
    base = np.floor(shift)
    frac = shift - base
    ghat = np.zeros(np.broadcast_shapes(shift.shape, w.shape), dtype=complex)
    for off in (-1, 0, 1, 2):
        ghat += _cubic_bspline(off - frac) * np.exp(-1j * w * off)
    ghat *= np.exp(-1j * w * base)
    bhat = (4.0 + 2.0 * np.cos(w)) / 6.0
    return np.fft.ifft(np.fft.fft(values, axis=axis) * (ghat / bhat), axis=axis).real


def _transport_phase(grid: PhaseGrid, tau: float) -> np.ndarray:
    phase = np.zeros(grid.shape)
    for a, qa in enumerate(_x_frequencies(grid)):
        qa = qa.reshape(qa.shape + (1,) * grid.dim)
        phase = phase + qa * 2 * grid.axis_array(grid.p, grid.dim + a) * tau
    return np.exp(-1j * phase)


def _transport(values: np.ndarray, grid: PhaseGrid, phase: np.ndarray) -> np.ndarray:
    """f(x, p) -> f(x - 2 p tau, p), exact for band-limited data."""
    return np.fft.ifftn(np.fft.fftn(values, axes=grid.x_axes) * phase, axes=grid.x_axes).real


def _kick(values: np.ndarray, grid: PhaseGrid, force: np.ndarray, dt: float) -> np.ndarray:
    """f(x, p) -> f(x, p - F(x) dt)."""
    for a in range(grid.dim):
        shift = (force[a] * dt / grid.dp).reshape(force[a].shape + (1,) * grid.dim)
        values = _bspline_shift(values, shift, grid.dim + a)
    return values


def vlasov_evolve(
    f0: PhaseSpaceDensity,
    V: Potential,
    t_final: float,
    dt: float,
    observer: Callable[[float, PhaseSpaceDensity], None] | None = None,
    observe_every: int = 1,
) -> PhaseSpaceDensity:
    """Strang-split Vlasov flow: half transport, force kick, half transport.

    Consecutive half transports are fused.  ``observer(t, f)`` is called at
    t = 0 and every ``observe_every`` steps.
    """
    if dt <= 0:
        raise ScenarioError("dt must be positive")
    steps = int(round(t_final / dt))
    if steps and abs(steps * dt - t_final) > 1e-9 * max(1.0, abs(t_final)):
        raise ScenarioError(f"t_final = {t_final} is not a multiple of dt = {dt}")
    g = f0.grid
    if observer is not None:
        observer(0.0, f0)
    if steps == 0:
        return f0
    half = _transport_phase(g, 0.5 * dt)
    full = half * half
    kick_on = not V.is_zero
    force0 = mean_field_force(f0, V)
    max_shift = float(np.abs(force0).max(initial=0.0)) * dt / g.dp
    if max_shift > 1.0:
        warnings.warn(f"force kick moves {max_shift:.2f} momentum cells per step; consider a smaller dt", RuntimeWarning)
    v = _transport(f0.values, g, half)
    for step in range(1, steps + 1):
        if kick_on:
            v = _kick(v, g, mean_field_force(PhaseSpaceDensity(v, g), V), dt)
        last = step == steps
        wants = observer is not None and step % observe_every == 0
        if last or wants:
            done = _transport(v, g, half)
            if not np.isfinite(done).all():
                raise NumericalError(f"Vlasov solution blew up at step {step}")
            if wants:
                observer(step * dt, PhaseSpaceDensity(done, g))
            if last:
                return PhaseSpaceDensity(done, g)
        v = _transport(v, g, full)
        if not np.isfinite(v).all():
            raise NumericalError(f"Vlasov solution blew up at step {step}")
    raise AssertionError("unreachable")


def kinetic_moment(f: PhaseSpaceDensity) -> float:
    """sum |p|^2 f * cell volume."""
    g = f.grid
    p2 = sum(g.axis_array(g.p, g.dim + a) ** 2 for a in range(g.dim))
    return float((p2 * f.values).sum() * g.cell_volume)


def _integer_vector(alpha, dim: int) -> np.ndarray:
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if a.shape != (dim,):
        raise ScenarioError(f"alpha must have {dim} components")
    if not np.allclose(a, np.rint(a), rtol=0, atol=1e-12):
        raise ScenarioError("on the torus the position frequency alpha must be an integer vector")
    return np.rint(a).astype(np.int64)


def semiclassical_observable(gamma: DensityMatrix, alpha, beta, hbar: float | None = None) -> complex:
    """tr exp(i(alpha.x + beta.p)) gamma.

    On the torus the Weyl operator maps |k> to exp(i hbar beta.(k + alpha/2)) |k + alpha>,
    so the trace is sum_k exp(i hbar beta.(k + alpha/2)) gamma_{k, k+alpha}.
    """
    lattice = gamma.lattice
    hbar = gamma.hbar if hbar is None else hbar
    a = _integer_vector(alpha, lattice.dim)
    b = np.atleast_1d(np.asarray(beta, dtype=float))
    target = lattice.shifted(tuple(a))
    ok = np.flatnonzero(target >= 0)
    phases = np.exp(1j * hbar * (lattice.points[ok] + 0.5 * a) @ b)
    return complex((phases * gamma.matrix[ok, target[ok]]).sum())


def phase_space_observable(f: PhaseSpaceDensity, alpha, beta) -> complex:
    """hbar^(-d) int exp(i(alpha.x + beta.p)) f dx dp, the phase-space side of the same test."""
    g = f.grid
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    b = np.atleast_1d(np.asarray(beta, dtype=float))
    phase = np.zeros(g.shape)
    for i in range(g.dim):
        phase = phase + a[i] * g.axis_array(g.x, i) + b[i] * g.axis_array(g.p, g.dim + i)
    return complex((np.exp(1j * phase) * f.values).sum() * g.cell_volume / g.hbar**g.dim)
