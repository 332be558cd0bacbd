import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fermidyn.density import DensityMatrix
from fermidyn.errors import ScenarioError
from fermidyn.lattice import build_fermi_ball, build_lattice, make_potential
from fermidyn.phasespace import (
    PhaseGrid,
    PhaseSpaceDensity,
    mean_field_force,
    phase_space_observable,
    semiclassical_observable,
    vlasov_evolve,
    w11_norm,
    weyl_quantize,
    wigner_grid,
    wigner_transform,
)

from conftest import random_mixed, random_projector


def test_diagonal_state_is_homogeneous():
    lat = build_lattice(1, 4)
    occ = np.linspace(0, 1, len(lat))
    f = wigner_transform(DensityMatrix(np.diag(occ), lat, 0.25))
    assert np.allclose(f.values, f.values[:1])


@pytest.mark.parametrize("dim, cutoff", [(1, 5), (2, 2)])
def test_mass_is_hbar_power_times_trace(dim, cutoff):
    lat = build_lattice(dim, cutoff)
    gamma = random_mixed(lat, 0.3, seed=2)
    f = wigner_transform(gamma)
    assert f.mass() == pytest.approx(0.3**dim * gamma.trace, rel=1e-12)


def test_plane_wave_sits_at_its_momentum():
    lat = build_lattice(1, 4)
    i = lat.index_of((3,))
    m = np.zeros((len(lat),) * 2)
    m[i, i] = 1
    hbar = 0.2
    f = wigner_transform(DensityMatrix(m, lat, hbar))
    support = f.grid.p[np.abs(f.values).sum(axis=0) > 0]
    assert np.allclose(support, [3 * hbar])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), dim=st.integers(1, 2))
def test_weyl_inverts_wigner(seed, dim):
    lat = build_lattice(dim, 3 if dim == 1 else 2)
    gamma = random_mixed(lat, 0.4, seed=seed)
    back = weyl_quantize(wigner_transform(gamma), lat)
    assert np.abs(back.matrix - gamma.matrix).max() < 1e-12


def test_zero_maps_to_zero():
    lat = build_lattice(2, 2)
    grid = wigner_grid(lat, 0.5)
    assert np.all(weyl_quantize(PhaseSpaceDensity(np.zeros(grid.shape), grid), lat).matrix == 0)
    assert np.all(wigner_transform(DensityMatrix(np.zeros((len(lat),) * 2), lat, 0.5)).values == 0)


def test_fermi_ball_indicator_quantizes_to_projector():
    fb = build_fermi_ball(2, 2)
    lat = build_lattice(2, 3)
    hbar = 0.25
    grid = wigner_grid(lat, hbar)
    v = np.zeros(grid.shape)
    for k in fb.members:
        v[(slice(None), slice(None)) + tuple(2 * k + grid.jmax)] = 4 / (2 * math.pi) ** 2
    gamma = weyl_quantize(PhaseSpaceDensity(v, grid), lat)
    assert np.abs(gamma.matrix - fb.projector(lat)).max() < 1e-12


def test_w11_of_constant():
    grid = PhaseGrid(1, 16, 10, 0.1, 0.2)
    f = PhaseSpaceDensity(np.full(grid.shape, 3.0), grid)
    volume = 2 * math.pi * grid.n_p * grid.dp
    assert w11_norm(f) == pytest.approx(3.0 * volume)


def test_w11_of_gaussian():
    grid = PhaseGrid(1, 1024, 800, 0.005, 1.0)
    s = 0.3
    gx = np.exp(-((grid.x - math.pi) ** 2) / (2 * s**2)) / (s * math.sqrt(2 * math.pi))
    gp = np.exp(-(grid.p**2) / (2 * s**2)) / (s * math.sqrt(2 * math.pi))
    f = PhaseSpaceDensity(np.outer(gx, gp), grid)
    expected = 1 + 2 * 2 / (s * math.sqrt(2 * math.pi))
    assert w11_norm(f) == pytest.approx(expected, abs=1e-3)


def test_force_vanishes_for_uniform_density():
    grid = PhaseGrid(1, 32, 8, 0.1, 0.2)
    f = PhaseSpaceDensity(np.ones(grid.shape), grid)
    V = make_potential({(1,): 1.0, (-1,): 1.0}, dim=1)
    assert np.abs(mean_field_force(f, V)).max() < 1e-13


def test_force_of_cosine_density():
    grid = PhaseGrid(1, 32, 0, 1.0, 1.0)
    f = PhaseSpaceDensity(np.cos(grid.x)[:, None], grid)
    v = 0.7
    F = mean_field_force(f, make_potential({(1,): v, (-1,): v}, dim=1))
    assert np.allclose(F[0], 2 * math.pi * v * np.sin(grid.x))


def test_free_transport_is_exact():
    grid = PhaseGrid(1, 32, 20, 0.1, 0.2)
    shape_x = lambda x: 1 + 0.5 * np.cos(x) + 0.2 * np.sin(2 * x)
    gp = np.exp(-(grid.p**2))
    f0 = PhaseSpaceDensity(shape_x(grid.x)[:, None] * gp, grid)
    t = 0.73
    ft = vlasov_evolve(f0, make_potential({}, dim=1), t, t / 7)
    exact = shape_x(grid.x[:, None] - 2 * grid.p[None, :] * t) * gp
    assert np.abs(ft.values - exact).max() < 1e-12


def test_vlasov_conserves_mass():
    lat = build_lattice(1, 4)
    gamma = random_projector(lat, 3, 1 / 3, seed=1)
    grid = wigner_grid(lat, 1 / 3, jmax=40)
    f0 = wigner_transform(gamma, grid)
    V = make_potential({(1,): 0.2, (-1,): 0.2}, dim=1)
    ft = vlasov_evolve(f0, V, 1.0, 1e-3)
    assert abs(ft.mass() - f0.mass()) < 1e-12 * max(1.0, abs(f0.mass()))


def test_observable_basics():
    lat = build_lattice(3, 3)
    fb = build_fermi_ball(2, 3)
    omega = DensityMatrix(fb.projector(lat), lat, 33 ** (-1 / 3))
    assert semiclassical_observable(omega, (0, 0, 0), (0, 0, 0)) == pytest.approx(33)
    assert abs(semiclassical_observable(omega, (1, 0, 0), (0, 0, 0))) < 1e-14
    with pytest.raises(ScenarioError):
        semiclassical_observable(omega, (0.5, 0, 0), (0, 0, 0))


def test_observable_conjugate_symmetry():
    lat = build_lattice(2, 2)
    gamma = random_mixed(lat, 0.3, seed=9)
    a = semiclassical_observable(gamma, (1, -1), (0.4, 1.1))
    b = semiclassical_observable(gamma, (-1, 1), (-0.4, -1.1))
    assert b == pytest.approx(np.conj(a), abs=1e-14)


def test_observable_agrees_on_both_sides():
    lat = build_lattice(1, 4)
    gamma = random_mixed(lat, 0.25, seed=4)
    f = wigner_transform(gamma)
    for alpha, beta in [(0, 0.0), (1, 0.0), (1, 1.3), (-2, 0.7)]:
        q = semiclassical_observable(gamma, alpha, beta)
        c = phase_space_observable(f, alpha, beta)
        assert abs(q - c) < 1e-12


def test_grid_checks():
    lat = build_lattice(1, 4)
    gamma = random_mixed(lat, 0.25)
    with pytest.raises(ScenarioError):
        wigner_transform(gamma, PhaseGrid(1, 17, 20, 0.2, 0.25))
    with pytest.raises(ScenarioError):
        wigner_transform(gamma, PhaseGrid(1, 9, 20, 0.125, 0.25))
