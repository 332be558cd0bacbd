import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fermidyn.density import DensityMatrix
from fermidyn.errors import ScenarioError
from fermidyn.hartree_fock import (
    check_basis_covers,
    density_fourier,
    direct_term,
    exchange_term,
    free_evolution,
    ground_state_projector,
    hf_energy,
    hf_evolve,
    hf_generator,
    kinetic_matrix,
    trace_norm_distance,
)
from fermidyn.lattice import build_fermi_ball, build_lattice, make_potential

from conftest import cubic_potential, random_mixed, random_projector


@pytest.fixture(scope="module")
def ball_setup():
    fb = build_fermi_ball(2, 3)
    lat = build_lattice(3, 4)
    hbar = fb.n ** (-1 / 3)
    omega = DensityMatrix(fb.projector(lat), lat, hbar)
    return fb, lat, omega


def test_direct_term_of_translation_invariant_state(ball_setup):
    fb, lat, omega = ball_setup
    V = make_potential({(0, 0, 0): 0.7, (1, 0, 0): 0.2, (-1, 0, 0): 0.2})
    assert density_fourier(omega, lat, (0, 0, 0)) == pytest.approx(fb.n)
    assert density_fourier(omega, lat, (1, 0, 0)) == 0
    d = direct_term(omega, V, fb.n)
    assert np.allclose(d, 0.7 * np.eye(len(lat)))


def test_exchange_with_constant_potential():
    lat = build_lattice(2, 2)
    omega = random_mixed(lat, 0.5, seed=3)
    V = make_potential({(0, 0): 1.3}, dim=2)
    assert np.allclose(exchange_term(omega, V, 5.0), 1.3 / 5.0 * omega.matrix)


def test_generator_is_hermitian():
    lat = build_lattice(2, 3)
    omega = random_mixed(lat, 0.3, seed=1)
    h = hf_generator(omega, cubic_potential(0.4, dim=2), 6.0)
    assert np.abs(h - h.conj().T).max() < 1e-14


def test_fermi_ball_commutes_with_its_generator(ball_setup):
    fb, lat, omega = ball_setup
    V = cubic_potential(0.5)
    for exch in (True, False):
        h = hf_generator(omega, V, fb.n, include_exchange=exch)
        assert np.abs(h @ omega.matrix - omega.matrix @ h).max() < 1e-13


def test_exchange_toggle_changes_generator():
    lat = build_lattice(1, 4)
    omega = random_projector(lat, 3, 1 / 3, seed=2)
    V = make_potential({(1,): 0.3, (-1,): 0.3}, dim=1)
    h1 = hf_generator(omega, V, 3, include_exchange=True)
    h0 = hf_generator(omega, V, 3, include_exchange=False)
    assert np.allclose(h1 - h0, -exchange_term(omega, V, 3))
    assert np.abs(h1 - h0).max() > 1e-3


def test_free_dynamics_matches_closed_form():
    lat = build_lattice(1, 5)
    omega = random_projector(lat, 3, 1 / 3, seed=4)
    traj = hf_evolve(omega, make_potential({}, dim=1), 1.0, 0.05)
    assert trace_norm_distance(traj.final, free_evolution(omega, 1.0)) < 1e-12


def test_fermi_ball_is_stationary(ball_setup):
    fb, lat, omega = ball_setup
    traj = hf_evolve(omega, cubic_potential(0.5), 1.0, 0.05, save_every=5)
    assert max(trace_norm_distance(s, omega) for s in traj.states) < 1e-10


def test_kinetic_energy_of_fermi_ball(ball_setup):
    fb, lat, omega = ball_setup
    expected = omega.hbar**2 * float((fb.members**2).sum())
    assert hf_energy(omega, make_potential({}), fb.n) == pytest.approx(expected)
    assert np.allclose(np.diag(kinetic_matrix(lat, omega.hbar)), omega.hbar**2 * lat.sq_norms)


def test_invariants_along_interacting_trajectory():
    lat = build_lattice(1, 4)
    hbar = 1 / 3
    omega = random_projector(lat, 3, hbar, seed=5)
    V = make_potential({(1,): 0.4, (-1,): 0.4, (2,): 0.1, (-2,): 0.1}, dim=1)
    traj = hf_evolve(omega, V, 2.0, 0.01, save_every=20)
    e0 = hf_energy(omega, V, 3)
    for s in traj.states:
        assert abs(s.trace - 3) < 1e-12
        assert s.idempotency_residual() < 1e-10
        assert abs(hf_energy(s, V, 3) - e0) <= 1e-10 * abs(e0)
    assert trace_norm_distance(traj.final, omega) > 1e-3


def test_generator_is_linear_in_potential():
    lat = build_lattice(2, 2)
    omega = random_mixed(lat, 0.5, seed=6)
    va = cubic_potential(0.3, dim=2)
    vb = make_potential({(1, 1): 0.2, (-1, -1): 0.2}, dim=2)
    both = make_potential({**dict(va.items()), **dict(vb.items())}, dim=2)
    kin = kinetic_matrix(lat, 0.5)
    lhs = hf_generator(omega, both, 4.0) - kin
    rhs = (hf_generator(omega, va, 4.0) - kin) + (hf_generator(omega, vb, 4.0) - kin)
    assert np.allclose(lhs, rhs)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_trace_norm_is_a_metric(seed):
    lat = build_lattice(1, 3)
    a, b, c = (random_mixed(lat, 0.5, seed=seed + i) for i in range(3))
    assert trace_norm_distance(a, a) < 1e-12
    assert trace_norm_distance(a, b) == pytest.approx(trace_norm_distance(b, a))
    assert trace_norm_distance(a, c) <= trace_norm_distance(a, b) + trace_norm_distance(b, c) + 1e-12
    u = np.linalg.qr(np.random.default_rng(seed).normal(size=(7, 7)))[0]
    ua = u @ a.matrix @ u.T
    ub = u @ b.matrix @ u.T
    assert trace_norm_distance(ua, ub) == pytest.approx(trace_norm_distance(a, b))


def test_input_validation():
    lat = build_lattice(1, 2)
    omega = random_projector(lat, 2, 0.5)
    V = make_potential({}, dim=1)
    with pytest.raises(ScenarioError):
        hf_evolve(omega, V, 1.0, 0.0)
    with pytest.raises(ScenarioError):
        hf_evolve(omega, V, 1.0, 0.3)
    with pytest.raises(ScenarioError):
        hf_evolve(omega.with_matrix(2 * omega.matrix), V, 1.0, 0.1)
    with pytest.raises(ScenarioError):
        DensityMatrix(np.triu(np.ones((5, 5))), lat, 0.5)
    with pytest.raises(ScenarioError):
        check_basis_covers(build_lattice(3, 3), 2, cubic_potential(1.0))
    with pytest.raises(ScenarioError):
        trace_norm_distance(omega, DensityMatrix(np.eye(3), build_lattice(1, 1), 0.5))


def test_ground_state_projector():
    lat = build_lattice(1, 3)
    U = make_potential({(1,): 0.15, (-1,): 0.15}, dim=1)
    omega, phi = ground_state_projector(lat, 1 / 3, 3, U)
    assert omega.is_projector() and abs(omega.trace - 3) < 1e-12
    with pytest.raises(ScenarioError, match="degenerate"):
        ground_state_projector(lat, 1 / 3, 2)
