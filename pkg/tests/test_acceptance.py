"""Acceptance criteria 1-10, each reporting a single PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from fermidyn.density import DensityMatrix
from fermidyn.experiments import ccr_checks, hf_oracle_scan, quench_setup, run_rpa, run_vlasov_compare
from fermidyn.hartree_fock import free_evolution, hf_energy, hf_evolve, trace_norm_distance
from fermidyn.lattice import build_fermi_ball, build_lattice, make_potential, scaling_constants
from fermidyn.patches import build_patches
from fermidyn.phasespace import (
    PhaseSpaceDensity,
    vlasov_evolve,
    weyl_quantize,
    wigner_grid,
    wigner_transform,
)
from fermidyn.rpa import BosonState, boson_evolve, build_all_modes, build_mode, rpa_energy_correction
from fermidyn.trap import (
    TrapSpec,
    commutator_trace_norm_analytic,
    commutator_trace_norm_bruteforce,
    nmax_levels,
)

from conftest import cubic_potential, random_mixed, random_projector

DELTA = 2 / 45
EXTERNAL_1D = make_potential({(1,): 0.15, (-1,): 0.15}, dim=1)


def test_criterion_01_trap_trace_norm(verdict):
    t0 = time.perf_counter()
    spec = TrapSpec((1.0, 2.0, 4.0), (5, 4, 3), 1.0)
    worst = 0.0
    for op in ("position", "momentum"):
        for axis in range(3):
            a = commutator_trace_norm_analytic(spec, axis, op)
            b = commutator_trace_norm_bruteforce(spec, op, axis)
            worst = max(worst, abs(a - b) / a)
    verdict(1, "trap commutator trace norm", worst <= 1e-9, f"max relative difference {worst:.2e}", time.perf_counter() - t0, 5)


def test_criterion_02_semiclassical_trend(verdict):
    t0 = time.perf_counter()
    ratios = {}
    for n in (27, 125, 343, 1000):
        side = round(n ** (1 / 3))
        caps, realized = nmax_levels((side - 1) ** 3, 1.0, (1.0, 1.0, 1.0))
        assert realized == n
        spec = TrapSpec((1.0, 1.0, 1.0), caps, n ** (-1 / 3))
        norm = commutator_trace_norm_bruteforce(spec, "position", 0)
        ratios[n] = norm / (n * spec.hbar)
    spread = max(ratios.values()) / min(ratios.values())
    detail = ", ".join(f"N={n}: {r:.4f}" for n, r in ratios.items()) + f"; spread {spread:.3f}"
    verdict(2, "trap commutator scaling", spread < 2, detail, time.perf_counter() - t0, 30)


def test_criterion_03_hf_against_exact(verdict):
    t0 = time.perf_counter()
    setup = quench_setup(1, 3, make_potential({(1,): 1.0, (-1,): 1.0}, dim=1), particles=3, external=EXTERNAL_1D)
    assert len(setup.lattice) == 7
    _, rows = hf_oracle_scan(setup, [0.0, 0.4, 0.2, 0.1], 0.5, 1e-3)
    dist = {c: d for c, d, _, _ in rows}
    ok = dist[0.0] <= 1e-8 and dist[0.4] > dist[0.2] > dist[0.1]
    detail = ", ".join(f"v={c}: {d:.3e}" for c, d in dist.items())
    verdict(3, "Hartree-Fock vs exact dynamics", ok, detail, time.perf_counter() - t0, 60)


def _trajectories():
    lat1 = build_lattice(1, 3)
    for v in (0.1, 0.4, 1.0):
        s = quench_setup(1, 3, make_potential({(1,): v, (-1,): v}, dim=1), particles=3, external=EXTERNAL_1D)
        yield f"1d N=3 v={v}", s.omega0, s.V, 0.5, 1e-3
    s = quench_setup(1, 50, make_potential({(1,): 0.5, (-1,): 0.5}, dim=1), particles=33, external=EXTERNAL_1D)
    yield "1d N=33", s.omega0, s.V, 0.5, 2.5e-3
    lat2 = build_lattice(2, 3)
    yield "2d random N=5", random_projector(lat2, 5, 5 ** -0.5, seed=11), cubic_potential(0.3, dim=2), 1.0, 1e-2
    yield "1d random N=2", random_projector(lat1, 2, 0.5, seed=12), make_potential({(2,): 0.7, (-2,): 0.7}, dim=1), 1.0, 1e-2


def test_criterion_04_hf_structure(verdict):
    t0 = time.perf_counter()
    worst = {"trace": 0.0, "idempotency": 0.0, "energy": 0.0}
    for label, omega0, V, t_final, dt in _trajectories():
        n = round(omega0.trace)
        tr = hf_evolve(omega0, V, t_final, dt, n=n)
        e0 = hf_energy(omega0, V, n)
        for s in tr.states:
            worst["trace"] = max(worst["trace"], abs(s.trace - n))
            worst["idempotency"] = max(worst["idempotency"], s.idempotency_residual())
            worst["energy"] = max(worst["energy"], abs(hf_energy(s, V, n) - e0) / abs(e0))
    ok = worst["trace"] <= 1e-10 and worst["idempotency"] <= 1e-8 and worst["energy"] <= 1e-8
    detail = f"trace {worst['trace']:.1e}, idempotency {worst['idempotency']:.1e}, energy drift {worst['energy']:.1e}"
    verdict(4, "Hartree-Fock invariants", ok, detail, time.perf_counter() - t0, 60)


def test_criterion_05_fermi_ball_stationary(verdict):
    t0 = time.perf_counter()
    fb = build_fermi_ball(2, 3)
    lat = build_lattice(3, 4)
    omega0 = DensityMatrix(fb.projector(lat), lat, scaling_constants(fb).hbar)
    tr = hf_evolve(omega0, cubic_potential(0.5), 1.0, 0.01)
    worst = max(trace_norm_distance(s, omega0) for s in tr.states)
    verdict(5, "Fermi ball stationarity", worst <= 1e-8, f"max distance {worst:.2e} over t in [0, 1]", time.perf_counter() - t0, 60)


def test_criterion_06_wigner_weyl(verdict):
    t0 = time.perf_counter()
    roundtrip = norm_err = transport = mass = 0.0
    for dim, cutoff, hbar in ((1, 6, 0.2), (2, 3, 0.3), (3, 1, 0.5)):
        lat = build_lattice(dim, cutoff)
        gamma = random_mixed(lat, hbar, seed=dim)
        f = wigner_transform(gamma)
        roundtrip = max(roundtrip, np.abs(weyl_quantize(f, lat).matrix - gamma.matrix).max())
        norm_err = max(norm_err, abs(f.mass() - hbar**dim * gamma.trace) / (hbar**dim * gamma.trace))
    lat = build_lattice(1, 6)
    gamma = random_projector(lat, 4, 0.25, seed=5)
    grid = wigner_grid(lat, 0.25)
    f0 = wigner_transform(gamma, grid)
    free = make_potential({}, dim=1)
    for t in (0.5, 2 * math.pi / 0.25, 3.0):
        ft = vlasov_evolve(f0, free, t, t / 10)
        exact = wigner_transform(free_evolution(gamma, t), grid)
        transport = max(transport, np.abs(ft.values - exact.values).max())
    grid = wigner_grid(lat, 0.25, jmax=60)
    f0 = wigner_transform(gamma, grid)
    ft = vlasov_evolve(f0, make_potential({(1,): 0.3, (-1,): 0.3}, dim=1), 1.0, 1e-3)
    mass = abs(ft.mass() - f0.mass()) / f0.mass()
    ok = roundtrip <= 1e-12 and norm_err <= 1e-12 and transport <= 1e-12 and mass <= 1e-12
    detail = f"round trip {roundtrip:.1e}, normalisation {norm_err:.1e}, free transport {transport:.1e}, mass over 1000 steps {mass:.1e}"
    verdict(6, "Wigner/Weyl duality and Vlasov flow", ok, detail, time.perf_counter() - t0, 60)


@pytest.mark.slow
def test_criterion_07_vlasov_hf_trend(verdict):
    t0 = time.perf_counter()
    gaps = {}
    for n in (33, 65, 129):
        V = make_potential({(1,): 0.5, (-1,): 0.5}, dim=1)
        setup = quench_setup(1, math.ceil(1.5 * n), V, particles=n, external=EXTERNAL_1D)
        res = run_vlasov_compare(setup, 0.5, 2.5e-3, 1, 1.0)
        gaps[n] = (res.summary["final_phase_space_gap"], res.summary["final_gap"])
    g = [ps for ps, _ in gaps.values()]
    ok = g[0] > g[1] > g[2]
    detail = ", ".join(f"N={n}: {ps:.3e} (Weyl side {w:.3e})" for n, (ps, w) in gaps.items()) + " at alpha=1, beta=1, t=0.5"
    verdict(7, "Vlasov vs Hartree-Fock observable gap", ok, detail, time.perf_counter() - t0, 300)


def test_criterion_08_rpa_identities(verdict):
    t0 = time.perf_counter()
    spec_err = resid = 0.0
    max_trace = -math.inf
    free_ok = True
    for kf in (8, 12):
        for m in (8, 16):
            for v in (0.25, 1.0):
                res = run_rpa(kf, cubic_potential(v), m, DELTA)
                spec_err = max(spec_err, res.summary["max_spectrum_mismatch"])
                resid = max(resid, res.summary["max_residual_ratio"])
                max_trace = max(max_trace, max(b.correlation_trace() for b in res.blocks.values()))
            free = run_rpa(kf, make_potential({}), m, DELTA, modes=cubic_potential(1.0).gamma_nor)
            free_ok &= free.energy == 0
            for b in free.blocks.values():
                free_ok &= not b.w.any() and not b.wt.any()
                free_ok &= bool(np.array_equal(b.e, b.d)) and not b.kernel.any() and bool(np.array_equal(b.curly, b.d))
    ok = spec_err <= 1e-8 and resid <= 1e-8 and free_ok and max_trace <= 0
    detail = f"spectrum mismatch {spec_err:.1e}, residual ratio {resid:.1e}, max tr(E-D-W) {max_trace:.3e}, free chain {'exact' if free_ok else 'broken'}"
    verdict(8, "RPA matrix identities", ok, detail, time.perf_counter() - t0, 60)


def test_criterion_09_approximate_ccr(verdict):
    t0 = time.perf_counter()
    res = ccr_checks(2.5, cubic_potential(1.0), patches=2, delta=DELTA, max_pairs=3, seed=7)
    within = all(r[3] for r in res.rows)
    worst = max(r[1] / r[2] for r in res.rows if r[2] > 0)
    ok = within and res.creation_commutator == 0 and res.cross_patch_commutator == 0 and res.balance_residual == 0
    detail = (
        f"k={res.k}, n_alpha^2={res.n_alpha**2:.0f}, {len(res.rows)} test vectors, worst error/bound {worst:.2f}, "
        f"[b*,b*] {res.creation_commutator:g}, cross-patch {res.cross_patch_commutator:g}"
    )
    verdict(9, "approximate bosonic commutators", ok, detail, time.perf_counter() - t0, 60)


def test_criterion_10_boson_dynamics(verdict):
    from scipy.linalg import expm

    t0 = time.perf_counter()
    fb = build_fermi_ball(8, 3)
    V = cubic_potential(1.0)
    sc = scaling_constants(fb, "rpa")
    blocks = build_all_modes(build_patches(fb, 8, V), V, sc, DELTA)
    rng = np.random.default_rng(0)
    phi = BosonState({k: rng.normal(size=b.size) + 1j * rng.normal(size=b.size) for k, b in blocks.items()}).normalized()
    group = norm = phase = 0.0
    for t1, t2 in ((0.3, 0.5), (1.0, 2.5), (7.0, 0.1)):
        a = boson_evolve(boson_evolve(phi, blocks, sc, t1), blocks, sc, t2)
        b = boson_evolve(phi, blocks, sc, t1 + t2)
        group = max(group, max(np.abs(a.amplitudes[k] - b.amplitudes[k]).max() for k in blocks))
        norm = max(norm, abs(b.norm() - 1))
    for k, blk in blocks.items():
        lam, vec = np.linalg.eigh(blk.curly)
        for i in range(blk.size):
            t = 1.7
            out = boson_evolve(BosonState({k: vec[:, i].astype(complex)}), blocks, sc, t).amplitudes[k]
            ref = expm(-1j * t * 2 * sc.kappa * blk.knorm * blk.curly) @ vec[:, i]
            phase = max(phase, np.abs(out - ref).max(), np.abs(ref - np.exp(-2j * sc.kappa * blk.knorm * lam[i] * t) * vec[:, i]).max())
    ok = group <= 1e-10 and norm <= 1e-10 and phase <= 1e-10
    detail = f"group law {group:.1e}, norm {norm:.1e}, eigenvector phase {phase:.1e}"
    verdict(10, "bosonic one-particle dynamics", ok, detail, time.perf_counter() - t0, 10)
