"""Cross-module experiment drivers shared by the command line and the test suite.

Each driver takes plain inputs, runs one experiment and returns a result
object with the rows that the command line writes out.  Nothing here touches
the file system.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .density import DensityMatrix
from .errors import NumericalError, ScenarioError
from .hartree_fock import (
    free_evolution,
    ground_state_projector,
    hf_energy,
    hf_evolve,
    trace_norm_distance,
)
from .lattice import (
    FermiBall,
    MomentumLattice,
    Potential,
    ScalingConstants,
    build_fermi_ball,
    build_lattice,
    make_potential,
    scaling_constants,
)
from .oracle import (
    build_fock_basis,
    build_hamiltonian,
    energy,
    evolve_exact,
    particle_hole_space,
    pair_operator_matrix,
    reduced_density_matrix,
    slater_from_orbitals,
)
from .patches import PatchDecomposition, build_patches
from .phasespace import (
    PhaseSpaceDensity,
    phase_space_observable,
    semiclassical_observable,
    vlasov_evolve,
    w11_norm,
    weyl_quantize,
    wigner_grid,
    wigner_transform,
)
from .rpa import (
    DEFAULT_DELTA,
    RpaBlocks,
    build_all_modes,
    default_patch_count,
    excitation_spectrum,
    index_sets,
    linearization_residual,
    pair_list,
    rpa_energy_correction,
)
from .trap import (
    TrapSpec,
    commutator_trace_norm_analytic,
    commutator_trace_norm_bruteforce,
    commutator_trace_norm_unshifted,
    nmax_levels,
    spatial_extension,
)

__all__ = [
    "trap_commutator_table",
    "QuenchSetup",
    "quench_setup",
    "QuenchResult",
    "run_quench",
    "VlasovResult",
    "run_vlasov_compare",
    "RpaResult",
    "run_rpa",
    "hf_oracle_scan",
    "CcrResult",
    "ccr_checks",
    "TOLERANCES",
]

TOLERANCES = {
    "trap_rel": 1e-9,
    "trace": 1e-10,
    "idempotency": 1e-8,
    "energy_rel": 1e-8,
    "rpa_spectrum": 1e-8,
    "rpa_residual": 1e-8,
}


# ---------------------------------------------------------------- trap


def trap_commutator_table(frequencies, hbar: float | None = None, caps=None, n_target: int | None = None, energy_scale: float | None = None):
    """Analytic against brute-force commutator trace norms on all axes.

    Returns (spec, rows, summary).  Without an explicit ``hbar`` the bulk value
    N^(-1/3) of the realised particle number is used.
    """
    if caps is None:
        caps, _ = nmax_levels(n_target, energy_scale, frequencies)
    n = math.prod(c + 1 for c in caps)
    hbar = n ** (-1.0 / 3.0) if hbar is None else hbar
    spec = TrapSpec(tuple(frequencies), tuple(caps), hbar)
    rows, worst = [], 0.0
    for op in ("position", "momentum"):
        for axis in range(3):
            a = commutator_trace_norm_analytic(spec, axis, op)
            b = commutator_trace_norm_bruteforce(spec, op, axis)
            rel = abs(a - b) / abs(a)
            worst = max(worst, rel)
            unshifted = commutator_trace_norm_unshifted(spec, axis) if op == "position" else float("nan")
            rows.append((axis + 1, op, a, b, rel, unshifted))
    x1 = commutator_trace_norm_analytic(spec, 0, "position")
    summary = {
        "caps": list(spec.caps),
        "n_particles": spec.n_particles,
        "hbar": hbar,
        "frequencies": list(spec.frequencies),
        "max_relative_difference": worst,
        "x1_norm_over_n_hbar": x1 / (spec.n_particles * hbar),
        "spatial_extension": [spatial_extension(spec, i) for i in range(3)],
    }
    return spec, rows, summary


# ---------------------------------------------------------------- quench


@dataclass
class QuenchSetup:
    lattice: MomentumLattice
    n: int
    hbar: float
    omega0: DensityMatrix
    orbitals: np.ndarray = field(repr=False)
    V: Potential
    include_exchange: bool = True


def quench_setup(dim: int, cutoff: float, V: Potential, hbar: float | None = None, particles: int | None = None, kf: float | None = None, external: Potential | None = None, include_exchange: bool = True) -> QuenchSetup:
    """Initial Slater state: ground state of hbar^2 k^2 + U, or the Fermi ball.

    ``hbar=None`` selects the bulk value N^(-1/d).
    """
    lattice = build_lattice(dim, cutoff)
    if kf is not None:
        if external is not None and not external.is_zero:
            raise ScenarioError("an external potential cannot be combined with a Fermi-ball initial state")
        fb = build_fermi_ball(kf, dim)
        if fb.kf > lattice.cutoff:
            raise ScenarioError(f"lattice cutoff {lattice.cutoff} does not contain the Fermi ball k_F = {fb.kf}")
        n = fb.n
        hbar = scaling_constants(fb).hbar if hbar is None else hbar
        mask = fb.mask(lattice.points)
        phi = np.eye(len(lattice), dtype=complex)[:, mask]
        omega0 = DensityMatrix(fb.projector(lattice), lattice, hbar)
    else:
        if particles is None:
            raise ScenarioError("give a particle number or a Fermi momentum")
        n = int(particles)
        hbar = n ** (-1.0 / dim) if hbar is None else hbar
        omega0, phi = ground_state_projector(lattice, hbar, n, external)
    return QuenchSetup(lattice, n, hbar, omega0, phi, V, include_exchange)


@dataclass
class QuenchResult:
    rows: list
    summary: dict
    trajectory: object = field(repr=False)


def run_quench(setup: QuenchSetup, t_final: float, dt: float, save_every: int = 1, tol: float = 1e-13) -> QuenchResult:
    """HF evolution with invariant tracking and the distance to free evolution."""
    tr = hf_evolve(setup.omega0, setup.V, t_final, dt, n=setup.n, include_exchange=setup.include_exchange, save_every=save_every, tol=tol)
    e0 = hf_energy(setup.omega0, setup.V, setup.n, setup.include_exchange)
    rows = []
    worst = {"trace": 0.0, "idempotency": 0.0, "energy_rel": 0.0}
    for t, om in zip(tr.times, tr.states):
        e = hf_energy(om, setup.V, setup.n, setup.include_exchange)
        drift = abs(e - e0) / max(abs(e0), 1e-300)
        tr_dev = abs(om.trace - setup.n)
        idem = om.idempotency_residual()
        free = trace_norm_distance(om, free_evolution(setup.omega0, t))
        init = trace_norm_distance(om, setup.omega0)
        worst["trace"] = max(worst["trace"], tr_dev)
        worst["idempotency"] = max(worst["idempotency"], idem)
        worst["energy_rel"] = max(worst["energy_rel"], drift)
        rows.append((t, om.trace, tr_dev, idem, e, drift, free, init))
    summary = {
        "n_particles": setup.n,
        "hbar": setup.hbar,
        "modes": len(setup.lattice),
        "steps": len(tr.iterations),
        "max_midpoint_iterations": max(tr.iterations, default=0),
        "initial_energy": e0,
        "max_trace_deviation": worst["trace"],
        "max_idempotency_residual": worst["idempotency"],
        "max_relative_energy_drift": worst["energy_rel"],
        "final_free_distance": rows[-1][6],
        "final_initial_distance": rows[-1][7],
    }
    return QuenchResult(rows, summary, tr)


def check_quench_invariants(summary: dict) -> None:
    for key, tol_key in (("max_trace_deviation", "trace"), ("max_idempotency_residual", "idempotency"), ("max_relative_energy_drift", "energy_rel")):
        if summary[key] > TOLERANCES[tol_key]:
            raise NumericalError(f"{key} = {summary[key]:.3e} exceeds {TOLERANCES[tol_key]:g}")


# ---------------------------------------------------------------- Vlasov


@dataclass
class VlasovResult:
    rows: list
    summary: dict
    final: PhaseSpaceDensity = field(repr=False)
    omega_vlasov: DensityMatrix = field(repr=False)


def run_vlasov_compare(setup: QuenchSetup, t_final: float, dt: float, alpha, beta, save_every: int | None = None, nx: int | None = None, jmax: int | None = None) -> VlasovResult:
    """Observable gaps between Hartree-Fock and Vlasov along the flow.

    ``phase_space_gap`` compares tr e^{i(a.x + b.p)} omega_HF with the
    phase-space integral of f_Vlasov.  ``gap`` quantizes f_Vlasov first; it
    also picks up the parity projection of grid-scale content created by the
    kicks, which grows with the number of steps.
    """
    steps = int(round(t_final / dt))
    save_every = steps if not save_every else save_every
    tr = hf_evolve(setup.omega0, setup.V, t_final, dt, n=setup.n, include_exchange=setup.include_exchange, save_every=save_every)
    f0 = wigner_transform(setup.omega0) if nx is None and jmax is None else wigner_transform(
        setup.omega0, wigner_grid(setup.lattice, setup.hbar, nx=nx, jmax=jmax)
    )
    snaps: dict[float, PhaseSpaceDensity] = {}

    def keep(t, f):
        snaps[round(t / dt)] = f

    final = vlasov_evolve(f0, setup.V, t_final, dt, observer=keep, observe_every=save_every)
    snaps[steps] = final
    rows = []
    omega_v = None
    mass0 = f0.mass()
    for t, om in zip(tr.times, tr.states):
        f = snaps[round(t / dt)]
        omega_v = weyl_quantize(f, setup.lattice)
        q = semiclassical_observable(om, alpha, beta)
        v = semiclassical_observable(omega_v, alpha, beta)
        ps = phase_space_observable(f, alpha, beta)
        rows.append((t, q.real, q.imag, v.real, v.imag, abs(q - v), abs(q - ps), f.mass() - mass0, w11_norm(f), f.negative_mass()))
    summary = {
        "n_particles": setup.n,
        "hbar": setup.hbar,
        "alpha": list(np.atleast_1d(alpha)),
        "beta": [float(b) for b in np.atleast_1d(beta)],
        "grid": {"nx": f0.grid.nx, "jmax": f0.grid.jmax, "dp": f0.grid.dp},
        "final_gap": rows[-1][5],
        "final_phase_space_gap": rows[-1][6],
        "max_mass_drift": max(abs(r[7]) for r in rows),
        "initial_w11_norm": rows[0][8],
    }
    return VlasovResult(rows, summary, final, omega_v)


# ---------------------------------------------------------------- RPA


@dataclass
class RpaResult:
    fb: FermiBall
    sc: ScalingConstants
    pd: PatchDecomposition
    blocks: dict[tuple, RpaBlocks] = field(repr=False)
    energy: float
    per_mode: dict
    report: list
    summary: dict


def run_rpa(kf: float, V: Potential, patches: int = 0, delta: float = DEFAULT_DELTA, modes=None, hbar_convention: str = "rpa") -> RpaResult:
    fb = build_fermi_ball(kf, 3)
    sc = scaling_constants(fb, hbar_convention)
    m = patches or default_patch_count(fb.n, delta)
    pd = build_patches(fb, m, V)
    report: list = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        blocks = build_all_modes(pd, V, sc, delta, modes=modes, report=report)
    e_rpa, per = rpa_energy_correction(blocks, sc)
    spectra, mismatch, resid, lin = {}, 0.0, 0.0, {}
    for k, b in blocks.items():
        spec_e = excitation_spectrum(b, sc)
        spec_c = np.sort(np.linalg.eigvalsh(2 * sc.hbar * sc.kappa * b.knorm * b.curly))
        spectra[k] = spec_e
        mismatch = max(mismatch, float(np.abs(spec_e - spec_c).max() / np.abs(spec_e).max()))
        resid = max(resid, b.residual_ratio())
        for i, a in enumerate(b.sets.all):
            kk = np.array(k) if i < len(b.sets.plus) else -np.array(k)
            lin[(k, a)] = linearization_residual(kk, a, pd, sc)
    summary = {
        "n_particles": fb.n,
        "kf": fb.kf,
        "patches": m,
        "delta": delta,
        "hbar": sc.hbar,
        "kappa": sc.kappa,
        "corridor": pd.corridor,
        "patch_sizes": pd.counts.tolist(),
        "degenerate_patches": pd.degenerate_patches(),
        "rpa_energy": e_rpa,
        "per_mode": {",".join(map(str, k)): v for k, v in per.items()},
        "spectra": {",".join(map(str, k)): v.tolist() for k, v in spectra.items()},
        "max_spectrum_mismatch": mismatch,
        "max_residual_ratio": resid,
        "max_correlation_trace": max((b.correlation_trace() for b in blocks.values()), default=0.0),
        "max_linearization_residual": max(lin.values(), default=0.0),
        "dropped": [{"k": ",".join(map(str, r.k)), "reason": r.reason, "patches": r.dropped_patches} for r in report],
    }
    return RpaResult(fb, sc, pd, blocks, e_rpa, per, report, summary)


def check_rpa_identities(summary: dict) -> None:
    if summary["max_spectrum_mismatch"] > TOLERANCES["rpa_spectrum"]:
        raise NumericalError(f"spectra of curly K and E differ by {summary['max_spectrum_mismatch']:.3e}")
    if summary["max_residual_ratio"] > TOLERANCES["rpa_residual"]:
        raise NumericalError(f"off-diagonal residual ratio {summary['max_residual_ratio']:.3e} is too large")


# ---------------------------------------------------------------- exact oracle


def hf_oracle_scan(setup: QuenchSetup, couplings, t_final: float, dt: float):
    """Trace-norm distance between exact and HF one-body matrices at t_final for scaled potentials."""
    basis = build_fock_basis(setup.lattice, setup.n)
    psi0 = slater_from_orbitals(basis, setup.orbitals)
    rows = []
    for c in couplings:
        V = setup.V.scaled(c) if c else make_potential({}, dim=setup.lattice.dim)
        h = build_hamiltonian(basis, V, setup.hbar)
        psi = evolve_exact(psi0, h, t_final, setup.hbar)
        gamma = reduced_density_matrix(basis, psi, setup.hbar)
        tr = hf_evolve(setup.omega0, V, t_final, dt, n=setup.n, include_exchange=setup.include_exchange, save_every=10**9)
        e0, e1 = energy(psi0, h), energy(psi, h)
        rows.append((c, trace_norm_distance(gamma, tr.final), abs(np.linalg.norm(psi) - 1), abs(e1 - e0) / max(abs(e0), 1e-300)))
    return basis, rows


def _max_entry(m) -> float:
    m = m.tocsr()
    m.eliminate_zeros()
    return float(abs(m).max()) if m.nnz else 0.0


def _second_transfer(k, alpha: int, pd: PatchDecomposition) -> tuple[int, ...]:
    for l in itertools.product((-1, 0, 1), repeat=3):
        l = tuple(a + b for a, b in zip(k, l))
        if l != tuple(k) and any(l) and pair_list(l, alpha, pd):
            return l
    raise ScenarioError(f"patch {alpha} admits no second momentum transfer next to {k}")


@dataclass
class CcrResult:
    k: tuple
    alpha: int
    n_alpha: float
    rows: list
    l: tuple
    creation_commutator: float
    cross_patch_commutator: float
    balance_residual: float
    dim: int


def _ccr_mode(pd: PatchDecomposition, V: Potential, delta: float, modes):
    candidates = modes if modes is not None else V.gamma_nor
    for k in candidates:
        sets = index_sets(k, pd, delta, pd.fb.n)
        for a in sets.plus:
            if pair_list(k, a, pd):
                return tuple(int(c) for c in k), a
    raise ScenarioError("no mode k has a patch with particle-hole pairs; raise k_F")


def ccr_checks(kf: float, V: Potential, patches: int = 2, delta: float = DEFAULT_DELTA, modes=None, max_pairs: int = 3, seed: int = 0, n_random: int = 4) -> CcrResult:
    """Approximate canonical commutation relations of patch pair operators.

    For every test vector psi (vacuum, one and two particle-hole pairs, pair
    operator images and random balanced superpositions with at most two
    pairs) the row records ||([b, b*] - 1) psi|| against 2 n^-2 ||N psi||.
    """
    if max_pairs < 3:
        raise ScenarioError("the commutator test on two-pair states needs max_pairs >= 3")
    fb = build_fermi_ball(kf, 3)
    pd = build_patches(fb, patches, V)
    k, alpha = _ccr_mode(pd, V, delta, modes)
    pairs = pair_list(k, alpha, pd)
    space = particle_hole_space([p for p, _ in pairs], [h for _, h in pairs], max_pairs)
    bstar = pair_operator_matrix(k, alpha, pd, fb, space)
    b = bstar.conj().T.tocsr()
    n_alpha = math.sqrt(len(pairs))
    number = space.total_number()
    comm = (b @ bstar - bstar @ b).tocsr()

    rng = np.random.default_rng(seed)
    pair_count = space.pair_count()
    family: list[tuple[str, np.ndarray]] = [("vacuum", space.vacuum())]
    singles = []
    for i, (p, h) in enumerate(pairs):
        v = space.pair_creation(space.mode(p, False), space.mode(h, True)) @ space.vacuum()
        singles.append(v)
        family.append((f"pair[{i}]", v))
    for i, j in itertools.combinations(range(len(pairs)), 2):
        p, h = pairs[j]
        v = space.pair_creation(space.mode(p, False), space.mode(h, True)) @ singles[i]
        family.append((f"pairs[{i},{j}]", v))
    v1 = bstar @ space.vacuum()
    family.append(("b*vacuum", v1))
    v2 = bstar @ v1
    family.append(("b*b*vacuum", v2 / np.linalg.norm(v2)))
    low = pair_count <= 2
    for r in range(n_random):
        v = np.where(low, rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim), 0.0)
        family.append((f"random[{r}]", v / np.linalg.norm(v)))

    rows = []
    for label, psi in family:
        lhs = float(np.linalg.norm(comm @ psi - psi))
        bound = 2.0 / n_alpha**2 * float(np.linalg.norm(number @ psi))
        rows.append((label, lhs, bound, lhs <= bound * (1 + 1e-12) + 1e-14))

    # exact relations need distinct operators: a second transfer l in the same
    # patch, and the reflected patch paired with -k
    l = _second_transfer(k, alpha, pd)
    beta = pd.reflect(alpha)
    mk = tuple(-c for c in k)
    extra = pair_list(l, alpha, pd) + pair_list(mk, beta, pd)
    both = particle_hole_space([p for p, _ in pairs + extra], [h for _, h in pairs + extra], 2)
    bk = pair_operator_matrix(k, alpha, pd, fb, both)
    bl = pair_operator_matrix(l, alpha, pd, fb, both)
    bb = pair_operator_matrix(mk, beta, pd, fb, both)
    creation_comm = _max_entry(bk @ bl - bl @ bk)
    # [b, b*] is only exact below the top pair sector of the truncated space
    below = sp.diags((both.pair_count() < both.max_pairs).astype(float))
    cross_norm = max(_max_entry((bk.conj().T @ bb - bb @ bk.conj().T) @ below), _max_entry(bk @ bb - bb @ bk))

    npart, nhole = space.number_operators()
    balance = max(float(np.linalg.norm((npart - nhole) @ psi)) for _, psi in family)
    return CcrResult(k, alpha, n_alpha, rows, l, creation_comm, cross_norm, balance, space.dim)
