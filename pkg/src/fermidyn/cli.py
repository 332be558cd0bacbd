"""Command line: ``fermidyn <subcommand> --scenario FILE [--out DIR] [--threads N] [--strict]``.

Exit codes: 0 success, 2 invalid scenario, 3 numerical invariant violated,
4 resource cap exceeded.  The thread cap may also come from the
``FERMIDYN_THREADS`` environment variable.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import platform
import sys
import time
import warnings
from contextlib import nullcontext
from pathlib import Path

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import NumericalError, ResourceLimitError, ScenarioError
from .experiments import (
    ccr_checks,
    check_quench_invariants,
    check_rpa_identities,
    hf_oracle_scan,
    quench_setup,
    run_quench,
    run_rpa,
    run_vlasov_compare,
    trap_commutator_table,
    TOLERANCES,
)
from .io import (
    basis_digest,
    content_hash,
    write_csv,
    write_density_binary,
    write_density_csv,
    write_json,
    write_phase_binary,
)
from .lattice import make_potential
from .scenario import Scenario, load_scenario

log = logging.getLogger("fermidyn")

EXIT_CONFIG, EXIT_NUMERICAL, EXIT_RESOURCE = 2, 3, 4
THREADS_ENV = "FERMIDYN_THREADS"
SUBCOMMANDS = ("trap-commutators", "quench-hf", "vlasov-compare", "rpa-spectrum", "oracle-compare")


class Run:
    """Collects artifacts and stage timings for the manifest."""

    def __init__(self, out: Path):
        self.out = out
        self.artifacts: list[Path] = []
        self.timings: dict[str, float] = {}

    def add(self, path: Path) -> Path:
        self.artifacts.append(Path(path))
        return path

    def stage(self, name: str):
        run = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = time.perf_counter() - self.t0

        return _Timer()


def _hbar_for(scenario: Scenario) -> float | None:
    """Explicit value, or None to let the driver apply the bulk N^(-1/d) rule."""
    spec = scenario.hbar
    if spec.convention == "explicit":
        return spec.value
    if spec.convention == "rpa":
        raise ScenarioError("hbar.convention = 'rpa' only applies to rpa-spectrum; use 'bulk' or 'explicit'")
    return None


def _setup_from(scenario: Scenario):
    scenario.require("quench")
    q = scenario.quench
    ext = make_potential(q.external, dim=scenario.dim) if q.external else None
    return quench_setup(
        scenario.dim,
        q.cutoff,
        scenario.build_potential(),
        hbar=_hbar_for(scenario),
        particles=q.particles,
        kf=q.kf,
        external=ext,
        include_exchange=q.include_exchange,
    )


def cmd_trap(scenario: Scenario, run: Run) -> None:
    scenario.require("trap")
    t = scenario.trap
    with run.stage("trap"):
        spec, rows, summary = trap_commutator_table(t.frequencies, _hbar_for(scenario), t.caps, t.n_target, t.energy)
    run.add(write_csv(run.out / "trap_commutators.csv", ["axis", "operator", "analytic", "bruteforce", "relative_difference", "unshifted_transverse"], rows))
    run.add(write_json(run.out / "trap_summary.json", summary))
    if summary["max_relative_difference"] > TOLERANCES["trap_rel"]:
        raise NumericalError(f"analytic and brute-force norms differ by {summary['max_relative_difference']:.3e}")


def cmd_quench(scenario: Scenario, run: Run) -> None:
    scenario.require("quench", "time")
    setup = _setup_from(scenario)
    tg = scenario.time
    with run.stage("hartree_fock"):
        res = run_quench(setup, tg.t_final, tg.dt, tg.save_every)
    header = ["t", "trace", "trace_deviation", "idempotency", "energy", "relative_energy_drift", "free_distance", "initial_distance"]
    run.add(write_csv(run.out / "quench_hf.csv", header, res.rows))
    final = res.trajectory.final
    run.add(write_density_binary(run.out / "omega_final.bin", final, setup.n, float(res.trajectory.times[-1])))
    run.add(write_density_csv(run.out / "omega_final.csv", final))
    run.add(write_json(run.out / "quench_summary.json", res.summary))
    check_quench_invariants(res.summary)


def cmd_vlasov(scenario: Scenario, run: Run) -> None:
    scenario.require("quench", "time", "vlasov")
    setup = _setup_from(scenario)
    tg, vs = scenario.time, scenario.vlasov
    with run.stage("vlasov_compare"):
        res = run_vlasov_compare(setup, tg.t_final, tg.dt, vs.alpha, vs.beta, tg.save_every, vs.nx or None, vs.jmax or None)
    header = ["t", "hf_re", "hf_im", "vlasov_re", "vlasov_im", "gap", "phase_space_gap", "mass_drift", "w11_norm", "negative_mass"]
    run.add(write_csv(run.out / "vlasov_compare.csv", header, res.rows))
    run.add(write_phase_binary(run.out / "wigner_final.bin", res.final))
    run.add(write_json(run.out / "vlasov_summary.json", res.summary))


def cmd_rpa(scenario: Scenario, run: Run) -> None:
    scenario.require("rpa")
    r = scenario.rpa
    if scenario.hbar.convention == "explicit":
        raise ScenarioError("rpa-spectrum derives hbar from k_F; set hbar.convention to 'rpa' or 'bulk'")
    with run.stage("rpa"):
        res = run_rpa(r.kf, scenario.build_potential(nonnegative=True), r.patches, r.delta, r.modes, scenario.hbar.convention)
    block_rows, spec_rows = [], []
    for k, b in sorted(res.blocks.items()):
        idx = b.sets.all
        for tag, mat in (("D", b.d), ("W", b.w), ("Wt", b.wt), ("E", b.e), ("K", b.kernel), ("curlyK", b.curly.real)):
            for i, a in enumerate(idx):
                for j, c in enumerate(idx):
                    block_rows.append((k, a, c, tag, mat[i, j]))
        for i, ev in enumerate(res.summary["spectra"][",".join(map(str, k))]):
            spec_rows.append((k, i, ev))
    run.add(write_csv(run.out / "rpa_blocks.csv", ["k", "alpha", "beta", "matrix", "value"], block_rows))
    run.add(write_csv(run.out / "rpa_spectrum.csv", ["k", "index", "eigenvalue"], spec_rows))
    run.add(write_json(run.out / "rpa_summary.json", res.summary))
    check_rpa_identities(res.summary)


def cmd_oracle(scenario: Scenario, run: Run) -> None:
    scenario.require("oracle")
    o = scenario.oracle
    summary: dict = {}
    if "hf-distance" in o.checks:
        scenario.require("quench", "time")
        setup = _setup_from(scenario)
        with run.stage("hf_distance"):
            basis, rows = hf_oracle_scan(setup, o.couplings, scenario.time.t_final, scenario.time.dt)
        run.add(write_csv(run.out / "oracle_hf.csv", ["coupling", "trace_distance", "norm_drift", "relative_energy_drift"], rows))
        summary["hf_distance"] = {
            "basis_dimension": basis.dim,
            "basis_sha256": basis_digest(basis.states, basis.lattice).hex(),
            "distances": {repr(r[0]): r[1] for r in rows},
        }
    if "ccr" in o.checks:
        scenario.require("rpa")
        r = scenario.rpa
        with run.stage("ccr"):
            res = ccr_checks(r.kf, scenario.build_potential(nonnegative=True), r.patches or 2, r.delta, r.modes, o.max_pairs, scenario.seed)
        run.add(write_csv(run.out / "oracle_ccr.csv", ["state", "commutator_error", "bound", "within_bound"], res.rows))
        summary["ccr"] = {
            "k": list(res.k),
            "l": list(res.l),
            "patch": res.alpha,
            "n_alpha": res.n_alpha,
            "dimension": res.dim,
            "creation_commutator": res.creation_commutator,
            "cross_patch_commutator": res.cross_patch_commutator,
            "balance_residual": res.balance_residual,
            "all_within_bound": all(row[3] for row in res.rows),
        }
    run.add(write_json(run.out / "oracle_summary.json", summary))
    if "ccr" in summary:
        c = summary["ccr"]
        if not c["all_within_bound"] or c["creation_commutator"] or c["cross_patch_commutator"] or c["balance_residual"]:
            raise NumericalError("pair operators violate the commutation checks")


COMMANDS = {
    "trap-commutators": cmd_trap,
    "quench-hf": cmd_quench,
    "vlasov-compare": cmd_vlasov,
    "rpa-spectrum": cmd_rpa,
    "oracle-compare": cmd_oracle,
}


def _write_manifest(run: Run, scenario: Scenario | None, args, status: str, started: float) -> None:
    scenario_path = Path(args.scenario)
    manifest = {
        "tool": "fermidyn",
        "version": __version__,
        "subcommand": args.command,
        "status": status,
        "scenario_path": str(scenario_path),
        "scenario_sha256": hashlib.sha256(scenario_path.read_bytes()).hexdigest() if scenario_path.is_file() else None,
        "scenario": scenario.to_dict() if scenario is not None else None,
        "threads": args.threads,
        "strict": args.strict,
        "versions": {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        "artifacts": [{"path": p.name, "sha256": content_hash(p), "bytes": p.stat().st_size} for p in run.artifacts],
        "timings": {**run.timings, "total": time.perf_counter() - started},
    }
    write_json(run.out / "run_manifest.json", manifest)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fermidyn", description="Mean-field and bosonized dynamics of fermions on a torus.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="TOML scenario file")
        p.add_argument("--out", default=None, help="output directory (default: out/<scenario name>)")
        p.add_argument("--threads", type=int, default=None, help=f"BLAS thread cap (default: ${THREADS_ENV} or unlimited)")
        p.add_argument("--strict", action="store_true", help="treat unknown scenario keys as errors")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads is None and os.environ.get(THREADS_ENV):
        try:
            args.threads = int(os.environ[THREADS_ENV])
        except ValueError:
            print(f"error: {THREADS_ENV} must be an integer", file=sys.stderr)
            return EXIT_CONFIG
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    started = time.perf_counter()
    scenario = None
    run = None
    status, code = "ok", 0
    if args.out:
        run = Run(Path(args.out))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            scenario = load_scenario(args.scenario, strict=args.strict)
        if run is None:
            run = Run(Path("out") / scenario.name)
        limits = threadpool_limits(limits=args.threads) if args.threads else nullcontext()
        with limits:
            COMMANDS[args.command](scenario, run)
    except ScenarioError as exc:
        status, code = f"config error: {exc}", EXIT_CONFIG
    except NumericalError as exc:
        status, code = f"numerical error: {exc}", EXIT_NUMERICAL
    except ResourceLimitError as exc:
        status, code = f"resource limit: {exc}", EXIT_RESOURCE
    if code:
        print(f"error: {status}", file=sys.stderr)
    if run is not None:
        _write_manifest(run, scenario, args, status, started)
        log.info("wrote %d artifacts to %s", len(run.artifacts), run.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
