"""Scenario files: TOML with a fixed schema.

Grammar (every section optional unless a subcommand needs it)::

    schema_version = 1          # required
    name = "label"              # required
    dim = 3                     # 1, 2 or 3; required
    seed = 0                    # integer, for randomised test data

    [hbar]                      # required: the convention is never implied
    convention = "bulk"         # "bulk" (N^(-1/d)), "rpa" (kappa/k_F, d = 3) or "explicit"
    value = 1.0                 # only with "explicit"

    [potential]                 # Fourier coefficients; keys are lattice vectors
    "1,0,0" = 0.5               # Vhat(k) must equal Vhat(-k)
    "-1,0,0" = 0.5

    [time]
    t_final = 0.5
    dt = 0.001
    save_every = 100

    [trap]
    frequencies = [1.0, 2.0, 4.0]
    caps = [5, 4, 3]            # or: n_target = 125, energy = 1.0

    [quench]                    # Slater ground state of hbar^2 k^2 + U, evolved without U
    particles = 3               # or: kf = 2.0 (fill the Fermi ball instead)
    cutoff = 3.0
    external = { "1" = 0.15, "-1" = 0.15 }
    include_exchange = true

    [vlasov]
    alpha = [1]
    beta = [1.0]
    nx = 0                      # 0 selects the automatic grid
    jmax = 0

    [rpa]
    kf = 8.0
    patches = 8                 # 0 selects N^(4 delta)
    delta = 0.044444444444444446
    modes = ["0,0,1"]           # default: northern half of supp Vhat
    boson_time = 1.0

    [oracle]
    checks = ["hf-distance", "ccr"]
    couplings = [0.0, 0.4, 0.2, 0.1]
    max_pairs = 3

Unknown keys are errors in strict mode and warnings otherwise.
"""

from __future__ import annotations

import dataclasses
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ScenarioError
from .lattice import Potential, make_potential, parse_vector

__all__ = [
    "Scenario",
    "HbarSpec",
    "TimeGrid",
    "TrapSection",
    "QuenchSection",
    "VlasovSection",
    "RpaSection",
    "OracleSection",
    "parse_scenario",
    "load_scenario",
    "serialize_scenario",
]

SCHEMA_VERSION = 1
ORACLE_CHECKS = ("hf-distance", "ccr")


def _err(path: str, msg: str) -> ScenarioError:
    return ScenarioError(f"{path}: {msg}")


def _expect(value, kinds, path: str):
    if isinstance(value, bool) and bool not in (kinds if isinstance(kinds, tuple) else (kinds,)):
        raise _err(path, f"expected {kinds}, got a boolean")
    if not isinstance(value, kinds):
        raise _err(path, f"expected {getattr(kinds, '__name__', kinds)}, got {type(value).__name__}")
    return value


def _float(value, path: str, positive: bool = False, nonneg: bool = False) -> float:
    v = float(_expect(value, (int, float), path))
    if not math.isfinite(v):
        raise _err(path, "must be finite")
    if positive and v <= 0:
        raise _err(path, "must be positive")
    if nonneg and v < 0:
        raise _err(path, "must be non-negative")
    return v


def _int(value, path: str, minimum: int | None = None) -> int:
    v = _expect(value, int, path)
    if minimum is not None and v < minimum:
        raise _err(path, f"must be >= {minimum}")
    return int(v)


def _coeffs(table, path: str, dim: int) -> dict[str, float]:
    _expect(table, dict, path)
    out = {}
    for key, val in table.items():
        try:
            vec = parse_vector(key, dim)
        except ScenarioError as exc:
            raise _err(f"{path}.{key}", str(exc)) from None
        out[",".join(str(c) for c in vec)] = _float(val, f"{path}.{key}")
    try:
        make_potential(out, dim=dim)
    except ScenarioError as exc:
        raise _err(path, str(exc)) from None
    return dict(sorted(out.items()))


class _Section:
    """Reads the keys of one table and reports leftovers."""

    def __init__(self, table, path: str, strict: bool):
        self.table = dict(_expect(table, dict, path))
        self.path = path
        self.strict = strict

    def take(self, key, default=dataclasses.MISSING):
        if key in self.table:
            return self.table.pop(key)
        if default is dataclasses.MISSING:
            raise _err(f"{self.path}.{key}" if self.path else key, "missing required field")
        return default

    def finish(self):
        if self.table:
            names = ", ".join(sorted(f"{self.path}.{k}" if self.path else k for k in self.table))
            if self.strict:
                raise ScenarioError(f"unknown field(s): {names}")
            warnings.warn(f"ignoring unknown field(s): {names}", UserWarning)


@dataclass(frozen=True)
class HbarSpec:
    convention: str
    value: float | None = None


@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    dt: float
    save_every: int = 1

    @property
    def steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass(frozen=True)
class TrapSection:
    frequencies: tuple[float, ...]
    caps: tuple[int, ...] | None = None
    n_target: int | None = None
    energy: float | None = None


@dataclass(frozen=True)
class QuenchSection:
    cutoff: float
    particles: int | None = None
    kf: float | None = None
    external: dict = field(default_factory=dict)
    include_exchange: bool = True


@dataclass(frozen=True)
class VlasovSection:
    alpha: tuple[int, ...]
    beta: tuple[float, ...]
    nx: int = 0
    jmax: int = 0


@dataclass(frozen=True)
class RpaSection:
    kf: float
    patches: int = 0
    delta: float = 2.0 / 45.0
    modes: tuple[str, ...] | None = None
    boson_time: float = 1.0


@dataclass(frozen=True)
class OracleSection:
    checks: tuple[str, ...] = ORACLE_CHECKS
    couplings: tuple[float, ...] = (1.0,)
    max_pairs: int = 3


@dataclass(frozen=True)
class Scenario:
    name: str
    dim: int
    hbar: HbarSpec
    seed: int = 0
    potential: dict = field(default_factory=dict)
    time: TimeGrid | None = None
    trap: TrapSection | None = None
    quench: QuenchSection | None = None
    vlasov: VlasovSection | None = None
    rpa: RpaSection | None = None
    oracle: OracleSection | None = None

    def build_potential(self, nonnegative: bool = False) -> Potential:
        return make_potential(self.potential, dim=self.dim, nonnegative=nonnegative)

    def require(self, *sections: str) -> None:
        missing = [s for s in sections if getattr(self, s) is None]
        if missing:
            raise ScenarioError(f"scenario {self.name!r} lacks section(s): {', '.join('[' + s + ']' for s in missing)}")

    def to_dict(self) -> dict[str, Any]:
        def clean(obj):
            if dataclasses.is_dataclass(obj):
                return {k: clean(v) for k, v in dataclasses.asdict(obj).items() if v is not None}
            if isinstance(obj, tuple):
                return [clean(v) for v in obj]
            if isinstance(obj, dict):
                return {k: clean(v) for k, v in obj.items() if v is not None}
            return obj

        out = {"schema_version": SCHEMA_VERSION}
        out.update(clean(self))
        if not out.get("potential"):
            out.pop("potential", None)
        return out


def _hbar_section(raw, strict: bool, dim: int) -> HbarSpec:
    s = _Section(raw, "hbar", strict)
    conv = _expect(s.take("convention"), str, "hbar.convention")
    if conv not in ("bulk", "rpa", "explicit"):
        raise _err("hbar.convention", f"must be 'bulk', 'rpa' or 'explicit', got {conv!r}")
    value = s.take("value", None)
    if conv == "explicit":
        if value is None:
            raise _err("hbar.value", "required with the explicit convention")
        value = _float(value, "hbar.value", positive=True)
    elif value is not None:
        raise _err("hbar.value", f"not allowed with the {conv!r} convention")
    if conv == "rpa" and dim != 3:
        raise _err("hbar.convention", "the rpa convention is defined for dim = 3 only")
    s.finish()
    return HbarSpec(conv, value)


def _time_section(raw, strict: bool) -> TimeGrid:
    s = _Section(raw, "time", strict)
    t_final = _float(s.take("t_final"), "time.t_final", nonneg=True)
    dt = _float(s.take("dt"), "time.dt", positive=True)
    save_every = _int(s.take("save_every", 1), "time.save_every", 1)
    s.finish()
    steps = round(t_final / dt)
    if abs(steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise _err("time", f"t_final = {t_final} is not a multiple of dt = {dt}")
    return TimeGrid(t_final, dt, save_every)


def _trap_section(raw, strict: bool, dim: int) -> TrapSection:
    if dim != 3:
        raise _err("trap", "the harmonic trap is three-dimensional; set dim = 3")
    s = _Section(raw, "trap", strict)
    freqs = _expect(s.take("frequencies"), list, "trap.frequencies")
    if len(freqs) != 3:
        raise _err("trap.frequencies", "needs three values")
    freqs = tuple(_float(w, f"trap.frequencies[{i}]", positive=True) for i, w in enumerate(freqs))
    if list(freqs) != sorted(freqs):
        raise _err("trap.frequencies", "must be sorted ascending")
    caps = s.take("caps", None)
    n_target = s.take("n_target", None)
    energy = s.take("energy", None)
    if caps is not None:
        if n_target is not None or energy is not None:
            raise _err("trap", "give either caps or n_target with energy, not both")
        caps = _expect(caps, list, "trap.caps")
        if len(caps) != 3:
            raise _err("trap.caps", "needs three values")
        caps = tuple(_int(c, f"trap.caps[{i}]", 0) for i, c in enumerate(caps))
    else:
        if n_target is None or energy is None:
            raise _err("trap", "needs caps, or n_target together with energy")
        n_target = _int(n_target, "trap.n_target", 1)
        energy = _float(energy, "trap.energy", positive=True)
    s.finish()
    return TrapSection(freqs, caps, n_target, energy)


def _quench_section(raw, strict: bool, dim: int) -> QuenchSection:
    s = _Section(raw, "quench", strict)
    cutoff = _float(s.take("cutoff"), "quench.cutoff", nonneg=True)
    particles = s.take("particles", None)
    kf = s.take("kf", None)
    if (particles is None) == (kf is None):
        raise _err("quench", "give exactly one of particles or kf")
    if particles is not None:
        particles = _int(particles, "quench.particles", 1)
    if kf is not None:
        kf = _float(kf, "quench.kf", positive=True)
        if kf > cutoff:
            raise _err("quench.kf", f"Fermi momentum {kf} exceeds the lattice cutoff {cutoff}")
    external = _coeffs(s.take("external", {}), "quench.external", dim)
    exch = _expect(s.take("include_exchange", True), bool, "quench.include_exchange")
    s.finish()
    return QuenchSection(cutoff, particles, kf, external, exch)


def _vlasov_section(raw, strict: bool, dim: int) -> VlasovSection:
    s = _Section(raw, "vlasov", strict)
    alpha = _expect(s.take("alpha"), list, "vlasov.alpha")
    beta = _expect(s.take("beta"), list, "vlasov.beta")
    if len(alpha) != dim or len(beta) != dim:
        raise _err("vlasov", f"alpha and beta need {dim} components")
    alpha = tuple(_int(a, f"vlasov.alpha[{i}]") for i, a in enumerate(alpha))
    beta = tuple(_float(b, f"vlasov.beta[{i}]") for i, b in enumerate(beta))
    nx = _int(s.take("nx", 0), "vlasov.nx", 0)
    jmax = _int(s.take("jmax", 0), "vlasov.jmax", 0)
    s.finish()
    return VlasovSection(alpha, beta, nx, jmax)


def _rpa_section(raw, strict: bool, dim: int) -> RpaSection:
    if dim != 3:
        raise _err("rpa", "the bosonization pipeline is three-dimensional; set dim = 3")
    s = _Section(raw, "rpa", strict)
    kf = _float(s.take("kf"), "rpa.kf", positive=True)
    patches = _int(s.take("patches", 0), "rpa.patches", 0)
    if patches and patches % 2:
        raise _err("rpa.patches", "must be even")
    delta = _float(s.take("delta", 2.0 / 45.0), "rpa.delta", positive=True)
    modes = s.take("modes", None)
    if modes is not None:
        modes = _expect(modes, list, "rpa.modes")
        modes = tuple(",".join(str(c) for c in parse_vector(_expect(m, str, f"rpa.modes[{i}]"), 3)) for i, m in enumerate(modes))
    boson_time = _float(s.take("boson_time", 1.0), "rpa.boson_time")
    s.finish()
    return RpaSection(kf, patches, delta, modes, boson_time)


def _oracle_section(raw, strict: bool) -> OracleSection:
    s = _Section(raw, "oracle", strict)
    checks = _expect(s.take("checks", list(ORACLE_CHECKS)), list, "oracle.checks")
    for i, c in enumerate(checks):
        if c not in ORACLE_CHECKS:
            raise _err(f"oracle.checks[{i}]", f"unknown check {c!r}; choose from {ORACLE_CHECKS}")
    couplings = _expect(s.take("couplings", [1.0]), list, "oracle.couplings")
    couplings = tuple(_float(c, f"oracle.couplings[{i}]", nonneg=True) for i, c in enumerate(couplings))
    max_pairs = _int(s.take("max_pairs", 3), "oracle.max_pairs", 1)
    s.finish()
    return OracleSection(tuple(checks), couplings, max_pairs)


def parse_scenario(data: dict, strict: bool = True) -> Scenario:
    """Validate a decoded TOML document."""
    top = _Section(data, "", strict)
    version = _int(top.take("schema_version"), "schema_version")
    if version != SCHEMA_VERSION:
        raise _err("schema_version", f"unsupported version {version}; this build reads {SCHEMA_VERSION}")
    name = _expect(top.take("name"), str, "name")
    dim = _int(top.take("dim"), "dim")
    if dim not in (1, 2, 3):
        raise _err("dim", "must be 1, 2 or 3")
    seed = _int(top.take("seed", 0), "seed", 0)
    hbar = _hbar_section(top.take("hbar"), strict, dim)
    potential = _coeffs(top.take("potential", {}), "potential", dim)
    sections = {}
    readers = {
        "time": lambda r: _time_section(r, strict),
        "trap": lambda r: _trap_section(r, strict, dim),
        "quench": lambda r: _quench_section(r, strict, dim),
        "vlasov": lambda r: _vlasov_section(r, strict, dim),
        "rpa": lambda r: _rpa_section(r, strict, dim),
        "oracle": lambda r: _oracle_section(r, strict),
    }
    for key, reader in readers.items():
        raw = top.take(key, None)
        sections[key] = None if raw is None else reader(raw)
    top.finish()
    return Scenario(name=name, dim=dim, hbar=hbar, seed=seed, potential=potential, **sections)


def load_scenario(path, strict: bool = True) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return parse_scenario(data, strict=strict)


def serialize_scenario(scenario: Scenario) -> str:
    return tomli_w.dumps(scenario.to_dict())
