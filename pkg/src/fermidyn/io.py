"""Artifact formats: CSV tables, versioned JSON, and little-endian binaries.

Binary phase-space file (64-byte header, then float64 values, C order)::

    0   8s  magic  b"FDPHASE1"
    8   u4  d      u4 nx     u4 n_p    u4 reserved
    24  f8  dx     f8 dp     f8 hbar   f8 p_min
    56  f8  write time (excluded from content hashes)

Binary density-matrix file (80-byte header, then the lower triangle
row by row as complex128)::

    0   8s  magic  b"FDDENS01"
    8   32s sha256 digest of the ordered basis
    40  u8  dim    f8 N      f8 hbar   f8 t
    72  f8  write time (excluded from content hashes)

State vectors use the density layout with magic b"FDSTATE1" and the full
vector instead of a triangle.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
import tempfile
import time
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .density import DensityMatrix
from .errors import ScenarioError
from .lattice import MomentumLattice
from .phasespace import PhaseGrid, PhaseSpaceDensity

__all__ = [
    "SCHEMA_VERSION",
    "atomic_write",
    "write_csv",
    "write_json",
    "write_phase_binary",
    "read_phase_binary",
    "write_density_binary",
    "read_density_binary",
    "write_state_binary",
    "read_state_binary",
    "write_density_csv",
    "content_hash",
    "basis_digest",
]

SCHEMA_VERSION = 1

PHASE_MAGIC = b"FDPHASE1"
DENSITY_MAGIC = b"FDDENS01"
STATE_MAGIC = b"FDSTATE1"
_PHASE_HEAD = struct.Struct("<8s4I4dd")
_DENS_HEAD = struct.Struct("<8s32sQ3dd")
# byte ranges holding the write time
_TIMESTAMP = {PHASE_MAGIC: (56, 64), DENSITY_MAGIC: (72, 80), STATE_MAGIC: (72, 80)}


def atomic_write(path: Path, data: bytes) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (tuple, list, np.ndarray)):
        return ",".join(str(int(c)) for c in x)
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return atomic_write(path, buf.getvalue().encode())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: Path, payload: dict) -> Path:
    body = {"schema_version": SCHEMA_VERSION, **_jsonable(payload)}
    return atomic_write(path, (json.dumps(body, indent=2, sort_keys=True) + "\n").encode())


def write_phase_binary(path: Path, f: PhaseSpaceDensity) -> Path:
    g = f.grid
    head = _PHASE_HEAD.pack(PHASE_MAGIC, g.dim, g.nx, g.n_p, 0, g.dx, g.dp, g.hbar, g.p_min, time.time())
    return atomic_write(path, head + np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_phase_binary(path: Path) -> PhaseSpaceDensity:
    raw = Path(path).read_bytes()
    magic, d, nx, n_p, _, dx, dp, hbar, p_min, _ = _PHASE_HEAD.unpack_from(raw)
    if magic != PHASE_MAGIC:
        raise ScenarioError(f"{path} is not a phase-space file")
    if n_p % 2 != 1 or abs(p_min + (n_p // 2) * dp) > 1e-12 * max(1.0, abs(p_min)):
        raise ScenarioError(f"{path}: momentum grid is not symmetric about 0")
    grid = PhaseGrid(d, nx, n_p // 2, dp, hbar)
    values = np.frombuffer(raw, dtype="<f8", offset=_PHASE_HEAD.size).reshape(grid.shape)
    return PhaseSpaceDensity(values.copy(), grid)


def _packed_lower(m: np.ndarray) -> np.ndarray:
    return m[np.tril_indices(m.shape[0])]


def write_density_binary(path: Path, gamma: DensityMatrix, n: float, t: float) -> Path:
    dim = gamma.matrix.shape[0]
    head = _DENS_HEAD.pack(DENSITY_MAGIC, gamma.lattice.digest(), dim, float(n), gamma.hbar, float(t), time.time())
    data = np.ascontiguousarray(_packed_lower(gamma.matrix), dtype="<c16").tobytes()
    return atomic_write(path, head + data)


def read_density_binary(path: Path, lattice: MomentumLattice) -> tuple[DensityMatrix, float, float]:
    """Returns (gamma, N, t).  The basis digest must match ``lattice``."""
    raw = Path(path).read_bytes()
    magic, digest, dim, n, hbar, t, _ = _DENS_HEAD.unpack_from(raw)
    if magic != DENSITY_MAGIC:
        raise ScenarioError(f"{path} is not a density-matrix file")
    if digest != lattice.digest() or dim != len(lattice):
        raise ScenarioError(f"{path} was written for a different basis")
    tri = np.frombuffer(raw, dtype="<c16", offset=_DENS_HEAD.size)
    m = np.zeros((dim, dim), dtype=complex)
    m[np.tril_indices(dim)] = tri
    m = m + np.tril(m, -1).conj().T
    return DensityMatrix(m, lattice, hbar), n, t


def basis_digest(states: Sequence[int], lattice: MomentumLattice) -> bytes:
    h = hashlib.sha256(lattice.digest())
    h.update(np.asarray(states, dtype="<u8").tobytes())
    return h.digest()


def write_state_binary(path: Path, psi: np.ndarray, digest: bytes, n: int, hbar: float, t: float) -> Path:
    head = _DENS_HEAD.pack(STATE_MAGIC, digest, len(psi), float(n), hbar, float(t), time.time())
    return atomic_write(path, head + np.ascontiguousarray(psi, dtype="<c16").tobytes())


def read_state_binary(path: Path, digest: bytes | None = None) -> tuple[np.ndarray, float, float, float]:
    """Returns (psi, N, hbar, t)."""
    raw = Path(path).read_bytes()
    magic, dig, dim, n, hbar, t, _ = _DENS_HEAD.unpack_from(raw)
    if magic != STATE_MAGIC:
        raise ScenarioError(f"{path} is not a state-vector file")
    if digest is not None and dig != digest:
        raise ScenarioError(f"{path} was written for a different basis")
    psi = np.frombuffer(raw, dtype="<c16", offset=_DENS_HEAD.size, count=dim).copy()
    return psi, n, hbar, t


def write_density_csv(path: Path, gamma: DensityMatrix, atol: float = 0.0) -> Path:
    """Rows (k, k', re, im) for every entry with |gamma| > atol."""
    pts = gamma.lattice.points
    m = gamma.matrix
    rows = ((pts[i], pts[j], m[i, j].real, m[i, j].imag) for i in range(len(pts)) for j in range(len(pts)) if abs(m[i, j]) > atol)
    return write_csv(path, ["k", "k_prime", "re", "im"], rows)


def content_hash(path: Path) -> str:
    """SHA-256 of a file, with the write-time field of binary headers zeroed."""
    raw = bytearray(Path(path).read_bytes())
    span = _TIMESTAMP.get(bytes(raw[:8]))
    if span is not None and len(raw) >= span[1]:
        raw[span[0] : span[1]] = b"\0" * (span[1] - span[0])
    return hashlib.sha256(raw).hexdigest()
