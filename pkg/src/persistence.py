"""Binary field and noise files, CSV curves, run manifests and JSON reports.

Binary layouts (little-endian):

    BNP1: magic, u32 version, u64 seed, f64 dt, u64 steps, u64 n, then steps*n f64
    BFD1: magic, u32 version, u64 n, f64 length, f64 t, then n f64
"""
import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional

import numpy as np
import pandas as pd

from .burgers_core import Trajectory
from .errors import ConfigurationError, FileFormatError
from .grid_noise import NoisePath, PeriodicGrid

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
NOISE_MAGIC = b"BNP1"
NOISE_HEADER = struct.Struct("<4sIQdQQ")
FIELD_MAGIC = b"BFD1"
FIELD_HEADER = struct.Struct("<4sIQdd")
MANIFEST_NAME = "manifest.json"


def _read_header(path: Path, header: struct.Struct, magic: bytes):
    data = Path(path).read_bytes()
    if len(data) < header.size:
        raise FileFormatError(f"{path}: file shorter than the {header.size}-byte header")
    fields = header.unpack_from(data)
    if fields[0] != magic:
        raise FileFormatError(f"{path}: bad magic {fields[0]!r}, expected {magic!r}")
    if fields[1] != FORMAT_VERSION:
        raise FileFormatError(f"{path}: unsupported version {fields[1]}")
    return fields, data[header.size :]


def write_noise_path(path: Path, noise: NoisePath) -> Path:
    """Write a single-realization noise path as BNP1."""
    if noise.realizations is not None:
        raise ConfigurationError("batched noise paths cannot be written as BNP1", field="noise")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    increments = np.ascontiguousarray(noise.increments, dtype="<f8")
    header = NOISE_HEADER.pack(NOISE_MAGIC, FORMAT_VERSION, noise.seed, noise.dt, noise.steps, noise.grid.n)
    path.write_bytes(header + increments.tobytes())
    logger.debug(f"Wrote noise path {path} ({noise.steps} steps)")
    return path


def read_noise_path(path: Path, grid: PeriodicGrid, stream_id: int = 0) -> NoisePath:
    """Read a BNP1 file; the grid length is not stored and must be supplied."""
    (_, _, seed, dt, steps, n), payload = _read_header(path, NOISE_HEADER, NOISE_MAGIC)
    if n != grid.n:
        raise FileFormatError(f"{path}: file has n={n}, grid has n={grid.n}")
    if len(payload) != 8 * steps * n:
        raise FileFormatError(f"{path}: payload has {len(payload)} bytes, expected {8 * steps * n}")
    increments = np.frombuffer(payload, dtype="<f8").reshape(steps, n).astype(float)
    return NoisePath(seed=seed, dt=dt, steps=steps, grid=grid, stream_id=stream_id, stored=increments)


class FieldRecord(NamedTuple):
    values: np.ndarray
    grid: PeriodicGrid
    t: float


def write_field(path: Path, values: np.ndarray, grid: PeriodicGrid, t: float) -> Path:
    grid.check(values)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = FIELD_HEADER.pack(FIELD_MAGIC, FORMAT_VERSION, grid.n, grid.length, float(t))
    path.write_bytes(header + np.ascontiguousarray(values, dtype="<f8").tobytes())
    return path


def read_field(path: Path) -> FieldRecord:
    (_, _, n, length, t), payload = _read_header(path, FIELD_HEADER, FIELD_MAGIC)
    if len(payload) != 8 * n:
        raise FileFormatError(f"{path}: payload has {len(payload)} bytes, expected {8 * n}")
    values = np.frombuffer(payload, dtype="<f8").astype(float)
    return FieldRecord(values=values, grid=PeriodicGrid(length, n), t=t)


def field_to_csv(path: Path, values: np.ndarray, grid: PeriodicGrid) -> Path:
    grid.check(values)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"x": grid.x, "value": values}).to_csv(path, index=False, float_format="%.17g")
    return path


def field_from_csv(path: Path) -> pd.DataFrame:
    frame = pd.read_csv(path)
    missing = {"x", "value"} - set(frame.columns)
    if missing:
        raise FileFormatError(f"{path}: missing columns {sorted(missing)}")
    return frame


def config_hash(payload: Dict) -> str:
    """SHA-256 of canonical JSON (sorted keys, compact separators)."""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(out_dir: Path, manifest: Dict) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def read_manifest(out_dir: Path) -> Dict:
    path = Path(out_dir) / MANIFEST_NAME
    if not path.exists():
        raise FileFormatError(f"{out_dir}: no {MANIFEST_NAME}")
    return json.loads(path.read_text())


def manifest_digest(out_dir: Path) -> str:
    return config_hash(read_manifest(out_dir))


def run_manifest(
    config_digest: str, seed: int, stream_id: int, code_version: str, suite: str, extra: Optional[Dict] = None
) -> Dict:
    manifest = {
        "suite": suite,
        "config_hash": config_digest,
        "code_version": code_version,
        "seeds": {"seed": int(seed), "stream_id": int(stream_id)},
        "status": "running",
        "files": [],
    }
    manifest.update(extra or {})
    return manifest


def save_trajectory(trajectory: Trajectory, out_dir: Path, manifest: Dict) -> Dict:
    """One BFD1 file per (component, snapshot[, realization]) and the completed manifest.

    The manifest is written before the first field so an interrupted run still
    leaves one behind.
    """
    out_dir = Path(out_dir)
    manifest = dict(manifest)
    manifest["times"] = [float(t) for t in trajectory.times]
    manifest["steps"] = int(trajectory.steps)
    manifest["dt"] = trajectory.cfg.dt
    manifest["grid"] = {"length": trajectory.grid.length, "n": trajectory.grid.n}
    write_manifest(out_dir, manifest)

    files: List[str] = []
    grid = trajectory.grid
    for s, snap in enumerate(trajectory.snapshots):
        for c in range(snap.n_components):
            values = snap.component(c)
            if values.ndim == 1:
                rel = f"fields/u_c{c}_s{s}.bfd"
                write_field(out_dir / rel, values, grid, snap.t)
                files.append(rel)
            else:
                for r, row in enumerate(values.reshape(-1, grid.n)):
                    rel = f"fields/u_c{c}_s{s}_r{r}.bfd"
                    write_field(out_dir / rel, row, grid, snap.t)
                    files.append(rel)
    manifest["files"] = files
    manifest["status"] = "complete"
    write_manifest(out_dir, manifest)
    logger.info(f"Saved {len(files)} field files to {out_dir}")
    return manifest


def write_report(out_dir: Path, suite: str, digest: str, assertions: Iterable) -> Path:
    """reports/<suite>.json with one record per assertion; passed only if all passed."""
    records = [a if isinstance(a, dict) else a.to_dict() for a in assertions]
    payload = {
        "suite": suite,
        "config_hash": digest,
        "passed": all(r["passed"] for r in records),
        "assertions": records,
    }
    path = Path(out_dir) / "reports" / f"{suite}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, allow_nan=True))
    logger.info(f"Wrote report {path}")
    return path


def write_curve(out_dir: Path, name: str, frame: pd.DataFrame) -> Path:
    path = Path(out_dir) / "curves" / f"{name}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path
