"""On-disk formats: path archives, JSON records, configs and CSV/.dat tables.

Path archive layout (all little-endian)::

    magic      8s   b"ACPATH1\\0"
    version    u4
    n          u4   interior grid points (rows hold n + 2 values)
    x_minus    f8
    x_plus     f8
    count      u8   number of paths
    hash       16s  config hash, ASCII, zero padded
    meta_len   u4
    meta       meta_len bytes of UTF-8 JSON
    values     count * (n + 2) float64
    chain_ids  count int32
    crc32      u4   over every preceding byte

Writes go to a temporary file in the target directory and are renamed into
place, so readers never see a partial file.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IntegrityError, MigrationError
from .path_domain import Grid

MAGIC = b"ACPATH1\0"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<8sIIddQ16sI")
_MAX_META = 1 << 26


@dataclass(frozen=True)
class ArchiveHeader:
    """Fixed-size archive header."""

    version: int
    grid: Grid
    count: int
    config_hash: str = ""

    def to_json(self) -> dict:
        return {"version": self.version, "grid": self.grid.to_json(), "count": self.count,
                "config_hash": self.config_hash}


@dataclass
class PathArchive:
    """Decoded archive: header, metadata and the stacked path values."""

    header: ArchiveHeader
    values: np.ndarray
    chain_ids: np.ndarray
    metadata: dict = field(default_factory=dict)


# ------------------------------------------------------------------ helpers

def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "to_json"):
        return _to_jsonable(obj.to_json())
    return obj


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, non-finite floats as strings)."""
    return json.dumps(_to_jsonable(obj), sort_keys=True, indent=1)


def atomic_write(path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ----------------------------------------------------------------- archives

def encode_archive(values, grid: Grid, chain_ids=None, metadata: dict | None = None,
                   config_hash: str = "") -> bytes:
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim != 2 or values.shape[1] != grid.n + 2:
        raise ConfigError("values must have shape (count, n + 2)")
    count = values.shape[0]
    ids = np.zeros(count, dtype="<i4") if chain_ids is None else np.asarray(chain_ids, dtype="<i4")
    if ids.shape != (count,):
        raise ConfigError("chain_ids must have one entry per path")
    h = config_hash.encode("ascii")
    if len(h) > 16:
        raise ConfigError("config hash longer than 16 characters")
    meta = dumps(metadata or {}).encode()
    head = _HEAD.pack(MAGIC, FORMAT_VERSION, grid.n, grid.x_minus, grid.x_plus, count,
                      h.ljust(16, b"\0"), len(meta))
    body = head + meta + values.tobytes() + ids.tobytes()
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode_archive(blob: bytes) -> PathArchive:
    """Parse archive bytes; every malformed input raises ``IntegrityError``."""
    if len(blob) < _HEAD.size + 4:
        raise IntegrityError("archive truncated: shorter than its header")
    try:
        magic, version, n, xm, xp, count, h, mlen = _HEAD.unpack_from(blob, 0)
    except struct.error as exc:
        raise IntegrityError(f"unreadable header: {exc}") from None
    if magic != MAGIC:
        raise IntegrityError("not a path archive (bad magic)")
    if version != FORMAT_VERSION:
        raise MigrationError(f"archive format version {version} is not supported by this "
                             f"reader (expects {FORMAT_VERSION}); convert it explicitly")
    if mlen > _MAX_META or n < 1 or n > 1 << 28 or count > 1 << 40:
        raise IntegrityError("implausible header fields")
    row = n + 2
    expect = _HEAD.size + mlen + count * row * 8 + count * 4 + 4
    if len(blob) != expect:
        raise IntegrityError(f"declared count {count} does not match payload size "
                             f"({len(blob)} bytes, expected {expect})")
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != crc:
        raise IntegrityError("checksum mismatch: payload corrupted")
    try:
        grid = Grid(float(xm), float(xp), int(n))
        meta = json.loads(blob[_HEAD.size:_HEAD.size + mlen].decode())
        hs = h.rstrip(b"\0").decode("ascii")
    except Exception as exc:  # any decoding failure is an integrity problem
        raise IntegrityError(f"malformed archive header or metadata: {exc}") from None
    off = _HEAD.size + mlen
    values = np.frombuffer(blob, dtype="<f8", count=count * row, offset=off).reshape(count, row)
    ids = np.frombuffer(blob, dtype="<i4", count=count, offset=off + count * row * 8)
    header = ArchiveHeader(int(version), grid, int(count), hs)
    return PathArchive(header, values.astype(float), ids.astype(np.int64), meta)


def save_paths(path, values, grid: Grid, chain_ids=None, metadata=None, config_hash="") -> None:
    atomic_write(path, encode_archive(values, grid, chain_ids, metadata, config_hash))


def load_paths(path) -> PathArchive:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError:
        raise
    return decode_archive(blob)


def save_ensemble(path, ensemble) -> None:
    """Persist a sampler :class:`~acgibbs.gibbs_sampler.Ensemble`."""
    meta = dict(ensemble.metadata)
    meta["u_minus"], meta["u_plus"] = ensemble.u_minus, ensemble.u_plus
    save_paths(path, ensemble.values, ensemble.grid, ensemble.chain_ids, meta,
               str(ensemble.metadata.get("config_hash", "")))


def load_ensemble(path):
    from .gibbs_sampler import Ensemble

    arc = load_paths(path)
    meta = dict(arc.metadata)
    um = meta.pop("u_minus", None)
    up = meta.pop("u_plus", None)
    if um is None or up is None:
        if arc.header.count == 0:
            raise IntegrityError("ensemble archive lacks boundary data")
        um, up = arc.values[0, 0], arc.values[0, -1]
    return Ensemble(arc.header.grid, float(um), float(up), arc.values, arc.chain_ids, meta)


# ------------------------------------------------------------ JSON records

def save_json(path, obj) -> None:
    atomic_write(path, (dumps(obj) + "\n").encode())


def load_json(path):
    try:
        with open(path, "rb") as fh:
            return json.loads(fh.read().decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"{path}: malformed JSON record ({exc})") from None


# ------------------------------------------------------------------ configs

def _check(cond: bool, field_name: str, msg: str):
    if not cond:
        raise ConfigError(f"{field_name}: {msg}")


def validate_config(cfg: dict) -> dict:
    """Validate common run-configuration fields, naming the offending one.

    Recognised keys: ``epsilon`` (or ``eps``), ``L``, ``dx``, ``u_minus``,
    ``u_plus``, ``block``, ``kernel``, ``beta``, ``sweeps``, ``burn_in``,
    ``thin``, ``seed``, ``chains``, ``threads``, ``delta``. Unknown keys are
    passed through.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("config: expected a JSON object")
    out = dict(cfg)
    if "eps" in out and "epsilon" not in out:
        out["epsilon"] = out.pop("eps")

    def num(k):
        v = out[k]
        _check(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v), k,
               "must be a finite number")
        return float(v)

    for k in ("epsilon", "L", "dx", "beta", "delta"):
        if k in out:
            v = num(k)
            _check(v > 0, k, "must be positive")
    if "delta" in out:
        _check(out["delta"] < 0.5, "delta", "must lie in (0, 1/2)")
    if "beta" in out:
        _check(out["beta"] <= 1, "beta", "must lie in (0, 1]")
    for k in ("u_minus", "u_plus"):
        if k in out:
            num(k)
    for k in ("block", "sweeps", "burn_in", "thin", "seed", "chains", "threads"):
        if k in out:
            v = out[k]
            _check(isinstance(v, int) and not isinstance(v, bool), k, "must be an integer")
            _check(v >= 0 if k in ("burn_in", "seed") else v >= 1, k, "out of range")
    if "kernel" in out:
        _check(out["kernel"] in ("block-independence", "pcn"), "kernel",
               "must be 'block-independence' or 'pcn'")
    if "sweeps" in out and "burn_in" in out:
        _check(out["sweeps"] > out["burn_in"], "burn_in", "must be smaller than sweeps")
    if "L" in out and "dx" in out:
        cells = 2 * out["L"] / out["dx"]
        _check(abs(cells - round(cells)) < 1e-6 and round(cells) >= 2, "dx",
               "must divide the domain [-L, L] into at least two cells")
    return out


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = json.loads(fh.read().decode())
    except FileNotFoundError:
        raise ConfigError(f"config: file {path} not found") from None
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config: malformed JSON ({exc})") from None
    return validate_config(cfg)


# ------------------------------------------------------------------- tables

def records_to_csv(records: list) -> str:
    """CSV text with the union of record keys as columns (sorted)."""
    cols = sorted({k for r in records for k in r})
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow({k: _cell(r.get(k, "")) for k in cols})
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(_to_jsonable(v), sort_keys=True)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def records_to_dat(records: list, columns: list) -> str:
    """Whitespace-separated columns with a ``#`` header (gnuplot friendly)."""
    lines = ["# " + " ".join(columns)]
    for r in records:
        row = []
        for c in columns:
            v = r.get(c, math.nan)
            row.append(repr(float(v)) if isinstance(v, (int, float, np.number))
                       and not isinstance(v, bool) else str(v).replace(" ", "_"))
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"


def save_csv(path, records: list) -> None:
    atomic_write(path, records_to_csv(records).encode())


def save_dat(path, records: list, columns: list) -> None:
    atomic_write(path, records_to_dat(records, columns).encode())
