"""Result persistence.

Binary value fields use the HJVF container: a fixed 64-byte header, stored
level indices, the admissibility mask, float64 level data, and a canonical
JSON trailer. CSV and JSON writers embed the config hash, package versions,
and tolerances as metadata. All writes are atomic (temp file + rename).
Setting HJHOMOG_CACHE points metric-sample memoization at a directory.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from . import __version__ as _pkg_version
from .errors import CorruptHeader, IOFormatError, VersionMismatch
from .sweep import Window
from .value import SpaceTimeGrid, ValueField

MAGIC = b"HJVF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHBBIII3d2d4x")
_BC_CODES = {"oblique": 0, "contact": 1, "homogenized": 2}
_BC_NAMES = {v: k for k, v in _BC_CODES.items()}


def atomic_write(path, data: bytes):
    """Write bytes then rename, so readers never see a partial file."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _canon_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      default=str).encode("utf-8")


def standard_meta(config_hash="", tolerances=None, extra=None):
    meta = {
        "config_hash": config_hash,
        "versions": {"hjhomog": _pkg_version, "numpy": np.__version__,
                     "format": FORMAT_VERSION},
        "tolerances": dict(tolerances or {}),
    }
    if extra:
        meta.update(extra)
    return meta


def store_field(field: ValueField, path):
    """Serialize a ValueField; store(load(x)) is byte-identical."""
    window = field.window
    shape = list(window.shape) + [1] * (2 - len(window.shape))
    level_keys = sorted(field.levels)
    bc_code = _BC_CODES.get(field.bc_kind, 255)
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, bc_code, window.ndim, len(level_keys),
        shape[0], shape[1], window.h, field.grid.dt, field.grid.epsilon,
        float(window.origin[0]),
        float(window.origin[1]) if window.ndim > 1 else 0.0)
    parts = [header]
    parts.append(np.asarray(level_keys, dtype="<u4").tobytes())
    parts.append(np.asarray(field.admissible, dtype=np.uint8).tobytes())
    for k in level_keys:
        parts.append(np.asarray(field.levels[k], dtype="<f8").tobytes())
    meta = {
        "bc_kind": field.bc_kind,
        "u0": field.u0_desc,
        "t_final": field.grid.t_final,
        "window": window.descriptor(),
        "meta": field.meta,
    }
    blob = _canon_json(meta)
    parts.append(struct.pack("<Q", len(blob)))
    parts.append(blob)
    atomic_write(path, b"".join(parts))


def load_field(path) -> ValueField:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IOFormatError(f"cannot read {path}: {exc}") from exc
    if len(data) < _HEADER.size:
        raise CorruptHeader(f"{path}: file shorter than the header")
    (magic, version, bc_code, ndim, nt, d0, d1, h, dt, eps,
     o0, o1) = _HEADER.unpack(data[:_HEADER.size])
    if magic != MAGIC:
        raise CorruptHeader(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: format version {version}, expected {FORMAT_VERSION}")
    pos = _HEADER.size
    shape = (d0, d1)[:ndim]
    node_count = int(np.prod(shape))

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise CorruptHeader(f"{path}: truncated at byte {pos}")
        out = data[pos:pos + n]
        pos += n
        return out

    level_keys = np.frombuffer(take(4 * nt), dtype="<u4").tolist()
    mask = np.frombuffer(take(node_count), dtype=np.uint8).astype(bool)
    levels = {}
    for k in level_keys:
        levels[int(k)] = np.frombuffer(take(8 * node_count), dtype="<f8").copy()
    (meta_len,) = struct.unpack("<Q", take(8))
    blob = take(meta_len)
    if pos != len(data):
        raise CorruptHeader(f"{path}: {len(data) - pos} trailing bytes")
    try:
        meta = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptHeader(f"{path}: unreadable meta trailer") from exc
    wdesc = meta["window"]
    window = Window(np.asarray(wdesc["origin"], dtype=float),
                    tuple(wdesc["shape"]), wdesc["h"],
                    periodic=tuple(wdesc.get("periodic", [False] * ndim)))
    grid = SpaceTimeGrid(window, dt, meta["t_final"], epsilon=eps)
    bc_kind = meta.get("bc_kind", _BC_NAMES.get(bc_code, "oblique"))
    return ValueField(grid, levels, mask, bc_kind, meta["u0"],
                      meta=meta.get("meta", {}))


def write_csv(path, columns, rows, metadata=None):
    """Delimited table with `# key: value` metadata comment lines."""
    meta = metadata or {}
    lines = []
    for key in sorted(meta):
        lines.append(f"# {key}: {json.dumps(meta[key], sort_keys=True, default=str)}")
    lines.append(",".join(columns))
    for row in rows:
        cells = []
        for c in row:
            if isinstance(c, float):
                cells.append(format(c, ".17g"))
            else:
                cells.append(str(c))
        lines.append(",".join(cells))
    atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def write_json(path, payload, meta=None):
    doc = {"meta": meta or {}, "data": payload}
    atomic_write(path, (json.dumps(doc, sort_keys=True, indent=2, default=str)
                        + "\n").encode("utf-8"))


# -- metric-sample cache -------------------------------------------------------


def cache_dir():
    return os.environ.get("HJHOMOG_CACHE") or None


def cache_key(kind, payload):
    blob = _canon_json({"kind": kind, "payload": payload})
    return hashlib.sha256(blob).hexdigest()


def cache_get(key):
    d = cache_dir()
    if not d:
        return None
    p = os.path.join(d, key + ".json")
    if not os.path.exists(p):
        return None
    try:
        with open(p, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError):
        return None


def cache_put(key, obj):
    d = cache_dir()
    if not d:
        return False
    os.makedirs(d, exist_ok=True)
    atomic_write(os.path.join(d, key + ".json"),
                 (json.dumps(obj, sort_keys=True, default=str) + "\n").encode("utf-8"))
    return True
