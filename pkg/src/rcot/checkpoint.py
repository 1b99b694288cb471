"""Versioned binary checkpoints for parameter stores.

Layout (all integers little-endian)::

    magic    8 bytes  b"RCOTCKPT"
    version  u32
    spec     u32 length + UTF-8 JSON {"stores": {name: NetSpec}, "meta": {...}}
    arrays   u32 count, then per array:
               u16 name length, name, u8 ndim, ndim x u64 dims,
               prod(dims) float64 values
    crc32    u32 over every preceding byte

Array names are ``<store>/<parameter>``. Files are written to a temporary
sibling and renamed, so a crash never leaves a half-written checkpoint.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .core import RcotError
from .nets import NetSpec, ParamStore, init_params

MAGIC = b"RCOTCKPT"
VERSION = 1


class CheckpointError(RcotError):
    """Unreadable, corrupted or incompatible checkpoint; ``section`` names the part."""

    def __init__(self, section, message):
        super().__init__(f"checkpoint {section}: {message}")
        self.section = section


def _encode(stores, meta):
    spec = {"stores": {k: s.spec.to_dict() for k, s in stores.items()}, "meta": meta or {}}
    blob = json.dumps(spec, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(blob)), blob]
    arrays = [(f"{k}/{n}", v) for k, s in stores.items() for n, v in s.values.items()]
    parts.append(struct.pack("<I", len(arrays)))
    for name, value in arrays:
        raw = name.encode("utf-8")
        value = np.ascontiguousarray(value, dtype="<f8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", value.ndim))
        parts.append(struct.pack(f"<{value.ndim}Q", *value.shape))
        parts.append(value.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(stores, path, meta=None):
    """Write ``{name: ParamStore}`` plus a JSON-serializable ``meta`` dict."""
    path = Path(path)
    data = _encode(stores, meta)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, section):
        if self.pos + n > len(self.data):
            raise CheckpointError(section, "file is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, section):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), section))


def load_checkpoint(path, expected=None):
    """Read a checkpoint; returns ``(stores, meta)``.

    ``expected`` optionally maps store names to the NetSpec they must
    carry; any difference raises CheckpointError for the ``spec`` section.
    Nothing is returned unless the whole file validates.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as err:
        raise CheckpointError("file", str(err)) from err
    r = _Reader(data)
    if r.take(len(MAGIC), "header") != MAGIC:
        raise CheckpointError("header", "bad magic bytes")
    (version,) = r.unpack("<I", "header")
    if version != VERSION:
        raise CheckpointError("header", f"unsupported version {version} (expected {VERSION})")
    (n_spec,) = r.unpack("<I", "spec")
    try:
        spec = json.loads(r.take(n_spec, "spec").decode("utf-8"))
        specs = {k: NetSpec.from_dict(v) for k, v in spec["stores"].items()}
    except (ValueError, KeyError, TypeError) as err:
        raise CheckpointError("spec", f"malformed spec block ({err})") from err
    (count,) = r.unpack("<I", "arrays")
    values = {k: {} for k in specs}
    for _ in range(count):
        (n_name,) = r.unpack("<H", "arrays")
        name = r.take(n_name, "arrays").decode("utf-8", errors="replace")
        (ndim,) = r.unpack("<B", "arrays")
        dims = r.unpack(f"<{ndim}Q", "arrays")
        raw = r.take(8 * int(np.prod(dims, dtype=np.int64)), "arrays")
        store, _, param = name.partition("/")
        if store not in values:
            raise CheckpointError("arrays", f"array {name!r} belongs to no declared store")
        values[store][param] = np.frombuffer(raw, dtype="<f8").reshape(dims).astype(np.float64)
    (crc,) = r.unpack("<I", "checksum")
    if r.pos != len(data):
        raise CheckpointError("checksum", "trailing bytes after checksum")
    if zlib.crc32(data[:-4]) != crc:
        raise CheckpointError("checksum", "CRC mismatch, file is corrupted")
    if expected is not None:
        for name, want in expected.items():
            got = specs.get(name)
            if got != want:
                raise CheckpointError(
                    "spec", f"store {name!r} was saved with {got} but {want} is required")
    for name, spec_ in specs.items():
        want = {k: v.shape for k, v in init_params(spec_, 0).values.items()}
        got = {k: v.shape for k, v in values[name].items()}
        if want != got:
            raise CheckpointError("arrays", f"store {name!r} arrays do not match its spec")
    stores = {k: ParamStore(values[k], specs[k]) for k in specs}
    return stores, spec["meta"]


def save_model(path, m, potential=None, meta=None):
    """Checkpoint an RcotMap (and optionally its potential)."""
    stores = dict(m.stores())
    if potential is not None:
        stores["potential"] = potential
    meta = dict(meta or {})
    meta.update({"shape": list(m.shape), "trc": m.trc, "detach_residual": m.detach_residual})
    save_checkpoint(stores, path, meta)


def load_model(path, shape=None):
    """Inverse of :func:`save_model`; returns ``(map, potential or None, meta)``.

    When ``shape`` is given it must match the stored data shape.
    """
    from .transport import RcotMap

    stores, meta = load_checkpoint(path)
    missing = {"generator", "encoder", "fusion"} - set(stores)
    if missing:
        raise CheckpointError("spec", f"missing stores {sorted(missing)}")
    stored_shape = tuple(meta.get("shape", stores["generator"].spec.shape))
    if shape is not None and tuple(shape) != stored_shape:
        raise CheckpointError("spec", f"data shape {tuple(shape)} does not match checkpoint {stored_shape}")
    m = RcotMap(stores["generator"], stores["encoder"], stores["fusion"], stored_shape,
                bool(meta.get("trc", True)), bool(meta.get("detach_residual", False)))
    return m, stores.get("potential"), meta
