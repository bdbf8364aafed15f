"""Versioned, checksummed binary snapshots of a network's full dynamic state.

Layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"WSNP"
    4       2     format version (uint16)
    6       2     reserved, zero
    8       8     payload length in bytes (uint64)
    16      32    SHA-256 of the payload
    48      ...   payload

    payload:
    0       8     header length H (uint64)
    8       H     UTF-8 JSON header
    8+H     ...   arrays, concatenated in header order, each C-contiguous

The header records the network config, construction seed and builder, a
digest of the sparsity structure, clock, learning-rate state, activity
tracker, the simulation RNG state and a table of arrays
(name, dtype string such as ``<f8``, shape). Loading rebuilds the network
from config and seed, checks the structure digest and then overwrites every
dynamic array, so a loaded network continues bit-identically.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .config import NetworkConfig, config_digest, from_dict, to_dict
from .protocol import ActivityTracker
from .topology import ModularNetwork, ThreeWayNetwork, build_isolated, build_three_way

MAGIC = b"WSNP"
VERSION = 1
_PREFIX = struct.Struct("<4sHHQ32s")


class SnapshotError(IOError):
    pass


class SnapshotVersionError(SnapshotError):
    pass


class SnapshotCorruptError(SnapshotError):
    pass


def structure_digest(net: ModularNetwork) -> str:
    h = hashlib.sha256()
    for c in net.connections:
        m = c.matrix
        h.update(f"{c.source}->{c.target}:{m.n_pre}x{m.n_post}:{int(m.rule)}".encode())
        h.update(np.ascontiguousarray(m.pre, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(m.post, dtype="<i8").tobytes())
    return h.hexdigest()


def _builder(net: ModularNetwork) -> dict:
    if isinstance(net, ThreeWayNetwork):
        return {"kind": "three_way"}
    if len(net.populations) == 1:
        return {"kind": "isolated", "name": next(iter(net.populations))}
    raise SnapshotError("only three-way and isolated networks can be snapshotted")


def _le(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<"))


def encode(net: ModularNetwork, extra: dict | None = None) -> bytes:
    arrays = net.state_arrays()
    table, blobs = [], []
    for name, a in arrays.items():
        a = _le(np.asarray(a))
        table.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape)})
        blobs.append(a.tobytes())
    tracker = net.tracker
    header = {
        "builder": _builder(net),
        "seed": int(net.seed),
        "network": to_dict(net.config),
        "config_digest": config_digest(net.config),
        "structure_digest": structure_digest(net),
        "step_count": int(net.clock.step_count),
        "rng": net.rng.bit_generator.state,
        "rates": {"sign": net.rates.sign, "multiplier": net.rates.multiplier,
                  "enabled": net.rates.enabled,
                  "inhibitory_enabled": net.rates.inhibitory_enabled},
        "tracker": None if tracker is None else {"tau": tracker.tau, "totals": tracker.totals},
        "arrays": table,
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    payload = struct.pack("<Q", len(hbytes)) + hbytes + b"".join(blobs)
    return _PREFIX.pack(MAGIC, VERSION, 0, len(payload), hashlib.sha256(payload).digest()) + payload


def decode(blob: bytes) -> tuple[dict, dict]:
    """Split a snapshot into (header, arrays) after verifying version and checksum."""
    if len(blob) < _PREFIX.size:
        raise SnapshotCorruptError("file too short for a snapshot header")
    magic, version, _, n, digest = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise SnapshotCorruptError("not a snapshot file (bad magic)")
    if version != VERSION:
        raise SnapshotVersionError(f"snapshot format version {version}, expected {VERSION}")
    payload = blob[_PREFIX.size:]
    if len(payload) != n:
        raise SnapshotCorruptError(f"payload length {len(payload)} != recorded {n}")
    if hashlib.sha256(payload).digest() != digest:
        raise SnapshotCorruptError("checksum mismatch")
    (hlen,) = struct.unpack_from("<Q", payload)
    header = json.loads(payload[8:8 + hlen].decode())
    arrays, off = {}, 8 + hlen
    for entry in header["arrays"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        a = np.frombuffer(payload, dtype=dt, count=count, offset=off).reshape(entry["shape"])
        arrays[entry["name"]] = a.astype(dt.newbyteorder("="))
        off += count * dt.itemsize
    if off != len(payload):
        raise SnapshotCorruptError("trailing bytes after the array table")
    return header, arrays


def save_snapshot(net: ModularNetwork, path, extra: dict | None = None) -> Path:
    path = Path(path)
    try:
        path.write_bytes(encode(net, extra))
    except OSError as e:
        raise SnapshotError(f"cannot write snapshot {path}: {e}") from e
    return path


def network_from(header: dict, arrays: dict) -> ModularNetwork:
    cfg = from_dict(NetworkConfig, header["network"])
    b = header["builder"]
    if b["kind"] == "three_way":
        net = build_three_way(cfg, header["seed"])
    elif b["kind"] == "isolated":
        net = build_isolated(cfg, header["seed"], b["name"])
    else:
        raise SnapshotCorruptError(f"unknown builder {b['kind']!r}")
    if structure_digest(net) != header["structure_digest"]:
        raise SnapshotCorruptError("rebuilt network does not match the stored structure")
    live = net.state_arrays()
    if set(live) != set(arrays):
        raise SnapshotCorruptError("snapshot array set does not match the network")
    for k, a in live.items():
        if a.shape != arrays[k].shape:
            raise SnapshotCorruptError(f"array {k!r} has shape {arrays[k].shape}, expected {a.shape}")
        a[:] = arrays[k]
    net.clock.step_count = header["step_count"]
    net.rng.bit_generator.state = header["rng"]
    for k, v in header["rates"].items():
        setattr(net.rates, k, v)
    tr = header["tracker"]
    if tr is not None:
        net.tracker = ActivityTracker(tr["tau"], dict(tr["totals"]))
    return net


def load_snapshot(path, with_header: bool = False):
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise SnapshotError(f"cannot read snapshot {path}: {e}") from e
    header, arrays = decode(blob)
    net = network_from(header, arrays)
    return (net, header) if with_header else net
