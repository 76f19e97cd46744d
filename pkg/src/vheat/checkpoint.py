"""Little-endian binary checkpoints.

Layout::

    b"VHEAT001"                 magic, last three bytes are the format version
    u32  header length
    ...  header JSON (UTF-8): {"config": {...}, "seed": int, "optimizer_step": int|null, ...}
    u32  record count
    per record:
        u32 name length, name (UTF-8), u8 ndim, ndim x u32 dims, f32 payload
    u64  FNV-1a over every preceding byte

Parameters are stored as f32. Optimizer moments, when saved, are extra records
named ``optim.m.<param>`` / ``optim.v.<param>``.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .backbone import ModelConfig, VHeat

MAGIC_PREFIX = b"VHEAT"
FORMAT_VERSION = 1
MAGIC = MAGIC_PREFIX + b"%03d" % FORMAT_VERSION


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    params: list = field(default_factory=list)          # [(name, ndarray f32)]
    optimizer: Optional[dict] = None                    # {"step": int, "m": {...}, "v": {...}}
    seed: int = 0
    extra: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION


def _record(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    nb = name.encode("utf-8")
    if arr.ndim > 255:
        raise CheckpointError(f"record {name}: too many dims")
    head = struct.pack("<I", len(nb)) + nb + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def encode(ck: Checkpoint) -> bytes:
    header = {
        "config": ck.config.to_dict(),
        "seed": ck.seed,
        "optimizer_step": None if ck.optimizer is None else int(ck.optimizer["step"]),
        **ck.extra,
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    records = list(ck.params)
    if ck.optimizer is not None:
        records += [(f"optim.m.{n}", a) for n, a in ck.optimizer["m"].items()]
        records += [(f"optim.v.{n}", a) for n, a in ck.optimizer["v"].items()]
    parts = [MAGIC, struct.pack("<I", len(hb)), hb, struct.pack("<I", len(records))]
    parts += [_record(n, a) for n, a in records]
    body = b"".join(parts)
    return body + struct.pack("<Q", kernels.fnv1a64(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(
                f"truncated checkpoint while reading {what} (need {n} bytes at offset {self.pos}, "
                f"file has {len(self.buf)})")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    magic = r.take(8, "magic")
    if magic[:5] != MAGIC_PREFIX:
        raise CheckpointError(f"not a vheat checkpoint (bad magic {magic!r})")
    try:
        version = int(magic[5:])
    except ValueError:
        raise CheckpointError(f"bad magic {magic!r}") from None
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version} (expected {FORMAT_VERSION})")
    (hlen,) = r.unpack("<I", "header length")
    header = json.loads(r.take(hlen, "header JSON").decode("utf-8"))
    (count,) = r.unpack("<I", "record count")
    records = []
    for i in range(count):
        (nlen,) = r.unpack("<I", f"record {i} name length")
        name = r.take(nlen, f"record {i} name").decode("utf-8")
        (ndim,) = r.unpack("<B", f"record {name!r} ndim")
        dims = r.unpack(f"<{ndim}I", f"record {name!r} dims")
        n = int(np.prod(dims)) if ndim else 1
        payload = r.take(4 * n, f"record {name!r} payload")
        records.append((name, np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)))
    body_end = r.pos
    (checksum,) = r.unpack("<Q", "trailing checksum")
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} unexpected trailing bytes after checksum")
    if kernels.fnv1a64(buf[:body_end]) != checksum:
        raise CheckpointError("checksum mismatch: checkpoint is corrupt")

    params, m, v = [], {}, {}
    for name, arr in records:
        if name.startswith("optim.m."):
            m[name[8:]] = arr
        elif name.startswith("optim.v."):
            v[name[8:]] = arr
        else:
            params.append((name, arr))
    step = header.pop("optimizer_step", None)
    optimizer = {"step": step, "m": m, "v": v} if step is not None else None
    config = ModelConfig.from_dict(header.pop("config"))
    seed = header.pop("seed", 0)
    return Checkpoint(config, params, optimizer, seed, header, version)


def expected_size(ck: Checkpoint) -> int:
    """Closed-form byte size of the encoded checkpoint."""
    header = {"config": ck.config.to_dict(), "seed": ck.seed,
              "optimizer_step": None if ck.optimizer is None else int(ck.optimizer["step"]), **ck.extra}
    hlen = len(json.dumps(header, sort_keys=True).encode("utf-8"))
    records = list(ck.params)
    if ck.optimizer is not None:
        records += [(f"optim.m.{n}", a) for n, a in ck.optimizer["m"].items()]
        records += [(f"optim.v.{n}", a) for n, a in ck.optimizer["v"].items()]
    size = 8 + 4 + hlen + 4 + 8
    for name, a in records:
        size += 4 + len(name.encode("utf-8")) + 1 + 4 * np.ndim(a) + 4 * np.size(a)
    return size


def from_model(model: VHeat, optimizer=None, extra: Optional[dict] = None) -> Checkpoint:
    params = [(n, p.data) for n, p in model.named_parameters()]
    opt = None
    if optimizer is not None:
        names = {id(p): n for n, p in model.named_parameters()}
        opt = {"step": optimizer.step_count,
               "m": {names[id(p)]: optimizer.m[i] for i, p in enumerate(optimizer.params)},
               "v": {names[id(p)]: optimizer.v[i] for i, p in enumerate(optimizer.params)}}
    cfg = model.cfg
    if model.extent != (cfg.input_extent, cfg.input_extent):
        raise CheckpointError("resized models cannot be checkpointed; save at the build extent")
    return Checkpoint(cfg, params, opt, model.seed, dict(extra or {}))


def save_checkpoint(model: VHeat, path, optimizer=None, extra: Optional[dict] = None) -> int:
    data = encode(from_model(model, optimizer, extra))
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return len(data)


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode(fh.read())


def load_checkpoint(path) -> VHeat:
    ck = read_checkpoint(path)
    model = VHeat(ck.config, ck.seed)
    model.load_state_dict(dict(ck.params))
    model.checkpoint_extra = ck.extra
    return model
