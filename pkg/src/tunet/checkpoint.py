"""Binary checkpoint format shared by training and inference.

Layout (all little-endian):

    magic   4 bytes  b"TUNW"
    u32     format version (currently 1)
    u64     config block byte length
    bytes   config block, UTF-8 ``key = value`` lines
    u32     record count
    records name (u16 length + UTF-8), dtype string (u8 length + ASCII),
            u8 ndim, u64 per dimension, u64 byte length, raw data

Records carry model parameters (``param:``), non-trainable buffers
(``buf:``) and optimizer moments (``adam.m:`` / ``adam.v:``). Raw IEEE bytes
round-trip bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from tunet.model import TUNet, TUNetConfig

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError", "Checkpoint"]

MAGIC = b"TUNW"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: TUNetConfig
    meta: dict[str, str]  # step, epoch, seed, anything run-level
    records: dict[str, np.ndarray]

    def build_model(self, dtype=None) -> TUNet:
        params = {k.removeprefix("param:"): v for k, v in self.records.items() if k.startswith("param:")}
        any_param = next(iter(params.values()))
        model = TUNet(self.config, seed=int(self.meta.get("seed", "0")), dtype=dtype or any_param.dtype)
        target = model.parameters()
        if set(target) != set(params):
            missing = set(target) ^ set(params)
            raise CheckpointError(f"parameter set mismatch, offending names: {sorted(missing)[:5]}")
        for name, p in target.items():
            if p.data.shape != params[name].shape:
                raise CheckpointError(
                    f"shape mismatch for {name}: model {p.data.shape} vs checkpoint {params[name].shape}"
                )
            p.data = params[name].astype(p.data.dtype, copy=True)
        bufs = {k.removeprefix("buf:"): v for k, v in self.records.items() if k.startswith("buf:")}
        if bufs:
            model.load_buffers(bufs)
        return model


def _write_str(out: list[bytes], s: str, width: str) -> None:
    raw = s.encode("utf-8")
    out.append(struct.pack(f"<{width}", len(raw)))
    out.append(raw)


def save_checkpoint(
    path,
    model: TUNet,
    moments: dict[str, tuple[np.ndarray, np.ndarray]] | None = None,
    meta: dict | None = None,
) -> None:
    meta = {k: str(v) for k, v in (meta or {}).items()}
    meta.setdefault("seed", str(model.seed))
    config_lines = [f"{k} = {v}" for k, v in model.config.to_flat_dict().items()]
    config_lines += [f"meta.{k} = {v}" for k, v in sorted(meta.items())]
    config_blob = "\n".join(config_lines).encode("utf-8")

    records: list[tuple[str, np.ndarray]] = []
    for name, p in model.parameters().items():
        records.append((f"param:{name}", p.data))
    for name, buf in model.buffers().items():
        records.append((f"buf:{name}", buf))
    if moments is not None:
        for name, (m, v) in moments.items():
            records.append((f"adam.m:{name}", m))
            records.append((f"adam.v:{name}", v))

    out: list[bytes] = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    out.append(struct.pack("<Q", len(config_blob)))
    out.append(config_blob)
    out.append(struct.pack("<I", len(records)))
    for name, arr in records:
        arr = np.ascontiguousarray(arr)
        _write_str(out, name, "H")
        _write_str(out, arr.dtype.str, "B")
        out.append(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            out.append(struct.pack("<Q", dim))
        raw = arr.tobytes()
        out.append(struct.pack("<Q", len(raw)))
        out.append(raw)
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("truncated checkpoint")
        chunk = self.blob[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        (value,) = struct.unpack(fmt, self.take(struct.calcsize(fmt)))
        return value


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"bad magic in {path}; not a model checkpoint")
    version = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    config_blob = r.take(r.unpack("<Q")).decode("utf-8")
    flat: dict[str, str] = {}
    meta: dict[str, str] = {}
    for line in config_blob.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(" = ")
        if key.startswith("meta."):
            meta[key.removeprefix("meta.")] = value
        else:
            flat[key] = value
    config = TUNetConfig.from_flat_dict(flat)

    records: dict[str, np.ndarray] = {}
    for _ in range(r.unpack("<I")):
        name = r.take(r.unpack("<H")).decode("utf-8")
        dtype = np.dtype(r.take(r.unpack("<B")).decode("ascii"))
        ndim = r.unpack("<B")
        shape = tuple(r.unpack("<Q") for _ in range(ndim))
        raw = r.take(r.unpack("<Q"))
        records[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return Checkpoint(config=config, meta=meta, records=records)
