"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"HYBKAN01"                      8-byte magic
    u32 version                      currently 1
    u64 manifest_len, manifest       UTF-8 JSON object
    u32 n_tensors
    n_tensors x record:
        u16 name_len, name           UTF-8
        u8  dtype code               1 = float32, 2 = float64, 3 = int64
        u8  ndim
        u64 x ndim shape
        payload                      little-endian, C order

Tensor names are prefixed ``param/``, ``ema/``, ``adam_m/``, ``adam_v/`` or
``buffer/``.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .module import Module

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "CheckpointError",
    "CheckpointMagicError",
    "CheckpointVersionError",
    "CheckpointShapeError",
    "Checkpoint",
    "write_checkpoint",
    "read_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "restore_model",
]

MAGIC = b"HYBKAN01"
FORMAT_VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("<i8")}
_CODES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2, np.dtype(np.int64): 3}


class CheckpointError(ValueError):
    """Malformed or truncated checkpoint."""


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    manifest: dict
    tensors: dict[str, np.ndarray]

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        p = prefix + "/"
        return {k[len(p):]: v for k, v in self.tensors.items() if k.startswith(p)}


def write_checkpoint(path, manifest: dict, tensors: dict[str, np.ndarray]) -> Path:
    """Write atomically: a temp file is renamed over ``path`` only once complete."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with tmp.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr)
            code = _CODES.get(arr.dtype)
            if code is None:
                raise CheckpointError(f"unsupported dtype {arr.dtype} for tensor {name!r}")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<BB", code, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    os.replace(tmp, path)
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(path) -> Checkpoint:
    r = _Reader(Path(path).read_bytes())
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointMagicError(f"{path}: not a checkpoint (bad magic)")
    version, mlen = r.unpack("<IQ")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    try:
        manifest = json.loads(r.take(mlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable manifest") from exc
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        code, ndim = r.unpack("<BB")
        if code not in _DTYPES:
            raise CheckpointError(f"{path}: unknown dtype code {code} for {name!r}")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        dt = _DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        tensors[name] = np.frombuffer(r.take(nbytes), dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
    return Checkpoint(manifest, tensors)


def save_checkpoint(path, model: Module, optimizer=None, manifest: dict | None = None) -> Path:
    """Serialise model parameters, buffers and (optionally) AdamW state with EMA weights."""
    manifest = dict(manifest or {})
    cfg = getattr(model, "cfg", None)
    if cfg is not None and "config" not in manifest:
        manifest["config"] = cfg.to_dict()
    tensors = {f"param/{k}": v for k, v in model.named_parameters()}
    tensors.update({f"buffer/{k}": v for k, v in model.named_buffers()})
    if optimizer is not None:
        st = optimizer.state
        manifest["optimizer_step"] = st.step
        tensors.update({f"ema/{k}": v for k, v in st.ema.items()})
        tensors.update({f"adam_m/{k}": v for k, v in st.m.items()})
        tensors.update({f"adam_v/{k}": v for k, v in st.v.items()})
    return write_checkpoint(path, manifest, tensors)


def load_checkpoint(path) -> Checkpoint:
    return read_checkpoint(path)


def restore_model(model: Module, ckpt: Checkpoint, use_ema: bool = False, optimizer=None):
    """Copy tensors into ``model``; every shape is validated before anything is written."""
    source = ckpt.group("ema" if use_ema else "param")
    own = dict(model.named_parameters())
    buffers = dict(model.named_buffers())
    missing = sorted(set(own) - set(source))
    if missing:
        raise CheckpointShapeError(f"checkpoint lacks tensor {missing[0]!r}")
    for name, value in own.items():
        if source[name].shape != value.shape:
            raise CheckpointShapeError(
                f"tensor {name!r}: checkpoint shape {source[name].shape} != model shape {value.shape}")
    saved_buffers = ckpt.group("buffer")
    for name, value in buffers.items():
        if name in saved_buffers and saved_buffers[name].shape != value.shape:
            raise CheckpointShapeError(f"buffer {name!r}: shape mismatch")
    for name, value in own.items():
        value[...] = source[name]
    for name, value in buffers.items():
        if name in saved_buffers:
            value[...] = saved_buffers[name]
    if optimizer is not None:
        st = optimizer.state
        st.step = int(ckpt.manifest.get("optimizer_step", 0))
        for group, target in (("ema", st.ema), ("adam_m", st.m), ("adam_v", st.v)):
            saved = ckpt.group(group)
            for name in target:
                if name in saved:
                    target[name][...] = saved[name]
    return model
