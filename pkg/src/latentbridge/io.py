"""Binary checkpoints (TOYM, LBTR), the LVEC vector store and JSON helpers.

Checkpoint layout, all integers little-endian::

    magic[4] | version u32 | config_len u32 | config JSON (utf-8)
    | n_records u32 | records...
    record := name_len u32 | name | rank u32 | dims u32[rank] | f32 data

Vector store layout::

    "LVEC" | version u32 | dim u32 | count u64 | count * (prompt_id u32 | dim * f32)
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import Tensor
from .toymodel import ToyModel, ToyModelConfig
from .translator import TranslatorConfig, TranslatorParams

FORMAT_VERSION = 1
MODEL_MAGIC = b"TOYM"
TRANSLATOR_MAGIC = b"LBTR"
VECTOR_MAGIC = b"LVEC"
_F32 = np.dtype("<f4")


class FormatError(ValueError):
    """A binary file is malformed, truncated or of an unsupported version."""


def atomic_write(path: str | Path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str | Path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    atomic_write(path, text.encode("utf-8"))


# -- checkpoints ------------------------------------------------------------

def encode_checkpoint(magic: bytes, config: dict, params: dict[str, np.ndarray]) -> bytes:
    cfg = json.dumps(config, sort_keys=True).encode("utf-8")
    parts = [magic, struct.pack("<II", FORMAT_VERSION, len(cfg)), cfg, struct.pack("<I", len(params))]
    for name, arr in params.items():
        nb = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype=_F32)
        parts.append(struct.pack("<I", len(nb)) + nb)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes, what: str):
        self.buf, self.pos, self.what = buf, 0, what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.what}: truncated at byte offset {self.pos} "
                              f"(need {n} bytes, {len(self.buf) - self.pos} left)")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def decode_checkpoint(buf: bytes, magic: bytes, what: str) -> tuple[dict, dict[str, np.ndarray]]:
    r = _Reader(buf, what)
    got = r.take(4)
    if got != magic:
        raise FormatError(f"{what}: bad magic {got!r} at byte offset 0, expected {magic!r}")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise FormatError(f"{what}: incompatible format version {version} (supported: {FORMAT_VERSION})")
    cfg_len = r.u32()
    try:
        config = json.loads(r.take(cfg_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{what}: unreadable config block at byte offset 12") from exc
    params = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        n = int(np.prod(dims, dtype=np.int64))
        params[name] = np.frombuffer(r.take(4 * n), dtype=_F32).reshape(dims).astype(np.float32)
    if r.pos != len(buf):
        raise FormatError(f"{what}: {len(buf) - r.pos} trailing bytes at byte offset {r.pos}")
    return config, params


def save_model(model: ToyModel, path) -> None:
    params = {k: t.data for k, t in model.params.items()}
    atomic_write(path, encode_checkpoint(MODEL_MAGIC, model.config.to_dict(), params))


def load_model(path) -> ToyModel:
    config, params = decode_checkpoint(Path(path).read_bytes(), MODEL_MAGIC, str(path))
    cfg = ToyModelConfig(**config)
    return ToyModel(cfg, {k: Tensor(v) for k, v in params.items()})


def save_checkpoint(params: TranslatorParams, path) -> None:
    arrays = {k: t.data for k, t in params.params.items()}
    atomic_write(path, encode_checkpoint(TRANSLATOR_MAGIC, params.config.to_dict(), arrays))


def load_checkpoint(path) -> TranslatorParams:
    config, arrays = decode_checkpoint(Path(path).read_bytes(), TRANSLATOR_MAGIC, str(path))
    return TranslatorParams(TranslatorConfig(**config), {k: Tensor(v) for k, v in arrays.items()})


# -- vector store -------------------------------------------------------------

_VEC_HEADER = struct.Struct("<4sIIQ")


@dataclass
class VectorStore:
    ids: np.ndarray       # (count,) uint32 prompt ids
    vectors: np.ndarray   # (count, dim) float32

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.ids)


def encode_vectors(store: VectorStore) -> bytes:
    vecs = np.ascontiguousarray(store.vectors, dtype=_F32)
    if vecs.ndim != 2 or vecs.shape[1] == 0:
        raise ValueError("vector store needs a (count, dim>0) array")
    rec = np.dtype([("id", "<u4"), ("v", _F32, (vecs.shape[1],))])
    body = np.empty(len(vecs), dtype=rec)
    body["id"] = store.ids
    body["v"] = vecs
    return _VEC_HEADER.pack(VECTOR_MAGIC, FORMAT_VERSION, vecs.shape[1], len(vecs)) + body.tobytes()


def decode_vectors(buf: bytes, what: str = "vector store") -> VectorStore:
    if len(buf) < _VEC_HEADER.size:
        raise FormatError(f"{what}: truncated header at byte offset {len(buf)}")
    magic, version, dim, count = _VEC_HEADER.unpack_from(buf)
    if magic != VECTOR_MAGIC:
        raise FormatError(f"{what}: bad magic {magic!r} at byte offset 0")
    if version != FORMAT_VERSION:
        raise FormatError(f"{what}: incompatible format version {version} (supported: {FORMAT_VERSION})")
    if dim == 0:
        raise FormatError(f"{what}: dim is 0 at byte offset 8")
    expected = _VEC_HEADER.size + count * (4 + 4 * dim)
    if len(buf) != expected:
        where = min(len(buf), expected)
        raise FormatError(f"{what}: length {len(buf)} != expected {expected}; "
                          f"malformed at byte offset {where}")
    rec = np.dtype([("id", "<u4"), ("v", _F32, (dim,))])
    body = np.frombuffer(buf, dtype=rec, offset=_VEC_HEADER.size, count=count)
    return VectorStore(body["id"].astype(np.uint32), body["v"].astype(np.float32))


def save_vectors(store: VectorStore, path) -> None:
    atomic_write(path, encode_vectors(store))


def load_vectors(path) -> VectorStore:
    return decode_vectors(Path(path).read_bytes(), str(path))
