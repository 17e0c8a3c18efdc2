"""Versioned binary checkpoint container.

Layout::

    magic      8 bytes   b"E2EIECKP"
    version    uint32 LE
    hlen       uint64 LE  length of the header in bytes
    header     UTF-8 JSON {"kind", "config", "vocab", "params", ...}
    payload    float32 LE values of every parameter, row-major, in
               header["params"] order

Each ``header["params"]`` entry is ``{"name", "shape"}``; offsets follow
from the shapes. The header is written with sorted keys so that saving the
same model twice gives identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from .tensor import Tensor

MAGIC = b"E2EIECKP"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    pass


def encode(kind: str, config: dict, vocab: list, params: Mapping[str, Tensor], extra: dict | None = None) -> bytes:
    manifest = [{"name": k, "shape": list(t.shape)} for k, t in params.items()]
    header = {"kind": kind, "config": config, "vocab": vocab, "params": manifest}
    if extra:
        header.update(extra)
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(t.data, dtype="<f4").tobytes() for t in params.values())
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(hbytes)) + hbytes + payload


def decode(blob: bytes) -> tuple[str, dict, dict[str, np.ndarray]]:
    if len(blob) < _PREFIX.size:
        raise CheckpointError("truncated checkpoint: missing prefix")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    start = _PREFIX.size
    if len(blob) < start + hlen:
        raise CheckpointError("truncated checkpoint: header cut short")
    try:
        header = json.loads(blob[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    offset = start + hlen
    arrays: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(blob):
            raise CheckpointError(f"truncated checkpoint: parameter {entry['name']!r} incomplete")
        arrays[entry["name"]] = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"checkpoint has {len(blob) - offset} trailing bytes")
    return header["kind"], header, arrays


def save(path: Union[str, Path], kind: str, config: dict, vocab: list,
         params: Mapping[str, Tensor], extra: dict | None = None) -> None:
    Path(path).write_bytes(encode(kind, config, vocab, params, extra))


def load(path: Union[str, Path]) -> tuple[str, dict, dict[str, np.ndarray]]:
    return decode(Path(path).read_bytes())


def peek_kind(path: Union[str, Path]) -> str:
    return load(path)[0]
