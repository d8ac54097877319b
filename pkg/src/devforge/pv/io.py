"""Binary model container.

Layout (all integers little-endian)::

    b"DV2V" | u16 format version | u64 header length | header (canonical JSON)
    | float32 matrices, row-major, in header order | u32 CRC32 of everything before

The same container stores PCA models; the header's ``kind`` tells them apart.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import CorruptModel, FormatVersionMismatch
from .model import EmbeddingModel, Hyperparams, Vocabulary

MAGIC = b"DV2V"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sHQ")


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def write_container(path, header: dict, matrices: dict[str, np.ndarray]):
    header = dict(header)
    header["matrices"] = [{"name": k, "shape": list(np.shape(m))} for k, m in matrices.items()]
    head = canonical_json(header)
    parts = [_PREFIX.pack(MAGIC, FORMAT_VERSION, len(head)), head]
    for m in matrices.values():
        parts.append(np.ascontiguousarray(m, dtype="<f4").tobytes())
    body = b"".join(parts)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(body)
        f.write(struct.pack("<I", zlib.crc32(body)))
    os.replace(tmp, path)


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _PREFIX.size + 4:
        raise CorruptModel(f"{path}: file too short ({len(data)} bytes)")
    magic, version, head_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CorruptModel(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"{path}: model format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptModel(f"{path}: checksum mismatch")
    offset = _PREFIX.size + head_len
    try:
        header = json.loads(body[_PREFIX.size:offset].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptModel(f"{path}: unreadable header") from exc
    matrices = {}
    for spec in header.pop("matrices"):
        shape = tuple(spec["shape"])
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(body):
            raise CorruptModel(f"{path}: matrix {spec['name']} truncated")
        arr = np.frombuffer(body, dtype="<f4", count=nbytes // 4, offset=offset)
        matrices[spec["name"]] = arr.astype(np.float32).reshape(shape)
        offset += nbytes
    if offset != len(body):
        raise CorruptModel(f"{path}: {len(body) - offset} trailing bytes")
    return header, matrices


def save(model: EmbeddingModel, path):
    header = {
        "kind": "paragraph-vectors",
        "hyper": model.hyper.to_dict(),
        "vocab": {"tokens": model.vocab.tokens, "counts": model.vocab.counts.tolist(),
                  "min_count": model.vocab.min_count},
        "tags": list(model.tags),
    }
    write_container(path, header, {"W_in": model.W_in, "W_out": model.W_out, "D": model.D})


def load(path) -> EmbeddingModel:
    header, m = read_container(path)
    if header.get("kind") != "paragraph-vectors":
        raise CorruptModel(f"{path}: not a paragraph-vector model ({header.get('kind')!r})")
    v = header["vocab"]
    return EmbeddingModel(
        hyper=Hyperparams.from_dict(header["hyper"]),
        vocab=Vocabulary(v["tokens"], v["counts"], v["min_count"]),
        W_in=m["W_in"], W_out=m["W_out"], D=m["D"], tags=header["tags"],
    )


def read_header(path) -> dict:
    return read_container(path)[0]
