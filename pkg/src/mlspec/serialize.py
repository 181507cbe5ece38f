"""On-disk formats for layer stacks and model descriptors.

Stack file layout (little endian)::

    magic   6 bytes  b"MLSTK\\0"
    version u16      1
    m       u32
    n       u32
    payload m * ceil(n (n + 1) / 2 / 8) bytes

Each layer stores its upper triangle (diagonal included, row-major) as
packed bits, most significant bit first.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from .model import CosieModel, LayerStack

MAGIC = b"MLSTK\0"
VERSION = 1
_HEADER = struct.Struct("<6sHII")
MODEL_SCHEMA = "mlspec.cosie/1"


class FormatError(ValueError):
    pass


def stack_to_bytes(stack: LayerStack) -> bytes:
    if stack.noiseless:
        raise FormatError("only binary stacks can be serialized")
    m, n = stack.m, stack.n
    iu, ju = np.triu_indices(n)
    bits = np.packbits(stack.layers[:, iu, ju], axis=1)
    return _HEADER.pack(MAGIC, VERSION, m, n) + bits.tobytes()


def stack_from_bytes(data: bytes) -> LayerStack:
    if len(data) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, m, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    cells = n * (n + 1) // 2
    per_layer = (cells + 7) // 8
    payload = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    if payload.size != m * per_layer:
        raise FormatError(f"expected {m * per_layer} payload bytes, got {payload.size}")
    upper = np.unpackbits(payload.reshape(m, per_layer), axis=1, count=cells)
    iu, ju = np.triu_indices(n)
    layers = np.zeros((m, n, n), dtype=np.uint8)
    layers[:, iu, ju] = upper
    layers[:, ju, iu] = upper
    return LayerStack(layers)


def write_stack(path: str | os.PathLike, stack: LayerStack) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(stack_to_bytes(stack))
    os.replace(tmp, path)


def read_stack(path: str | os.PathLike) -> LayerStack:
    with open(path, "rb") as fh:
        return stack_from_bytes(fh.read())


def model_to_dict(model: CosieModel) -> dict:
    return {
        "schema": MODEL_SCHEMA,
        "n": model.n,
        "d": model.d,
        "m": model.m,
        "u": model.u.tolist(),
        "scores": model.scores.tolist(),
    }


def model_from_dict(doc: dict) -> CosieModel:
    if doc.get("schema") != MODEL_SCHEMA:
        raise FormatError(f"unsupported model schema {doc.get('schema')!r}")
    model = CosieModel(np.array(doc["u"], dtype=float), np.array(doc["scores"], dtype=float))
    if (model.n, model.d, model.m) != (doc["n"], doc["d"], doc["m"]):
        raise FormatError("model dimensions do not match the descriptor")
    return model


def model_to_json(model: CosieModel) -> str:
    return json.dumps(model_to_dict(model))


def model_from_json(text: str) -> CosieModel:
    return model_from_dict(json.loads(text))
