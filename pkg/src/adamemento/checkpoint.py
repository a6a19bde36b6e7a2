"""Binary checkpoint container.

Layout::

    b"AMCK"  magic
    u8       format version
    u32 LE   length of the JSON index
    JSON     {"meta": {...}, "arrays": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]}
    raw      concatenated little-endian, C-order array bytes

Arrays round-trip bit-exactly.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CompatibilityError
from .nn import AdamState, Layer, NetParams

MAGIC = b"AMCK"
VERSION = 1


def save(path, arrays: dict, meta: dict | None = None) -> Path:
    path = Path(path)
    index, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        data = arr.astype(dt, copy=False).tobytes(order="C")
        index.append(dict(name=name, dtype=dt.str, shape=list(arr.shape), offset=offset, nbytes=len(data)))
        chunks.append(data)
        offset += len(data)
    header = json.dumps({"meta": meta or {}, "arrays": index}, sort_keys=True).encode()
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + struct.pack("<BI", VERSION, len(header)))
        fh.write(header)
        for c in chunks:
            fh.write(c)
    tmp.replace(path)
    return path


def load(path):
    """Returns ``(arrays, meta)``."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CompatibilityError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<BI", raw[4:9])
    if version != VERSION:
        raise CompatibilityError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[9:9 + hlen])
    base = 9 + hlen
    arrays = {}
    for item in header["arrays"]:
        start = base + item["offset"]
        buf = raw[start:start + item["nbytes"]]
        arrays[item["name"]] = np.frombuffer(buf, dtype=np.dtype(item["dtype"])).reshape(item["shape"]).copy()
    return arrays, header["meta"]


def pack_net(prefix: str, params: NetParams, out: dict, meta: dict):
    meta[prefix] = params.activations
    for i, layer in enumerate(params.layers):
        out[f"{prefix}/{i}/w"] = layer.weight
        out[f"{prefix}/{i}/b"] = layer.bias


def unpack_net(prefix: str, arrays: dict, meta: dict) -> NetParams:
    acts = meta[prefix]
    return NetParams.unchecked(Layer(arrays[f"{prefix}/{i}/w"], arrays[f"{prefix}/{i}/b"], a)
                               for i, a in enumerate(acts))


def pack_adam(prefix: str, state: AdamState, out: dict, meta: dict):
    meta[prefix] = dict(n=len(state.first_moment), step_count=state.step_count,
                        beta1=state.beta1, beta2=state.beta2, epsilon=state.epsilon)
    for i, (m, v) in enumerate(zip(state.first_moment, state.second_moment)):
        out[f"{prefix}/{i}/m"] = m
        out[f"{prefix}/{i}/v"] = v


def unpack_adam(prefix: str, arrays: dict, meta: dict) -> AdamState:
    info = meta[prefix]
    n = info["n"]
    return AdamState([arrays[f"{prefix}/{i}/m"] for i in range(n)],
                     [arrays[f"{prefix}/{i}/v"] for i in range(n)],
                     info["step_count"], info["beta1"], info["beta2"], info["epsilon"])
