"""Checkpoint file format.

    b"KWS1" | version: u16 LE | header length: u32 LE | UTF-8 JSON header |
    parameter blocks, little-endian, in layer order

The header records the architecture, layer configs, label map, parameter
names/shapes, the block dtype and training metadata. Blocks are 32-bit floats;
a model kept in float64 is written with 64-bit blocks so the round trip stays
exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Union

import numpy as np

from kws.corpus import LabelMap
from kws.errors import (
    CorruptCheckpointError,
    IncompatibleCheckpointError,
    StorageError,
)
from kws.model import ModelGraph
from kws.nn import Sequential, layer_from_config
from kws.utils import atomic_write, get_logger

logger = get_logger(__name__)

MAGIC = b"KWS1"
VERSION = 1
_PREAMBLE = struct.Struct("<4sHI")
_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(model: ModelGraph, path: Union[str, Path]) -> None:
    params = model.net.named_params()
    dtype_name = "float64" if model.dtype == np.float64 else "float32"
    header = {
        "arch": model.arch,
        "frame_len": model.frame_len,
        "labels": list(model.label_map.labels),
        "layers": [layer.config() for layer in model.net],
        "params": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
        "dtype": dtype_name,
        "metadata": model.metadata,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    with atomic_write(path, "wb") as f:
        f.write(_PREAMBLE.pack(MAGIC, VERSION, len(header_bytes)))
        f.write(header_bytes)
        for value in params.values():
            f.write(np.ascontiguousarray(value, dtype=_DTYPES[dtype_name]).tobytes())
    logger.info("saved checkpoint %s (%d parameters)", path, model.net.num_params)


def load_checkpoint(path: Union[str, Path]) -> ModelGraph:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise StorageError(f"cannot read checkpoint {path}: {e}") from e

    if len(data) < _PREAMBLE.size:
        raise CorruptCheckpointError("file shorter than the checkpoint preamble", len(data))
    magic, version, header_len = _PREAMBLE.unpack_from(data)
    if magic != MAGIC:
        raise CorruptCheckpointError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise IncompatibleCheckpointError(
            f"checkpoint version {version} is not supported (expected {VERSION})"
        )

    offset = _PREAMBLE.size
    if offset + header_len > len(data):
        raise CorruptCheckpointError("truncated header", len(data))
    try:
        header = json.loads(data[offset : offset + header_len].decode("utf-8"))
        dtype = np.dtype(_DTYPES[header["dtype"]])
        net = Sequential([layer_from_config(c) for c in header["layers"]])
        label_map = LabelMap(tuple(header["labels"]))
        specs = [(str(s["name"]), tuple(int(d) for d in s["shape"])) for s in header["params"]]
        arch, frame_len = str(header["arch"]), int(header["frame_len"])
    except (KeyError, TypeError, ValueError) as e:
        # ValueError covers bad UTF-8, bad JSON and invalid layer or label configs
        raise CorruptCheckpointError(f"unreadable header: {e}", offset) from e
    offset += header_len

    params = {}
    for name, shape in specs:
        if min(shape, default=0) < 0:
            raise CorruptCheckpointError(f"negative dimension in {name} shape {shape}", offset)
        nbytes = int(np.prod(shape)) * dtype.itemsize
        if offset + nbytes > len(data):
            raise CorruptCheckpointError(f"truncated parameter block {name}", offset)
        block = np.frombuffer(data, dtype=dtype, count=int(np.prod(shape)), offset=offset)
        params[name] = block.astype(dtype.newbyteorder("="), copy=True).reshape(shape)
        offset += nbytes
    if offset != len(data):
        raise CorruptCheckpointError(f"{len(data) - offset} trailing bytes", offset)

    net.astype(dtype.newbyteorder("="))
    try:
        net.load_params(params)
    except (KeyError, IndexError, ValueError) as e:
        raise CorruptCheckpointError(f"parameters do not fit the layers: {e}", _PREAMBLE.size) from e
    return ModelGraph(arch, frame_len, label_map, net, header.get("metadata", {}))
