"""Checkpoint container.

Layout::

    b"FTCKPT01"                      8-byte magic
    uint64 little-endian             header length H
    H bytes UTF-8 JSON               {"config": ..., "meta": ..., "tensors": [...]}
    raw tensor bytes                 little-endian, C order, at the listed offsets

Each tensor entry is ``{"name", "dtype", "shape", "offset", "nbytes"}`` with
offsets relative to the start of the data section. The JSON is written with
sorted keys so identical models give identical files.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import InvalidInput
from .model import Detector, ModelConfig

MAGIC = b"FTCKPT01"


def save_checkpoint(path, model: Detector, meta: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy()
        arr = np.ascontiguousarray(arr.astype(arr.dtype.newbyteorder("<")))
        blob = arr.tobytes()
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"config": model.config.to_dict(), "meta": meta or {}, "tensors": entries}, sort_keys=True
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Return (header, {name: array}) without building a model."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise InvalidInput(f"{path} is not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen])
    data = memoryview(raw)[16 + hlen :]
    arrays = {}
    for e in header["tensors"]:
        buf = data[e["offset"] : e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(buf, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return header, arrays


def load_checkpoint(path) -> tuple[Detector, dict]:
    header, arrays = read_checkpoint(path)
    model = Detector(ModelConfig.from_dict(header["config"]))
    state = {k: torch.from_numpy(v) for k, v in arrays.items()}
    model.to(next(iter(state.values())).dtype)
    model.load_state_dict(state, strict=True)
    model.eval()
    return model, header["meta"]
