"""Self-describing checkpoint container.

Byte layout (all integers little-endian):

    offset 0   : 4-byte magic ``LDCK``
    offset 4   : uint32 format version (currently 1)
    offset 8   : uint64 header length in bytes
    offset 16  : UTF-8 JSON header
    after that : raw tensor payload, C-order, little-endian, concatenated

The JSON header holds the model config, the schedule config, the dataset
class schema, free-form metadata, and a tensor index of
``{name, dtype, shape, offset, nbytes}`` records whose offsets are relative
to the start of the payload.  Model weights are stored under ``model.*``
names; anything else (optimizer state, rng state) keeps its own prefix.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .core import DatasetSchema
from .denoiser import Denoiser, DenoiserConfig
from .schedule import DiffusionSchedule

MAGIC = b"LDCK"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


@dataclass
class Checkpoint:
    model_config: DenoiserConfig
    schedule: DiffusionSchedule
    schema: DatasetSchema
    tensors: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def build_model(self) -> Denoiser:
        model = Denoiser(self.model_config)
        state = {}
        for name, arr in self.tensors.items():
            if name.startswith("model."):
                state[name[len("model."):]] = torch.from_numpy(arr.copy())
        missing, unexpected = model.load_state_dict(state, strict=False)
        if missing or unexpected:
            raise CheckpointError(
                f"checkpoint does not match model: missing={missing}, unexpected={unexpected}"
            )
        model.eval()
        return model


def save_checkpoint(
    path: str | Path,
    model: Denoiser,
    schedule: DiffusionSchedule,
    schema: DatasetSchema,
    extra_tensors: dict[str, np.ndarray] | None = None,
    meta: dict | None = None,
) -> None:
    tensors: dict[str, np.ndarray] = {
        f"model.{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()
    }
    if extra_tensors:
        for k, v in extra_tensors.items():
            if k.startswith("model."):
                raise CheckpointError(f"extra tensor {k!r} collides with the model prefix")
            tensors[k] = np.asarray(v)

    index = []
    offset = 0
    blobs = []
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        blob = arr.tobytes()
        index.append(
            {
                "name": name,
                "dtype": arr.dtype.name,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)

    header = {
        "model_config": model.config.to_dict(),
        "schedule": schedule.config(),
        "schema": schema.to_dict(),
        "meta": meta or {},
        "tensors": index,
    }
    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payload = fh.read()

    tensors: dict[str, np.ndarray] = {}
    for rec in header["tensors"]:
        start, n = rec["offset"], rec["nbytes"]
        if start + n > len(payload):
            raise CheckpointError(f"{path}: tensor {rec['name']!r} overruns the payload")
        arr = np.frombuffer(payload[start : start + n], dtype=np.dtype(rec["dtype"]))
        tensors[rec["name"]] = arr.reshape(rec["shape"]).copy()

    return Checkpoint(
        model_config=DenoiserConfig.from_dict(header["model_config"]),
        schedule=DiffusionSchedule.from_config(header["schedule"]),
        schema=DatasetSchema.from_dict(header["schema"]),
        tensors=tensors,
        meta=header.get("meta", {}),
    )
