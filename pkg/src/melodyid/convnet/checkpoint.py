"""Checkpoint container: named little-endian float64 tensors plus JSON metadata."""
from __future__ import annotations

import io
import json

import numpy as np

from .model import Architecture, ModelParams

__all__ = ["save_checkpoint", "load_checkpoint", "FORMAT", "VERSION"]

FORMAT = "melodyid-checkpoint"
VERSION = 1


def save_checkpoint(path_or_file, params: ModelParams, config: dict | None = None) -> None:
    meta = {"format": FORMAT, "version": VERSION, "arch": params.arch.to_dict(),
            "config": config or {},
            "shapes": {k: list(v.shape) for k, v in {**params.weights, **params.buffers}.items()}}
    arrays = {f"weights/{k}": np.asarray(v, dtype="<f8") for k, v in params.weights.items()}
    arrays.update({f"buffers/{k}": np.asarray(v, dtype="<f8") for k, v in params.buffers.items()})
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path_or_file, **arrays)


def load_checkpoint(path_or_file) -> tuple[ModelParams, dict]:
    """Return ``(params, config)``; tensors come back as float64."""
    with np.load(path_or_file, allow_pickle=False) as data:
        if "__meta__" not in data.files:
            raise ValueError("not a melodyid checkpoint (missing metadata)")
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format") != FORMAT or meta.get("version") != VERSION:
            raise ValueError(f"unsupported checkpoint format {meta.get('format')} v{meta.get('version')}")
        weights, buffers = {}, {}
        for name in data.files:
            if name.startswith("weights/"):
                weights[name[8:]] = data[name].astype(np.float64)
            elif name.startswith("buffers/"):
                buffers[name[8:]] = data[name].astype(np.float64)
    for k, shape in meta["shapes"].items():
        arr = weights.get(k, buffers.get(k))
        if arr is None or list(arr.shape) != shape:
            raise ValueError(f"checkpoint tensor {k} missing or misshapen")
    params = ModelParams(Architecture.from_dict(meta["arch"]), weights, buffers)
    params.check_finite()
    return params, meta["config"]


def checkpoint_bytes(params: ModelParams, config: dict | None = None) -> bytes:
    buf = io.BytesIO()
    save_checkpoint(buf, params, config)
    return buf.getvalue()
