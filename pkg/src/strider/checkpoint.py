"""Versioned binary model checkpoints.

Layout: magic, format version, config JSON, skeleton hash, free-form meta,
normalization statistics, then every parameter array in the canonical
``param_shapes`` order (name + shape + float64 data). Save/load round-trips
byte-exactly.
"""

from __future__ import annotations

import io

from . import binio
from .data import NormStats
from .errors import DecodeError
from .model import ModelConfig, ModelParams, _assemble, named_params, param_shapes
from . import numeric as nc

CKPT_MAGIC = b"SCKP"
CKPT_VERSION = 1


def checkpoint_bytes(params: ModelParams, skeleton_hash: str, meta: str = "") -> bytes:
    import json

    fh = io.BytesIO()
    fh.write(CKPT_MAGIC)
    binio.write_u32(fh, CKPT_VERSION)
    binio.write_str(fh, json.dumps(params.config.to_dict(), sort_keys=True, separators=(",", ":")))
    binio.write_str(fh, skeleton_hash)
    binio.write_str(fh, meta)
    norm = params.norm
    binio.write_u8(fh, 1 if norm is not None else 0)
    if norm is not None:
        binio.write_f64_array(fh, norm.in_mean)
        binio.write_f64_array(fh, norm.in_std)
        binio.write_f64_array(fh, norm.out_mean)
        binio.write_f64_array(fh, norm.out_std)
        binio.write_u32(fh, norm.joint_dims)
        binio.write_f64(fh, norm.joint_scale)
    names = list(named_params(params))
    binio.write_u32(fh, len(names))
    for name, tensor in names:
        binio.write_str(fh, name)
        binio.write_f64_array(fh, tensor.data)
    return fh.getvalue()


def save_checkpoint(path, params: ModelParams, skeleton_hash: str, meta: str = "") -> None:
    blob = checkpoint_bytes(params, skeleton_hash, meta)
    with open(path, "wb") as out:
        out.write(blob)


def load_checkpoint(path) -> tuple[ModelParams, str, str]:
    """Returns (params with norm attached, skeleton hash, meta)."""
    import json

    with open(path, "rb") as fh:
        binio.expect_magic(fh, CKPT_MAGIC, "checkpoint")
        version = binio.read_u32(fh)
        if version != CKPT_VERSION:
            raise DecodeError(f"unsupported checkpoint version {version}")
        cfg = ModelConfig.from_dict(json.loads(binio.read_str(fh)))
        skeleton_hash = binio.read_str(fh)
        meta = binio.read_str(fh)
        norm = None
        if binio.read_u8(fh) == 1:
            norm = NormStats(
                in_mean=binio.read_f64_array(fh),
                in_std=binio.read_f64_array(fh),
                out_mean=binio.read_f64_array(fh),
                out_std=binio.read_f64_array(fh),
                joint_dims=binio.read_u32(fh),
                joint_scale=binio.read_f64(fh),
            ).validate()
        n = binio.read_u32(fh)
        expected = list(param_shapes(cfg))
        if n != len(expected):
            raise DecodeError(f"checkpoint has {n} arrays, config implies {len(expected)}")
        tensors = {}
        for name, shape, _ in expected:
            got_name = binio.read_str(fh)
            if got_name != name:
                raise DecodeError(f"parameter order mismatch: {got_name!r} != {name!r}")
            arr = binio.read_f64_array(fh)
            if arr.shape != shape:
                raise DecodeError(f"parameter {name} has shape {arr.shape}, expected {shape}")
            tensors[name] = nc.param(arr, name)
    params = _assemble(cfg, tensors)
    params.norm = norm
    return params, skeleton_hash, meta
