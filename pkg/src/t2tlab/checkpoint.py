"""Versioned checkpoint container: JSON header line + raw little-endian array
bytes. Byte-for-byte reproducible from the same arrays, and round-trips
bitwise (zip-based formats embed timestamps, which would break rerun
comparisons)."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import DataError

MAGIC = "t2tlab-checkpoint"
VERSION = 1


@dataclass
class Checkpoint:
    step: int
    params: dict[str, np.ndarray]
    optimizer: dict = field(default_factory=dict)  # scalars + moment arrays under m./v.
    opt_arrays: dict[str, np.ndarray] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def _to_numpy(t) -> np.ndarray:
    if isinstance(t, torch.Tensor):
        return np.ascontiguousarray(t.detach().cpu().numpy())
    return np.ascontiguousarray(np.asarray(t))


def save_checkpoint(
    path: str | os.PathLike,
    step: int,
    params: dict,
    optimizer_scalars: dict | None = None,
    opt_arrays: dict | None = None,
    config: dict | None = None,
    extra: dict | None = None,
) -> None:
    arrays: list[tuple[str, np.ndarray]] = []
    for name in sorted(params):
        arrays.append((f"param/{name}", _to_numpy(params[name])))
    for name in sorted(opt_arrays or {}):
        arrays.append((f"opt/{name}", _to_numpy(opt_arrays[name])))
    header = {
        "magic": MAGIC,
        "version": VERSION,
        "step": int(step),
        "optimizer": optimizer_scalars or {},
        "config": config or {},
        "extra": extra or {},
        "arrays": [
            {"name": n, "dtype": a.dtype.str, "shape": list(a.shape)} for n, a in arrays
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"
    blob += b"".join(a.tobytes() for _, a in arrays)
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    nl = raw.find(b"\n")
    if nl < 0:
        raise DataError(f"checkpoint {path} has no header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"checkpoint {path} has a corrupt header: {e}") from e
    if header.get("magic") != MAGIC:
        raise DataError(f"{path} is not a {MAGIC} file")
    if header.get("version") != VERSION:
        raise DataError(f"unsupported checkpoint version {header.get('version')}")
    offset = nl + 1
    params: dict[str, np.ndarray] = {}
    opt_arrays: dict[str, np.ndarray] = {}
    for meta in header["arrays"]:
        dtype = np.dtype(meta["dtype"])
        shape = tuple(meta["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dtype.itemsize
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise DataError(f"checkpoint {path} truncated at array {meta['name']}")
        arr = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
        offset += nbytes
        kind, _, name = meta["name"].partition("/")
        (params if kind == "param" else opt_arrays)[name] = arr
    if offset != len(raw):
        raise DataError(f"checkpoint {path} has {len(raw) - offset} trailing bytes")
    return Checkpoint(
        step=int(header["step"]),
        params=params,
        optimizer=header.get("optimizer", {}),
        opt_arrays=opt_arrays,
        config=header.get("config", {}),
        extra=header.get("extra", {}),
    )


def params_to_tensors(arrays: dict[str, np.ndarray], requires_grad: bool = True) -> dict[str, torch.Tensor]:
    return {
        n: torch.from_numpy(a.copy()).requires_grad_(requires_grad) for n, a in arrays.items()
    }
