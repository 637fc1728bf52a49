"""Versioned binary checkpoints: architecture + parameters + config stamp."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from airbone.net.arch import Architecture
from airbone.net.model import PARAMS_VERSION, NetworkParams

_MAGIC = b"ABCK"


class CheckpointError(Exception):
    """Unreadable checkpoint or architecture mismatch."""


def save_checkpoint(params: NetworkParams, path, train_fingerprint: str = "",
                    extra: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = sorted(params.tensors)
    header = {
        "version": params.version,
        "arch": json.loads(params.arch.to_json()),
        "rng_seed": params.rng_seed,
        "train_fingerprint": train_fingerprint,
        "params_fingerprint": params.fingerprint(),
        "extra": extra or {},
        "tensors": [{"name": n, "shape": list(params.tensors[n].shape),
                     "dtype": str(params.tensors[n].dtype)} for n in names],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(params.tensors[n]).tobytes())


def load_checkpoint(path, expected_arch: Architecture | None = None,
                    ) -> tuple[NetworkParams, dict]:
    path = Path(path)
    try:
        raw = path.read_bytes()
        if raw[:4] != _MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", raw[4:8])
        header = json.loads(raw[8:8 + hlen].decode("utf-8"))
        if header["version"] != PARAMS_VERSION:
            raise CheckpointError(f"{path}: unsupported version")
        arch = Architecture.from_json(json.dumps(header["arch"]))
        offset = 8 + hlen
        tensors = {}
        for spec in header["tensors"]:
            dt = np.dtype(spec["dtype"])
            count = int(np.prod(spec["shape"]))
            arr = np.frombuffer(raw, dtype=dt, count=count, offset=offset)
            tensors[spec["name"]] = arr.reshape(spec["shape"]).copy()
            offset += count * dt.itemsize
        if offset != len(raw):
            raise CheckpointError(f"{path}: payload size mismatch")
    except (struct.error, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint: {exc}") from exc
    params = NetworkParams(arch, tensors, header["rng_seed"], header["version"])
    if header["params_fingerprint"] != params.fingerprint():
        raise CheckpointError(f"{path}: parameter fingerprint mismatch")
    if expected_arch is not None and arch != expected_arch:
        raise CheckpointError(f"{path}: architecture mismatch")
    return params, header
