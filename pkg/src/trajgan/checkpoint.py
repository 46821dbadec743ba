"""Parameter checkpoint container.

Layout: the magic line ``TGCKPT1`` followed by one JSON header line and the
raw little-endian float64 row-major data of every parameter, in header
order. The header carries a format-version field, optional metadata, and
the name and shape of each parameter. Writing is byte-deterministic for
identical inputs.
"""

from __future__ import annotations

import json

import numpy as np

from .autodiff import Tensor

CKPT_MAGIC = b"TGCKPT1\n"
CKPT_FORMAT_VERSION = 1


def save_params(params: dict[str, Tensor], path, meta: dict | None = None) -> None:
    names = sorted(params)
    header = {
        "format_version": CKPT_FORMAT_VERSION,
        "meta": meta or {},
        "params": [{"name": n, "shape": list(params[n].data.shape)} for n in names],
    }
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for n in names:
            fh.write(np.ascontiguousarray(params[n].data, dtype="<f8").tobytes())


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint (bad magic)")
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format_version") != CKPT_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint format version")
        arrays = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{path}: truncated data for {entry['name']!r}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return arrays, header.get("meta", {})
