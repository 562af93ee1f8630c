"""Tensor serialization for the JSON wire format.

A tensor travels as {"data": base64 of little-endian float32 bytes,
"shape": [...]}; the byte order is pinned so mixed-endian client/server
pairs agree.
"""

from __future__ import annotations

import base64

import numpy as np


class WireError(ValueError):
    """Malformed tensor payload (bad base64, shape/size disagreement)."""


def encode_tensor(arr: np.ndarray) -> dict:
    a = np.ascontiguousarray(arr, dtype="<f4")
    return {
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
        "shape": list(a.shape),
    }


def decode_tensor(obj) -> np.ndarray:
    if not isinstance(obj, dict) or "data" not in obj or "shape" not in obj:
        raise WireError("tensor must be an object with 'data' and 'shape'")
    try:
        raw = base64.b64decode(obj["data"], validate=True)
    except Exception as exc:
        raise WireError(f"tensor data is not valid base64: {exc}") from exc
    try:
        shape = tuple(int(s) for s in obj["shape"])
    except (TypeError, ValueError) as exc:
        raise WireError("tensor shape must be a list of integers") from exc
    if any(s < 0 for s in shape):
        raise WireError("tensor shape must be non-negative")
    if len(raw) % 4 != 0:
        raise WireError(f"tensor payload is {len(raw)} bytes, not a float32 array")
    arr = np.frombuffer(raw, dtype="<f4")
    if arr.size != int(np.prod(shape)):
        raise WireError(
            f"tensor payload holds {arr.size} values but shape {list(shape)} "
            f"needs {int(np.prod(shape))}"
        )
    return arr.reshape(shape).astype(np.float32)
