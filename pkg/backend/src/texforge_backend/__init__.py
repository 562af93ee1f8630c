"""Latent denoiser service: sessions, encode/decode, noising and denoise steps.

The wire protocol is JSON over HTTP with tensors as base64 little-endian
float32 plus an explicit shape, matching what the texturing engine's HTTP
backend client speaks.
"""

from texforge_backend.engine import DeterministicEngine, EngineError, SessionParams
from texforge_backend.service import create_app
from texforge_backend.wire import WireError, decode_tensor, encode_tensor

__version__ = "0.1.0"

__all__ = [
    "DeterministicEngine",
    "EngineError",
    "SessionParams",
    "WireError",
    "create_app",
    "decode_tensor",
    "encode_tensor",
]
