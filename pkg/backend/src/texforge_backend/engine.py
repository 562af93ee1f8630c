"""Latent engines behind the service endpoints.

An engine owns one session: its conditioning, its seeded noise, and the
four latent operations. Model identifiers are plain strings so a real
pretrained depth/inpaint pair can be registered next to the deterministic
engine without touching the service layer.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


class EngineError(Exception):
    """Invalid request against an engine. ``step`` is set when the failure
    is a sampling-step range violation, which the service maps to 409."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class SessionParams:
    prompt: str
    guidance_scale: float
    steps: int
    seed: int


def _prompt_color(prompt: str) -> np.ndarray:
    """Stable base color in [0.25, 0.95] hashed from the prompt text."""
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    return (0.25 + 0.7 * np.frombuffer(digest[:3], dtype=np.uint8) / 255.0).astype(
        np.float32
    )


class DeterministicEngine:
    """Seeded closed-form denoiser with real diffusion loop semantics.

    Latents are 8x box-downsampled images in CHW order. Noise at step i is
    (1 - decay)^i of one per-session noise tensor, so step 0 is pure noise
    and the level decays geometrically to ~0 by the last step. A denoise
    step contracts toward a mode target: depth mode shades the prompt color
    by the depth conditioning, inpaint mode fills masked cells with a
    normalized Gaussian average of the known ones.
    """

    channels = 3
    downsample = 8
    modes = ("depth", "inpaint")

    def __init__(self, params: SessionParams, noise_decay: float = 0.35,
                 fill_sigma: float = 6.0):
        self.params = params
        self.noise_decay = float(noise_decay)
        self.fill_sigma = float(fill_sigma)
        self._noise_cache: dict[tuple, np.ndarray] = {}

    def _noise(self, shape: tuple) -> np.ndarray:
        key = tuple(shape)
        if key not in self._noise_cache:
            rng = np.random.default_rng(self.params.seed)
            self._noise_cache[key] = rng.random(key, dtype=np.float32)
        return self._noise_cache[key]

    def _level(self, step: int) -> np.float32:
        return np.float32((1.0 - self.noise_decay) ** step)

    def encode(self, image: np.ndarray) -> np.ndarray:
        if image.ndim != 3 or image.shape[2] != self.channels:
            raise EngineError(f"encode expects HWC with {self.channels} channels")
        h, w = image.shape[:2]
        f = self.downsample
        if h % f or w % f:
            raise EngineError(f"image {h}x{w} not divisible by {f}")
        view = image.reshape(h // f, f, w // f, f, self.channels).astype(np.float64)
        down = view.mean(axis=(1, 3)).astype(np.float32)
        return np.ascontiguousarray(np.transpose(down, (2, 0, 1)))

    def decode(self, latent: np.ndarray) -> np.ndarray:
        if latent.ndim != 3 or latent.shape[0] != self.channels:
            raise EngineError(f"decode expects CHW with {self.channels} channels")
        hwc = np.transpose(latent, (1, 2, 0))
        up = np.repeat(np.repeat(hwc, self.downsample, axis=0), self.downsample, axis=1)
        return np.ascontiguousarray(up.astype(np.float32))

    def add_noise(self, latent: np.ndarray, step: int) -> np.ndarray:
        if latent.ndim != 3 or latent.shape[0] != self.channels:
            raise EngineError(f"add_noise expects CHW with {self.channels} channels")
        if step < 0 or step > self.params.steps:
            raise EngineError(
                f"noise step {step} outside [0, {self.params.steps}]", step=step
            )
        lam = self._level(step)
        eps = self._noise(latent.shape)
        return ((np.float32(1.0) - lam) * latent + lam * eps).astype(np.float32)

    def denoise_step(self, latent: np.ndarray, step: int, mode: str,
                     depth: np.ndarray | None = None,
                     mask: np.ndarray | None = None) -> np.ndarray:
        if latent.ndim != 3 or latent.shape[0] != self.channels:
            raise EngineError(f"denoise expects CHW with {self.channels} channels")
        if step < 0 or step >= self.params.steps:
            raise EngineError(
                f"denoise step {step} outside [0, {self.params.steps})", step=step
            )
        if mode == "depth":
            if depth is None:
                raise EngineError("depth mode requires a depth map")
            target = self._depth_target(latent.shape, depth)
        elif mode == "inpaint":
            if mask is None:
                raise EngineError("inpaint mode requires a mask")
            target = self._inpaint_target(latent, mask)
        else:
            raise EngineError(f"unknown mode {mode!r}")
        lam = self._level(step + 1)
        eps = self._noise(latent.shape)
        return ((np.float32(1.0) - lam) * target + lam * eps).astype(np.float32)

    def _depth_target(self, latent_shape: tuple, depth: np.ndarray) -> np.ndarray:
        h, w = latent_shape[1:]
        f = self.downsample
        if depth.shape != (h * f, w * f):
            raise EngineError(f"depth map {depth.shape} does not match latent {latent_shape}")
        view = depth.astype(np.float64).reshape(h, f, w, f)
        dlat = view.mean(axis=(1, 3)).astype(np.float32)
        background = dlat <= 1e-6
        shade = (0.35 + 0.65 * dlat).astype(np.float32)
        target = _prompt_color(self.params.prompt)[:, None, None] * shade[None]
        target[:, background] = 0.5
        return target.astype(np.float32)

    def _inpaint_target(self, latent: np.ndarray, mask: np.ndarray) -> np.ndarray:
        h, w = latent.shape[1:]
        if mask.shape != (h, w):
            raise EngineError(f"mask {mask.shape} does not match latent {latent.shape}")
        m = np.clip(mask.astype(np.float32), 0.0, 1.0)
        known = 1.0 - m
        den = ndimage.gaussian_filter(known.astype(np.float64), self.fill_sigma,
                                      mode="reflect")
        known_total = float(known.sum())
        target = np.empty_like(latent)
        for c in range(latent.shape[0]):
            num = ndimage.gaussian_filter(
                (latent[c] * known).astype(np.float64), self.fill_sigma, mode="reflect"
            )
            if known_total > 0:
                fallback = float((latent[c] * known).sum()) / known_total
            else:
                fallback = 0.5
            fill = np.where(den > 1e-6, num / np.maximum(den, 1e-12), fallback)
            target[c] = latent[c] * known + fill.astype(np.float32) * m
        return target.astype(np.float32)


_ENGINES = {"deterministic": DeterministicEngine}


def resolve_engine(model_id: str):
    """Engine class from its model identifier string."""
    try:
        return _ENGINES[model_id]
    except KeyError:
        raise EngineError(
            f"unknown model {model_id!r} (available: {sorted(_ENGINES)})"
        ) from None
