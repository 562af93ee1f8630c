"""Masked iterative denoising over one view, plus the built-in mock backend.

The sampler owns the loop structure: before every step the known region of
the latent is re-injected at the step's noise level, then the backend does
one denoising step in the mode the schedule dictates. After the final step
the known region is restored from the clean latent so kept pixels come back
exactly as they went in.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from texforge.errors import BackendError, ScheduleMismatch
from texforge.imutil import box_downsample, gaussian_blur, nearest_upsample
from texforge.trimap import GENERATE, REFINE, downsample_labels, realize_blend_mask


@dataclass(frozen=True)
class Conditioning:
    """Session-level backend parameters, fixed for a whole run."""

    prompt: str
    guidance_scale: float = 7.5
    steps: int = 50
    seed: int = 0


@dataclass(frozen=True)
class SamplingSchedule:
    """Step count and mode windows: depth, then inpaint, then depth again."""

    steps: int = 50
    inpaint_start: int = 10
    inpaint_end: int = 20
    checker_cutoff: int = 25
    checker_period: int = 2

    def __post_init__(self):
        if not (0 <= self.inpaint_start <= self.inpaint_end):
            raise ScheduleMismatch("inpaint window must satisfy 0 <= start <= end")

    @classmethod
    def from_config(cls, cfg) -> "SamplingSchedule":
        return cls(
            steps=cfg.steps,
            inpaint_start=cfg.inpaint_start,
            inpaint_end=cfg.inpaint_end,
            checker_cutoff=cfg.checker_cutoff,
            checker_period=cfg.checker_period,
        )

    def mode(self, step: int) -> str:
        if step < 0 or step >= self.steps:
            raise ScheduleMismatch(f"step {step} outside [0, {self.steps})")
        return "inpaint" if self.inpaint_start <= step < self.inpaint_end else "depth"

    def modes(self) -> list[str]:
        return [self.mode(i) for i in range(self.steps)]


class DenoiserBackend(ABC):
    """One latent-space denoiser. Latents are CHW float32.

    ``add_noise(x, 0)`` must return the session's initial noise regardless
    of ``x``, so the first loop iteration can start from pure noise through
    the same call path as every later injection.
    """

    channels = 3
    downsample = 8

    @abstractmethod
    def open(self, cond: Conditioning) -> None: ...

    @abstractmethod
    def encode(self, image: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def decode(self, latent: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def add_noise(self, latent: np.ndarray, step: int) -> np.ndarray: ...

    @abstractmethod
    def denoise_step(
        self, latent: np.ndarray, step: int, mode: str,
        depth: np.ndarray | None = None, mask: np.ndarray | None = None,
    ) -> np.ndarray: ...

    def close(self) -> None:
        pass

    def latent_shape(self, resolution: int) -> tuple[int, int, int]:
        return (self.channels, resolution // self.downsample, resolution // self.downsample)


def _prompt_color(prompt: str) -> np.ndarray:
    """Stable pseudo-random base color in [0.25, 0.95] from the prompt text."""
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    return (0.25 + 0.7 * np.frombuffer(digest[:3], dtype=np.uint8) / 255.0).astype(np.float32)


class MockDenoiser(DenoiserBackend):
    """Deterministic stand-in denoiser with real diffusion loop semantics.

    Latents are 8x box-downsampled images. Each step contracts the latent
    toward a mode-dependent target: depth mode shades a prompt-derived color
    by the depth conditioning; inpaint mode fills masked cells with a
    normalized Gaussian average of the unmasked ones. Noise level at step i
    is (1 - decay)^i of the session noise, so step 0 starts at pure noise
    and the final step lands within float error of the target.
    """

    def __init__(self, noise_decay: float = 0.35, fill_sigma: float = 6.0):
        self.noise_decay = float(noise_decay)
        self.fill_sigma = float(fill_sigma)
        self.cond: Conditioning | None = None
        self._noise_cache: dict[tuple, np.ndarray] = {}

    def open(self, cond: Conditioning) -> None:
        self.cond = cond
        self._noise_cache.clear()

    def _require_session(self) -> Conditioning:
        if self.cond is None:
            raise BackendError("no session opened")
        return self.cond

    def _noise(self, shape: tuple) -> np.ndarray:
        cond = self._require_session()
        key = tuple(shape)
        if key not in self._noise_cache:
            rng = np.random.default_rng(cond.seed)
            self._noise_cache[key] = rng.random(key, dtype=np.float32)
        return self._noise_cache[key]

    def _level(self, step: int) -> np.float32:
        return np.float32((1.0 - self.noise_decay) ** step)

    def encode(self, image: np.ndarray) -> np.ndarray:
        self._require_session()
        if image.ndim != 3 or image.shape[2] != self.channels:
            raise BackendError(f"encode expects HWC with {self.channels} channels")
        down = box_downsample(image, self.downsample)
        return np.ascontiguousarray(np.transpose(down, (2, 0, 1)))

    def decode(self, latent: np.ndarray) -> np.ndarray:
        self._require_session()
        if latent.ndim != 3 or latent.shape[0] != self.channels:
            raise BackendError(f"decode expects CHW with {self.channels} channels")
        up = nearest_upsample(np.transpose(latent, (1, 2, 0)), self.downsample)
        return np.ascontiguousarray(up.astype(np.float32))

    def add_noise(self, latent: np.ndarray, step: int) -> np.ndarray:
        cond = self._require_session()
        if step < 0 or step > cond.steps:
            raise BackendError(f"noise step {step} outside [0, {cond.steps}]", step=step)
        lam = self._level(step)
        eps = self._noise(latent.shape)
        return ((np.float32(1.0) - lam) * latent + lam * eps).astype(np.float32)

    def denoise_step(self, latent, step, mode, depth=None, mask=None):
        cond = self._require_session()
        if step < 0 or step >= cond.steps:
            raise BackendError(f"denoise step {step} outside [0, {cond.steps})", step=step)
        if mode == "depth":
            if depth is None:
                raise BackendError("depth mode requires a depth map")
            target = self._depth_target(latent.shape, depth)
        elif mode == "inpaint":
            if mask is None:
                raise BackendError("inpaint mode requires a mask")
            target = self._inpaint_target(latent, mask)
        else:
            raise BackendError(f"unknown mode {mode!r}")
        lam = self._level(step + 1)
        eps = self._noise(latent.shape)
        return ((np.float32(1.0) - lam) * target + lam * eps).astype(np.float32)

    def _depth_target(self, latent_shape, depth: np.ndarray) -> np.ndarray:
        cond = self._require_session()
        h, w = latent_shape[1:]
        if depth.shape != (h * self.downsample, w * self.downsample):
            raise BackendError(
                f"depth map {depth.shape} does not match latent {latent_shape}"
            )
        dlat = box_downsample(depth.astype(np.float32), self.downsample)
        bg = dlat <= 1e-6
        shade = (0.35 + 0.65 * dlat).astype(np.float32)
        target = _prompt_color(cond.prompt)[:, None, None] * shade[None]
        target[:, bg] = 0.5
        return target.astype(np.float32)

    def _inpaint_target(self, latent: np.ndarray, mask: np.ndarray) -> np.ndarray:
        h, w = latent.shape[1:]
        if mask.shape != (h, w):
            raise BackendError(f"mask {mask.shape} does not match latent {latent.shape}")
        m = np.clip(mask.astype(np.float32), 0.0, 1.0)
        known_w = 1.0 - m
        den = gaussian_blur(known_w, self.fill_sigma)
        target = np.empty_like(latent)
        known_total = float(known_w.sum())
        for c in range(latent.shape[0]):
            num = gaussian_blur(latent[c] * known_w, self.fill_sigma)
            if known_total > 0:
                fallback = float((latent[c] * known_w).sum()) / known_total
            else:
                fallback = 0.5
            fill = np.where(den > 1e-6, num / np.maximum(den, 1e-12), np.float32(fallback))
            target[c] = latent[c] * known_w + fill * m
        return target.astype(np.float32)


class RecordingBackend(DenoiserBackend):
    """Wraps a backend and logs every call; used to audit loop structure."""

    def __init__(self, inner: DenoiserBackend):
        self.inner = inner
        self.channels = inner.channels
        self.downsample = inner.downsample
        self.calls: list[dict] = []

    def _log(self, method: str, **fields) -> None:
        self.calls.append({"method": method, **fields})

    def open(self, cond: Conditioning) -> None:
        self._log("open", prompt=cond.prompt, steps=cond.steps, seed=cond.seed)
        self.inner.open(cond)

    def encode(self, image):
        self._log("encode", shape=list(image.shape))
        return self.inner.encode(image)

    def decode(self, latent):
        self._log("decode", shape=list(latent.shape))
        return self.inner.decode(latent)

    def add_noise(self, latent, step):
        self._log("add_noise", step=step)
        return self.inner.add_noise(latent, step)

    def denoise_step(self, latent, step, mode, depth=None, mask=None):
        mask_sum = None if mask is None else float(np.asarray(mask, dtype=np.float64).sum())
        self._log("denoise_step", step=step, mode=mode, has_depth=depth is not None,
                  mask_sum=mask_sum)
        return self.inner.denoise_step(latent, step, mode, depth=depth, mask=mask)

    def step_modes(self) -> list[tuple[int, str]]:
        return [(c["step"], c["mode"]) for c in self.calls if c["method"] == "denoise_step"]


@dataclass
class ViewSampleInfo:
    """Diagnostics from sampling one view."""

    steps: int
    modes: list = field(default_factory=list)
    mask_fractions: list = field(default_factory=list)
    backend_calls: int = 0


def sample_view(
    backend: DenoiserBackend,
    schedule: SamplingSchedule,
    q_image: np.ndarray,
    labels: np.ndarray,
    depth_cond: np.ndarray,
) -> tuple[np.ndarray, ViewSampleInfo]:
    """Repaint one view image under its trimap and return the decoded result.

    ``q_image`` is the current rendered state at backend resolution,
    ``labels`` the trimap at the same resolution, ``depth_cond`` the
    normalized depth. With zero steps the input comes back unchanged.
    """
    info = ViewSampleInfo(steps=schedule.steps)
    if schedule.steps == 0:
        return q_image.copy(), info

    if q_image.shape[:2] != labels.shape or labels.shape != depth_cond.shape:
        raise ValueError("image, labels and depth must share a resolution")

    z_q = backend.encode(q_image)
    info.backend_calls += 1
    labels_lat = downsample_labels(labels, backend.downsample)

    z = backend.add_noise(z_q, 0)
    info.backend_calls += 1
    for i in range(schedule.steps):
        m = realize_blend_mask(labels_lat, i, schedule.checker_cutoff, schedule.checker_period)
        z_known = backend.add_noise(z_q, i)
        z = (z * m[None] + z_known * (np.float32(1.0) - m)[None]).astype(np.float32)
        mode = schedule.mode(i)
        z = backend.denoise_step(
            z, i, mode,
            depth=depth_cond if mode == "depth" else None,
            mask=m if mode == "inpaint" else None,
        )
        info.backend_calls += 2
        info.modes.append(mode)
        info.mask_fractions.append(float(m.mean()))

    m_final = ((labels_lat == REFINE) | (labels_lat == GENERATE)).astype(np.float32)
    z = (z * m_final[None] + z_q * (np.float32(1.0) - m_final)[None]).astype(np.float32)
    out = backend.decode(z)
    info.backend_calls += 1
    return out, info
