"""Per-view repaint planning: the keep / refine / generate trimap.

A persistent per-texel cache remembers the best viewing alignment (normal
dot unit-eye) any earlier view achieved. Each new view compares its own
alignment against the cache: unseen texels are generated, clearly better
angles are refined, everything else is kept untouched.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from texforge.errors import ParseError
from texforge.imutil import checkerboard, fill_from_nearest, gaussian_blur
from texforge.mesh import Mesh
from texforge.render import AtlasProjection, RenderOutput, resample_to_screen

BACKGROUND = np.int8(0)
KEEP = np.int8(1)
REFINE = np.int8(2)
GENERATE = np.int8(3)

META_MAGIC = b"TXMETA01"
_UNPAINTED = -2.0  # sentinel below any real alignment value


@dataclass
class MetaTexture:
    """Best view alignment seen per texel, plus whether it was seen at all."""

    resolution: int
    best_nz: np.ndarray  # (A, A) float32, _UNPAINTED where never seen
    painted: np.ndarray  # (A, A) bool

    @classmethod
    def empty(cls, resolution: int) -> "MetaTexture":
        return cls(
            resolution=resolution,
            best_nz=np.full((resolution, resolution), _UNPAINTED, dtype=np.float32),
            painted=np.zeros((resolution, resolution), dtype=bool),
        )

    def copy(self) -> "MetaTexture":
        return MetaTexture(self.resolution, self.best_nz.copy(), self.painted.copy())

    def update(self, proj: AtlasProjection) -> None:
        """Raise the cache wherever this view actually painted texels.

        The gate is the projection weight, not bare visibility: a texel the
        view saw but could not color (masked out, silhouette-adjacent) must
        stay claimable by later views or it would be kept forever unpainted.
        Projections without a weight image carry weight = visibility.
        """
        seen = proj.covered & proj.visible & (proj.weight > 0)
        self.best_nz[seen] = np.maximum(self.best_nz[seen], proj.nz[seen])
        self.painted[seen] = True

    def sampling_maps(self, fill_radius: float = 4.0):
        """Cache arrays with painted values bled into nearby unseen texels.

        Screen pixels near a face edge can land on gutter texels when mapped
        to the atlas; bleeding lets them read their face's own cache entry
        instead of the unseen sentinel.
        """
        if not self.painted.any():
            return self.best_nz.copy(), self.painted.copy()
        nz = fill_from_nearest(self.best_nz, self.painted, max_distance=fill_radius)
        filled = fill_from_nearest(
            self.painted.astype(np.uint8), self.painted, max_distance=fill_radius
        )
        return nz, filled.astype(bool)

    def to_bytes(self) -> bytes:
        vals = np.where(self.painted, self.best_nz, np.float32(_UNPAINTED))
        header = META_MAGIC + struct.pack("<II", self.resolution, self.resolution)
        return header + vals.astype("<f4").tobytes(order="C")

    @classmethod
    def from_bytes(cls, blob: bytes) -> "MetaTexture":
        if blob[:8] != META_MAGIC:
            raise ParseError("bad magic in view-cache blob")
        w, h = struct.unpack("<II", blob[8:16])
        if w != h:
            raise ParseError(f"view cache must be square, got {w}x{h}")
        expect = 16 + 4 * w * h
        if len(blob) != expect:
            raise ParseError(f"view cache size {len(blob)} != expected {expect}")
        vals = np.frombuffer(blob[16:], dtype="<f4").reshape(h, w).astype(np.float32)
        return cls(resolution=w, best_nz=vals, painted=vals > -1.5)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "MetaTexture":
        return cls.from_bytes(Path(path).read_bytes())


def compute_trimap(
    screen: RenderOutput, mesh: Mesh, meta: MetaTexture, refine_margin: float = 0.1
) -> np.ndarray:
    """Label every screen pixel keep / refine / generate against the cache."""
    labels = np.full((screen.height, screen.width), BACKGROUND, dtype=np.int8)
    if not screen.mask.any():
        return labels

    cache_nz, cache_painted = meta.sampling_maps()
    nz_prev = resample_to_screen(screen, mesh, cache_nz, nearest=True, fill=_UNPAINTED)
    seen_prev = resample_to_screen(
        screen, mesh, cache_painted.astype(np.uint8), nearest=True, fill=0
    ).astype(bool)

    fg = screen.mask
    labels[fg] = KEEP
    gen = fg & ~seen_prev
    labels[gen] = GENERATE
    ref = fg & seen_prev & (screen.nz.astype(np.float64) - nz_prev > refine_margin)
    labels[ref] = REFINE
    return labels


_PRIORITY = np.array([REFINE, GENERATE, KEEP, BACKGROUND], dtype=np.int8)


def downsample_labels(labels: np.ndarray, factor: int) -> np.ndarray:
    """Majority vote over blocks; ties go refine > generate > keep > background."""
    h, w = labels.shape
    if h % factor or w % factor:
        raise ValueError(f"label map {h}x{w} not divisible by {factor}")
    blocks = labels.reshape(h // factor, factor, w // factor, factor)
    counts = np.stack(
        [(blocks == lab).sum(axis=(1, 3)) for lab in _PRIORITY], axis=0
    )
    winner = counts.argmax(axis=0)  # first max wins, which encodes the priority
    return _PRIORITY[winner]


def realize_blend_mask(
    labels: np.ndarray, step: int, checker_cutoff: int = 25, checker_period: int = 2
) -> np.ndarray:
    """Per-pixel blend weight for one denoising step.

    Keep and background contribute 0 (the pixel is forced back to the
    rendered state), generate contributes 1, refine alternates on a
    checkerboard through ``checker_cutoff`` and is 1 afterwards.
    """
    m = np.zeros(labels.shape, dtype=np.float32)
    m[labels == GENERATE] = 1.0
    ref = labels == REFINE
    if ref.any():
        if step <= checker_cutoff:
            m[ref] = checkerboard(labels.shape, checker_period)[ref]
        else:
            m[ref] = 1.0
    return m


def soft_projection_mask(labels: np.ndarray, sigma: float = 9.0) -> np.ndarray:
    """Blend weights for projecting a finished view back onto the atlas.

    Hard mask = pixels that were actually repainted. Multiplying by its blur
    keeps the mask zero outside (kept pixels stay bit-exact) while ramping
    down toward repaint boundaries so seams fade instead of stepping.
    """
    hard = ((labels == REFINE) | (labels == GENERATE)).astype(np.float32)
    return hard * gaussian_blur(hard, sigma)


def hard_projection_mask(labels: np.ndarray) -> np.ndarray:
    return ((labels == REFINE) | (labels == GENERATE)).astype(np.float32)


def trimap_to_rgb(labels: np.ndarray) -> np.ndarray:
    """Debug visualization: keep green, refine blue, generate red."""
    img = np.zeros(labels.shape + (3,), dtype=np.float32)
    img[labels == KEEP] = (0.1, 0.8, 0.1)
    img[labels == REFINE] = (0.15, 0.3, 0.9)
    img[labels == GENERATE] = (0.9, 0.2, 0.1)
    return img
