"""Small image helpers shared by the renderer, trimap logic and pipeline.

Images are float32 arrays in [0, 1], HWC for color and HW for masks. PNG
round-trips quantize to 8 bits; everything that must survive a byte-exact
round-trip is written at 8-bit precision in the first place.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np
from PIL import Image
from scipy import ndimage


def to_uint8(img: np.ndarray) -> np.ndarray:
    return (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def from_uint8(img: np.ndarray) -> np.ndarray:
    return img.astype(np.float32) / 255.0


def save_png(path: str | Path, img: np.ndarray) -> None:
    """Write a float image (or uint8 passthrough) as a deterministic PNG."""
    arr = img if img.dtype == np.uint8 else to_uint8(img)
    Image.fromarray(arr).save(str(path), format="PNG")


def load_png(path: str | Path) -> np.ndarray:
    with Image.open(str(path)) as im:
        arr = np.asarray(im.convert("RGB") if im.mode not in ("L", "RGB") else im)
    return from_uint8(arr)


def resize_linear(img: np.ndarray, size: int | tuple[int, int]) -> np.ndarray:
    """Bilinear resize; ``size`` is one side for square or (h, w)."""
    h, w = (size, size) if isinstance(size, int) else size
    out = cv2.resize(img.astype(np.float32), (w, h), interpolation=cv2.INTER_LINEAR)
    return out


def resize_nearest(img: np.ndarray, size: int | tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize for label maps; dtype is preserved."""
    h, w = (size, size) if isinstance(size, int) else size
    return cv2.resize(img, (w, h), interpolation=cv2.INTER_NEAREST)


def box_downsample(img: np.ndarray, factor: int) -> np.ndarray:
    """Mean over non-overlapping factor x factor blocks.

    Accumulates in float64 so the result is independent of summation order,
    then returns float32.
    """
    h, w = img.shape[:2]
    if h % factor or w % factor:
        raise ValueError(f"image {h}x{w} not divisible by block {factor}")
    if img.ndim == 2:
        view = img.reshape(h // factor, factor, w // factor, factor).astype(np.float64)
        return view.mean(axis=(1, 3)).astype(np.float32)
    c = img.shape[2]
    view = img.reshape(h // factor, factor, w // factor, factor, c).astype(np.float64)
    return view.mean(axis=(1, 3)).astype(np.float32)


def nearest_upsample(img: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(np.repeat(img, factor, axis=0), factor, axis=1)


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian blur with reflected borders; channels handled independently."""
    if sigma <= 0:
        return img.astype(np.float32, copy=True)
    src = img.astype(np.float64)
    if src.ndim == 2:
        out = ndimage.gaussian_filter(src, sigma=sigma, mode="reflect")
    else:
        out = np.stack(
            [ndimage.gaussian_filter(src[..., c], sigma=sigma, mode="reflect")
             for c in range(src.shape[2])],
            axis=-1,
        )
    return out.astype(np.float32)


def dilate_mask(mask: np.ndarray, iterations: int = 1) -> np.ndarray:
    """Binary dilation with the 8-connected structuring element."""
    if iterations <= 0:
        return mask.astype(bool, copy=True)
    return ndimage.binary_dilation(
        mask.astype(bool), structure=np.ones((3, 3), dtype=bool), iterations=iterations
    )


def fill_from_nearest(img: np.ndarray, valid: np.ndarray, max_distance: float | None = None) -> np.ndarray:
    """Replace invalid pixels with the value of the nearest valid pixel.

    Distance is Euclidean on the pixel grid. When ``max_distance`` is given,
    pixels farther than that from any valid pixel keep their original value.
    """
    valid = valid.astype(bool)
    if valid.all() or not valid.any():
        return img.copy()
    dist, (iy, ix) = ndimage.distance_transform_edt(~valid, return_indices=True)
    out = img[iy, ix]
    if max_distance is not None:
        keep = dist > max_distance
        out[keep] = img[keep]
    return out


def checkerboard(shape: tuple[int, int], period: int = 2) -> np.ndarray:
    """Alternating 0/1 float mask; cell (0, 0) is 1. ``period`` is a full cycle."""
    block = max(1, period // 2)
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    return (((yy // block) + (xx // block)) % 2 == 0).astype(np.float32)
