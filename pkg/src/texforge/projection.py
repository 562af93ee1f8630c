"""Blending view images back onto the texture atlas."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from texforge.imutil import fill_from_nearest
from texforge.mesh import Mesh
from texforge.render import AtlasProjection, _raster, sample_image_nearest


def restrict_to_interior(proj: AtlasProjection, screen_mask: np.ndarray, erosion: int = 1) -> None:
    """Zero the weight of texels whose screen sample sits on the silhouette.

    Bilinear color lookups within one pixel of the background mix in plate
    color; those texels wait for a view that sees them properly.
    """
    if erosion <= 0:
        return
    interior = ndimage.binary_erosion(
        screen_mask, structure=np.ones((3, 3), dtype=bool), iterations=erosion
    )
    touched = proj.weight > 0
    if not touched.any():
        return
    xy = proj.screen_xy[touched]
    ok = sample_image_nearest(interior, xy[:, 0], xy[:, 1])
    w = proj.weight[touched]
    w[~ok] = 0.0
    proj.weight[touched] = w


def apply_projection(atlas_pixels: np.ndarray, proj: AtlasProjection) -> np.ndarray:
    """Convex per-texel blend toward the projected colors.

    Weight 0 leaves a texel bit-identical; weight 1 replaces it outright.
    """
    w = proj.weight[..., None].astype(np.float32)
    out = atlas_pixels + w * (proj.color - atlas_pixels)
    return np.clip(out, 0.0, 1.0, out=out)


def chart_coverage_mask(mesh: Mesh, atlas_resolution: int) -> np.ndarray:
    """Texels lying inside any chart triangle, independent of viewpoint."""
    if not mesh.has_uvs:
        raise ValueError("coverage mask requires UVs")
    a = int(atlas_resolution)
    corners_xy = np.empty((mesh.num_faces, 3, 2), dtype=np.float64)
    corners_xy[:, :, 0] = mesh.uvs[:, :, 0] * a - 0.5
    corners_xy[:, :, 1] = (1.0 - mesh.uvs[:, :, 1]) * a - 0.5
    ones = np.ones((mesh.num_faces, 3), dtype=np.float64)
    all_ok = np.ones(mesh.num_faces, dtype=bool)

    zbuf = np.full((a, a), np.inf, dtype=np.float64)
    face_id = np.full((a, a), -1, dtype=np.int32)
    bary = np.zeros((a, a, 3), dtype=np.float64)
    _raster(np.ascontiguousarray(corners_xy), ones, all_ok, zbuf, face_id, bary)
    return face_id >= 0


def bleed_atlas(
    atlas_pixels: np.ndarray, painted: np.ndarray, radius: float = 2.0
) -> np.ndarray:
    """Copy painted colors a short distance into unpainted surroundings.

    Stops bilinear sampling at chart borders from pulling in unpainted
    plate color. A run that painted nothing comes back untouched.
    """
    if not painted.any():
        return atlas_pixels.copy()
    return fill_from_nearest(atlas_pixels, painted, max_distance=radius)
