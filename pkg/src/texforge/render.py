"""Software rasterizer: screen-space rendering and atlas-space projection.

Determinism contract: identical inputs produce bit-identical outputs. The
inner raster loops are sequential (one thread, fixed face order; depth ties
resolved by first face index) and all accumulation orders are fixed.

Conventions
-----------
* Camera orbits the origin: ``eye = r * (cos(el)sin(az), sin(el), cos(el)cos(az))``
  looking at the origin with +y up (azimuth 0 places the camera on +z).
  Within 0.1 degree of the poles the up hint degenerates and is replaced by
  the horizontal direction of the azimuth so top/bottom views keep a stable
  orientation.
* Screen pixels: pixel (row y, col x) has its center at continuous
  coordinates (x, y); x grows right, y grows down.
* Atlas texels: texel (row, col) center corresponds to
  u = (col + 0.5) / res, v = 1 - (row + 0.5) / res, so v grows upward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import ndimage

from texforge.mesh import Mesh, TextureAtlas


@dataclass(frozen=True)
class Viewpoint:
    """Orbit-camera pose: where the camera sits on the view sphere."""

    azimuth_deg: float = 0.0
    elevation_deg: float = 0.0
    radius: float = 2.0
    fov_deg: float = 40.0

    @classmethod
    def from_pair(cls, pair, radius: float = 2.0, fov_deg: float = 40.0) -> "Viewpoint":
        az, el = pair
        return cls(azimuth_deg=float(az), elevation_deg=float(el), radius=radius, fov_deg=fov_deg)

    def eye(self) -> np.ndarray:
        az = math.radians(self.azimuth_deg)
        el = math.radians(self.elevation_deg)
        return self.radius * np.array(
            [math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az)]
        )

    def basis(self) -> tuple[np.ndarray, np.ndarray]:
        """(eye, R) with R rows = camera right / up / back axes in world space."""
        eye = self.eye()
        fwd = -eye / np.linalg.norm(eye)
        if abs(self.elevation_deg) >= 89.9:
            az = math.radians(self.azimuth_deg)
            up_hint = np.array([math.sin(az), 0.0, math.cos(az)])
        else:
            up_hint = np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, up_hint)
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        rot = np.stack([right, up, -fwd])
        return eye, rot


def project_points(points: np.ndarray, view: Viewpoint, width: int, height: int):
    """World points to (px, py, depth). Depth is distance along the view axis."""
    eye, rot = view.basis()
    cam = (points - eye) @ rot.T
    depth = -cam[:, 2]
    f = 1.0 / math.tan(math.radians(view.fov_deg) / 2.0)
    safe = np.where(depth > 1e-12, depth, 1e-12)
    x_ndc = f * cam[:, 0] / safe
    y_ndc = f * cam[:, 1] / safe
    px = (x_ndc + 1.0) * 0.5 * width - 0.5
    py = (1.0 - y_ndc) * 0.5 * height - 0.5
    return px, py, depth


@njit(cache=True)
def _raster(corners_xy, corner_depth, face_ok, zbuf, face_id, bary):
    """Z-buffered triangle fill over pixel centers at integer coordinates.

    Barycentrics are perspective-correct when corner_depth varies and reduce
    to affine when all depths are 1. First face wins depth ties.
    """
    height, width = zbuf.shape
    nf = corners_xy.shape[0]
    for f in range(nf):
        if not face_ok[f]:
            continue
        x0 = corners_xy[f, 0, 0]
        y0 = corners_xy[f, 0, 1]
        x1 = corners_xy[f, 1, 0]
        y1 = corners_xy[f, 1, 1]
        x2 = corners_xy[f, 2, 0]
        y2 = corners_xy[f, 2, 1]
        area2 = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if abs(area2) < 1e-14:
            continue
        inv_area = 1.0 / area2

        xmin = int(math.ceil(min(x0, min(x1, x2))))
        xmax = int(math.floor(max(x0, max(x1, x2))))
        ymin = int(math.ceil(min(y0, min(y1, y2))))
        ymax = int(math.floor(max(y0, max(y1, y2))))
        if xmin < 0:
            xmin = 0
        if ymin < 0:
            ymin = 0
        if xmax > width - 1:
            xmax = width - 1
        if ymax > height - 1:
            ymax = height - 1

        d0 = corner_depth[f, 0]
        d1 = corner_depth[f, 1]
        d2 = corner_depth[f, 2]
        for y in range(ymin, ymax + 1):
            fy = float(y)
            for x in range(xmin, xmax + 1):
                fx = float(x)
                w0 = ((x1 - fx) * (y2 - fy) - (x2 - fx) * (y1 - fy)) * inv_area
                w1 = ((x2 - fx) * (y0 - fy) - (x0 - fx) * (y2 - fy)) * inv_area
                w2 = 1.0 - w0 - w1
                if w0 < -1e-9 or w1 < -1e-9 or w2 < -1e-9:
                    continue
                inv_d = w0 / d0 + w1 / d1 + w2 / d2
                d = 1.0 / inv_d
                if d < zbuf[y, x]:
                    zbuf[y, x] = d
                    face_id[y, x] = f
                    bary[y, x, 0] = (w0 / d0) * d
                    bary[y, x, 1] = (w1 / d1) * d
                    bary[y, x, 2] = (w2 / d2) * d


def _front_faces(mesh: Mesh, eye: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(face_ok, face_normals, face_nz) with culling by the per-face view ray.

    Faces are planar, so testing the centroid against the eye decides
    visibility orientation exactly for every point of the face.
    """
    normals = mesh.face_normals()
    centroids = mesh.face_corners().mean(axis=1)
    facing = np.einsum("ij,ij->i", normals, eye[None, :] - centroids)
    nz = normals @ (eye / np.linalg.norm(eye))
    return facing > 1e-12, normals, nz


@dataclass
class RenderOutput:
    """Everything one screen-space render pass produces."""

    view: Viewpoint
    width: int
    height: int
    color: np.ndarray      # (H, W, 3) float32
    depth: np.ndarray      # (H, W) float32, 0 outside the object
    mask: np.ndarray       # (H, W) bool foreground
    face_id: np.ndarray    # (H, W) int32, -1 outside
    bary: np.ndarray       # (H, W, 3) float64 perspective-correct
    zbuf: np.ndarray       # (H, W) float64, +inf outside
    nz: np.ndarray         # (H, W) float32 per-pixel face normal alignment
    face_nz: np.ndarray    # (F,) float64 normal . unit(eye)
    face_ok: np.ndarray    # (F,) bool front-facing


def render(
    mesh: Mesh,
    atlas: TextureAtlas | None,
    view: Viewpoint,
    resolution: int = 1200,
    background: float = 0.5,
    near: float = 0.05,
) -> RenderOutput:
    """Rasterize the mesh and sample the atlas (if any) at every pixel."""
    h = w = int(resolution)
    eye, _ = view.basis()
    face_ok, _, face_nz = _front_faces(mesh, eye)

    px, py, pdepth = project_points(mesh.vertices, view, w, h)
    corners_xy = np.stack([px[mesh.faces], py[mesh.faces]], axis=-1)
    corner_depth = pdepth[mesh.faces]
    face_ok = face_ok & (corner_depth > near).all(axis=1)

    zbuf = np.full((h, w), np.inf, dtype=np.float64)
    face_id = np.full((h, w), -1, dtype=np.int32)
    bary = np.zeros((h, w, 3), dtype=np.float64)
    _raster(
        np.ascontiguousarray(corners_xy),
        np.ascontiguousarray(corner_depth),
        np.ascontiguousarray(face_ok),
        zbuf,
        face_id,
        bary,
    )

    mask = face_id >= 0
    depth = np.where(mask, zbuf, 0.0).astype(np.float32)
    nz = np.zeros((h, w), dtype=np.float32)
    nz[mask] = face_nz[face_id[mask]].astype(np.float32)

    color = np.full((h, w, 3), np.float32(background), dtype=np.float32)
    if atlas is not None and mesh.has_uvs and mask.any():
        fids = face_id[mask]
        uv = np.einsum("nc,ncd->nd", bary[mask], mesh.uvs[fids])
        color[mask] = sample_atlas(atlas.pixels, uv[:, 0], uv[:, 1])

    return RenderOutput(
        view=view, width=w, height=h, color=color, depth=depth, mask=mask,
        face_id=face_id, bary=bary, zbuf=zbuf, nz=nz, face_nz=face_nz, face_ok=face_ok,
    )


def sample_atlas(pixels: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear atlas lookup at UV coordinates with edge clamping."""
    res = pixels.shape[0]
    x = np.asarray(u) * res - 0.5
    y = (1.0 - np.asarray(v)) * res - 0.5
    return sample_image_xy(pixels, x, y)


def sample_image_xy(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear lookup at continuous pixel coordinates with edge clamping."""
    h, w = img.shape[:2]
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1.0)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)
    fy = (y - y0)
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    p00 = img[y0, x0]
    p01 = img[y0, x1]
    p10 = img[y1, x0]
    p11 = img[y1, x1]
    top = p00 * (1 - fx) + p01 * fx
    bot = p10 * (1 - fx) + p11 * fx
    out = top * (1 - fy) + bot * fy
    return out.astype(np.float32) if img.dtype == np.float32 else out


def sample_image_nearest(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    ix = np.clip(np.rint(np.asarray(x)).astype(np.int64), 0, w - 1)
    iy = np.clip(np.rint(np.asarray(y)).astype(np.int64), 0, h - 1)
    return img[iy, ix]


def resample_to_screen(
    out: RenderOutput, mesh: Mesh, image: np.ndarray, nearest: bool = False, fill=0.0
) -> np.ndarray:
    """Carry an atlas-resolution image into the screen space of a render.

    Each foreground pixel looks up its interpolated UV in ``image``. Used to
    bring per-texel state (previous-best view quality, painted flags) into
    the space where masks are decided.
    """
    res = image.shape[0]
    shape = (out.height, out.width) + image.shape[2:]
    screen = np.full(shape, fill, dtype=image.dtype if image.dtype != bool else np.float32)
    if not out.mask.any():
        return screen
    fids = out.face_id[out.mask]
    uv = np.einsum("nc,ncd->nd", out.bary[out.mask], mesh.uvs[fids])
    x = uv[:, 0] * res - 0.5
    y = (1.0 - uv[:, 1]) * res - 0.5
    if nearest:
        screen[out.mask] = sample_image_nearest(image, x, y)
    else:
        screen[out.mask] = sample_image_xy(image.astype(np.float64), x, y)
    return screen


@dataclass
class AtlasProjection:
    """Per-texel result of projecting one view's image back onto the atlas."""

    resolution: int
    color: np.ndarray      # (A, A, 3) float32 sampled screen colors
    weight: np.ndarray     # (A, A) float32 blend weight (0 where untouched)
    covered: np.ndarray    # (A, A) bool texel lies in some chart triangle
    visible: np.ndarray    # (A, A) bool texel passes the depth test this view
    face_id: np.ndarray    # (A, A) int32, -1 outside all charts
    nz: np.ndarray         # (A, A) float32 view alignment of the texel's face
    screen_xy: np.ndarray  # (A, A, 2) float32 projected screen position
    depth_bias: float = field(default=0.0)


def render_in_uv_space(
    mesh: Mesh,
    screen: RenderOutput,
    image: np.ndarray | None = None,
    weight_image: np.ndarray | None = None,
    atlas_resolution: int = 1024,
) -> AtlasProjection:
    """Rasterize the mesh over the atlas grid and pull screen data onto texels.

    Visibility: a texel is visible when its projected screen point lands on
    its own face in the z-buffer, or its depth is within a small bias of the
    stored depth (handles sub-pixel silhouettes where the buffer holds the
    background or an abutting face).
    """
    if not mesh.has_uvs:
        raise ValueError("atlas-space rasterization requires UVs")
    a = int(atlas_resolution)

    eye, _ = screen.view.basis()
    face_ok = screen.face_ok

    corners_xy = np.empty((mesh.num_faces, 3, 2), dtype=np.float64)
    corners_xy[:, :, 0] = mesh.uvs[:, :, 0] * a - 0.5
    corners_xy[:, :, 1] = (1.0 - mesh.uvs[:, :, 1]) * a - 0.5
    ones = np.ones((mesh.num_faces, 3), dtype=np.float64)

    zbuf_a = np.full((a, a), np.inf, dtype=np.float64)
    face_id = np.full((a, a), -1, dtype=np.int32)
    bary = np.zeros((a, a, 3), dtype=np.float64)
    _raster(
        np.ascontiguousarray(corners_xy), ones, np.ascontiguousarray(face_ok),
        zbuf_a, face_id, bary,
    )

    covered = face_id >= 0
    color = np.zeros((a, a, 3), dtype=np.float32)
    weight = np.zeros((a, a), dtype=np.float32)
    visible = np.zeros((a, a), dtype=bool)
    nz = np.zeros((a, a), dtype=np.float32)
    screen_xy = np.full((a, a, 2), -1.0, dtype=np.float32)

    fg_depths = screen.zbuf[screen.mask]
    depth_range = float(fg_depths.max() - fg_depths.min()) if fg_depths.size else 0.0
    bias = 1e-3 * depth_range + 1e-4

    if covered.any():
        fids = face_id[covered]
        corners3d = mesh.face_corners()[fids]
        pts = np.einsum("nc,ncd->nd", bary[covered], corners3d)
        sx, sy, sdepth = project_points(pts, screen.view, screen.width, screen.height)

        inb = (sx >= 0) & (sx <= screen.width - 1) & (sy >= 0) & (sy <= screen.height - 1)
        ix = np.clip(np.rint(sx).astype(np.int64), 0, screen.width - 1)
        iy = np.clip(np.rint(sy).astype(np.int64), 0, screen.height - 1)
        same_face = screen.face_id[iy, ix] == fids
        # the buffer holds depths of neighboring rays, which diverge sharply
        # at grazing incidence; testing against the local max keeps texels of
        # steep but unoccluded faces while still rejecting occluded ones
        zmax = ndimage.maximum_filter(screen.zbuf, size=3, mode="nearest")
        depth_ok = sdepth <= zmax[iy, ix] + bias
        vis = inb & (same_face | depth_ok)

        visible[covered] = vis
        nz[covered] = screen.face_nz[fids].astype(np.float32)
        screen_xy[covered] = np.stack([sx, sy], axis=1).astype(np.float32)

        if image is not None:
            color[covered] = sample_image_xy(image.astype(np.float64), sx, sy).astype(np.float32)
        w = vis.astype(np.float64)
        if weight_image is not None:
            w = w * sample_image_xy(weight_image.astype(np.float64), sx, sy)
        weight[covered] = w.astype(np.float32)

    return AtlasProjection(
        resolution=a, color=color, weight=weight, covered=covered, visible=visible,
        face_id=face_id, nz=nz, screen_xy=screen_xy, depth_bias=bias,
    )


def depth_to_conditioning(depth: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Normalize foreground depth to [0, 1] with near = 1, far = 0, outside = 0."""
    cond = np.zeros(depth.shape, dtype=np.float32)
    if not mask.any():
        return cond
    vals = depth[mask].astype(np.float64)
    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo < 1e-9:
        cond[mask] = 1.0
    else:
        cond[mask] = ((hi - depth[mask]) / (hi - lo)).astype(np.float32)
    return cond
