"""Shared fixtures and independent oracle helpers.

Oracles here recompute expected values from first principles (analytic
geometry, closed forms, brute force) without calling the code paths they
check, so a test failure always points at the implementation.
"""

import hashlib
from pathlib import Path

import numpy as np
import pytest
from scipy import ndimage

from texforge.config import RunConfig
from texforge.mesh import TextureAtlas, ensure_uvs
from texforge.primitives import cube, icosphere, tetrahedron, uv_sphere
from texforge.render import Viewpoint, _raster, render


@pytest.fixture(scope="session", autouse=True)
def warm_rasterizer():
    """Trigger JIT compilation once so timed tests measure the algorithm."""
    mesh = ensure_uvs(tetrahedron(), 64)
    render(mesh, TextureAtlas.filled(64), Viewpoint(0.0, 0.0), 32)


@pytest.fixture(scope="session")
def cube_mesh():
    return ensure_uvs(cube(), 1024)


@pytest.fixture(scope="session")
def icosphere2_mesh():
    return ensure_uvs(icosphere(2), 1024)


@pytest.fixture(scope="session")
def tetra_mesh():
    return ensure_uvs(tetrahedron(), 1024)


@pytest.fixture(scope="session")
def sphere_mesh():
    return ensure_uvs(uv_sphere(), 1024)


@pytest.fixture()
def small_config():
    """Fast pipeline settings for functional (untimed) tests."""
    return RunConfig(
        prompt="a weathered bronze relic",
        seed=3,
        atlas_resolution=256,
        render_resolution=320,
        backend_resolution=128,
        steps=12,
        inpaint_start=4,
        inpaint_end=8,
        checker_cutoff=6,
        views=[(0.0, 30.0), (180.0, 30.0)],
    )


def chart_raster(mesh, resolution):
    """Rasterize the UV layout: (face_id, bary, covered) per texel."""
    a = resolution
    cx = np.empty((mesh.num_faces, 3, 2))
    cx[:, :, 0] = mesh.uvs[:, :, 0] * a - 0.5
    cx[:, :, 1] = (1.0 - mesh.uvs[:, :, 1]) * a - 0.5
    zbuf = np.full((a, a), np.inf)
    face_id = np.full((a, a), -1, np.int32)
    bary = np.zeros((a, a, 3))
    _raster(
        np.ascontiguousarray(cx),
        np.ones((mesh.num_faces, 3)),
        np.ones(mesh.num_faces, bool),
        zbuf,
        face_id,
        bary,
    )
    return face_id, bary, face_id >= 0


def surface_affine_atlas(mesh, resolution, slope=0.55):
    """Atlas whose color is an affine function of 3D surface position.

    The function is continuous across chart boundaries (unlike any gradient
    drawn in atlas coordinates), so render-and-project round trips measure
    projection fidelity only. Gutter texels get the affine extension of the
    nearest chart so bilinear taps at chart edges stay consistent.
    """
    face_id, _, covered = chart_raster(mesh, resolution)
    _, (iy, ix) = ndimage.distance_transform_edt(~covered, return_indices=True)
    fid_full = face_id[iy, ix]

    a = resolution
    cx = np.empty((mesh.num_faces, 3, 2))
    cx[:, :, 0] = mesh.uvs[:, :, 0] * a - 0.5
    cx[:, :, 1] = (1.0 - mesh.uvs[:, :, 1]) * a - 0.5
    pos = np.zeros((a, a, 3))
    yy, xx = np.mgrid[0:a, 0:a].astype(np.float64)
    corners = mesh.face_corners()
    for f in range(mesh.num_faces):
        sel = fid_full == f
        if not sel.any():
            continue
        A = np.column_stack([cx[f, :, 0], cx[f, :, 1], np.ones(3)])
        M = np.linalg.solve(A, corners[f])  # texel coords -> 3D point
        P = np.stack([xx[sel], yy[sel], np.ones(int(sel.sum()))], axis=1)
        pos[sel] = P @ M
    colors = np.clip(0.5 + slope * pos, 0.0, 1.0).astype(np.float32)
    return TextureAtlas(resolution, colors)


def brute_force_best_nz(mesh, views, radius, fov_deg, resolution):
    """Per-texel best view alignment, computed from geometry alone.

    For each view, a face counts if it passes the same strictly-positive
    culling test the renderer uses; its alignment is the face normal dotted
    with the unit eye direction. Valid for convex meshes, where a
    front-facing face is never self-occluded.
    """
    face_id, _, covered = chart_raster(mesh, resolution)
    normals = mesh.face_normals()
    centroids = mesh.face_corners().mean(axis=1)
    best = np.full((resolution, resolution), -np.inf)
    for pair in views:
        v = Viewpoint.from_pair(pair, radius=radius, fov_deg=fov_deg)
        eye = v.eye()
        front = np.einsum("ij,ij->i", normals, eye[None, :] - centroids) > 1e-12
        nz = normals @ (eye / np.linalg.norm(eye))
        per_face = np.where(front, nz, -np.inf)
        best = np.maximum(best, np.where(covered, per_face[np.clip(face_id, 0, None)], -np.inf))
    painted = covered & (best > -np.inf)
    return best, painted, covered


def dir_digest(root):
    """Order-independent content hash of a directory tree."""
    h = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            h.update(str(path.relative_to(root)).encode())
            h.update(path.read_bytes())
    return h.hexdigest()
