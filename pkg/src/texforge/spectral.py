"""Low-frequency shape eigenfunctions and geometry augmentation.

The discrete Laplace operator uses cotangent edge weights with a lumped
(one-third area) vertex mass matrix. Displacing vertices along their
normals by a low eigenfunction bends the shape smoothly without tearing,
which is how augmented geometry variants are produced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as dlinalg
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from texforge.errors import ConvergenceFailure, FlippedFaces
from texforge.mesh import Mesh

_MIN_WEIGHT = 1e-6


def cotangent_laplacian(mesh: Mesh, clamp: bool = True):
    """(L, m) where L is the sparse stiffness matrix and m the lumped masses.

    Rows of L sum to zero by construction. With ``clamp`` every edge weight
    is floored at a small positive value, which keeps L positive
    semidefinite on meshes with obtuse triangles.
    """
    v = mesh.vertices
    f = mesh.faces
    n = mesh.num_vertices

    rows, cols, vals = [], [], []
    for corner in range(3):
        i = f[:, (corner + 1) % 3]
        j = f[:, (corner + 2) % 3]
        k = f[:, corner]
        u1 = v[i] - v[k]
        u2 = v[j] - v[k]
        cross = np.linalg.norm(np.cross(u1, u2), axis=1)
        cot = np.einsum("ij,ij->i", u1, u2) / np.maximum(cross, 1e-12)
        w = 0.5 * cot
        rows.append(i)
        cols.append(j)
        vals.append(w)
        rows.append(j)
        cols.append(i)
        vals.append(w)

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    weights = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    if clamp:
        weights.data = np.maximum(weights.data, _MIN_WEIGHT)

    degree = np.asarray(weights.sum(axis=1)).ravel()
    lap = sparse.diags(degree) - weights

    masses = np.zeros(n, dtype=np.float64)
    areas = mesh.face_areas() / 3.0
    for corner in range(3):
        np.add.at(masses, f[:, corner], areas)
    return lap.tocsr(), masses


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: largest-magnitude entry is positive."""
    out = vecs.copy()
    for c in range(out.shape[1]):
        idx = int(np.argmax(np.abs(out[:, c])))
        if out[idx, c] < 0:
            out[:, c] = -out[:, c]
    return out


def eigenfunctions(mesh: Mesh, k: int = 16):
    """First k generalized eigenpairs of (L, M), eigenvalues ascending.

    The first pair is the constant function at eigenvalue ~0. Small systems
    (or k close to the vertex count) fall back to a dense solve.
    """
    lap, masses = cotangent_laplacian(mesh)
    n = mesh.num_vertices
    k = min(k, n)
    if k < 1:
        raise ValueError("k must be at least 1")

    if k >= n - 1 or n <= 64:
        dense = lap.toarray()
        vals, vecs = dlinalg.eigh(dense, np.diag(masses))
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        try:
            # fixed start vector: ARPACK is otherwise seeded from global state
            # and repeated calls would disagree inside degenerate eigenspaces
            v0 = np.random.default_rng(0).standard_normal(n)
            vals, vecs = eigsh(
                lap, k=k, M=sparse.diags(masses).tocsc(), sigma=-1e-6, which="LM", v0=v0
            )
        except ArpackNoConvergence as exc:
            got = len(exc.eigenvalues)
            raise ConvergenceFailure(
                f"eigensolver converged {got}/{k} pairs", residual=float(got)
            ) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]

    return vals, _fix_signs(vecs)


@dataclass
class AugmentInfo:
    eigen_index: int
    eigenvalue: float
    magnitude: float
    retries: int


def displace_along_normals(mesh: Mesh, field: np.ndarray, magnitude: float) -> Mesh:
    """Offset every vertex along its normal by magnitude * normalized field."""
    peak = float(np.abs(field).max())
    shape = field / peak if peak > 0 else field
    moved = mesh.vertices + magnitude * shape[:, None] * mesh.vertex_normals
    return mesh.with_vertices(moved)


def augment_mesh(
    mesh: Mesh,
    k: int = 16,
    amplitude: float = 0.05,
    seed: int = 0,
    max_retries: int = 5,
) -> tuple[Mesh, AugmentInfo]:
    """Random smooth variant of the mesh via one non-constant eigenfunction.

    ``amplitude`` caps the displacement as a fraction of the bounding
    radius. If the displacement flips any face, the magnitude is halved and
    retried a few times before giving up.
    """
    vals, vecs = eigenfunctions(mesh, k)
    avail = vecs.shape[1]
    if avail < 2:
        raise ValueError("need at least one non-constant eigenfunction")

    rng = np.random.default_rng(seed)
    idx = int(rng.integers(1, avail))
    cap = amplitude * mesh.bounding_sphere_radius()
    mag = float(rng.uniform(-cap, cap))

    base_normals = mesh.face_normals()
    for attempt in range(max_retries + 1):
        candidate = displace_along_normals(mesh, vecs[:, idx], mag)
        flipped = np.einsum("ij,ij->i", base_normals, candidate.face_normals()) <= 0
        if not flipped.any():
            return candidate, AugmentInfo(
                eigen_index=idx, eigenvalue=float(vals[idx]), magnitude=mag, retries=attempt
            )
        mag *= 0.5
    raise FlippedFaces(
        f"eigenfunction {idx} flips {int(flipped.sum())} faces even at magnitude {mag:.2g}"
    )
