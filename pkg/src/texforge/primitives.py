"""Procedural test meshes.

All generators return meshes already centered at the origin with outward
winding (counter-clockwise seen from outside). Sizes are pre-normalization;
pass the result through :func:`texforge.mesh.normalize_vertices` or rebuild
via ``Mesh.with_vertices`` if a specific bounding radius is needed.
"""

from __future__ import annotations

import numpy as np

from texforge.mesh import Mesh, compute_vertex_normals, naive_uv_chart, normalize_vertices


def _build(verts, faces, name, uvs=None, normalize=True) -> Mesh:
    verts = np.asarray(verts, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int32)
    if normalize:
        verts = normalize_vertices(verts)
    return Mesh(
        vertices=verts,
        faces=faces,
        vertex_normals=compute_vertex_normals(verts, faces),
        uvs=uvs,
        name=name,
    )


def quad(normalize: bool = False) -> Mesh:
    """Two triangles spanning [-0.5, 0.5]^2 in the xy plane, facing +z."""
    verts = [(-0.5, -0.5, 0.0), (0.5, -0.5, 0.0), (0.5, 0.5, 0.0), (-0.5, 0.5, 0.0)]
    faces = [(0, 1, 2), (0, 2, 3)]
    uvs = np.array(
        [[(0, 0), (1, 0), (1, 1)], [(0, 0), (1, 1), (0, 1)]], dtype=np.float64
    )
    return _build(verts, faces, "quad", uvs=uvs, normalize=normalize)


def tetrahedron(normalize: bool = True) -> Mesh:
    """Regular tetrahedron with vertices on alternating cube corners."""
    verts = np.array(
        [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)], dtype=np.float64
    )
    faces = [(0, 1, 2), (0, 3, 1), (0, 2, 3), (1, 3, 2)]
    return _build(verts, faces, "tetrahedron", normalize=normalize)


def cube(charted: bool = False, atlas_resolution: int = 1024) -> Mesh:
    """Axis-aligned unit cube, 12 triangles. ``charted`` adds fallback UVs."""
    c = 0.5
    verts = np.array(
        [
            (-c, -c, -c), (c, -c, -c), (c, c, -c), (-c, c, -c),
            (-c, -c, c), (c, -c, c), (c, c, c), (-c, c, c),
        ],
        dtype=np.float64,
    )
    quads = [
        (4, 5, 6, 7),  # +z
        (1, 0, 3, 2),  # -z
        (5, 1, 2, 6),  # +x
        (0, 4, 7, 3),  # -x
        (7, 6, 2, 3),  # +y
        (0, 1, 5, 4),  # -y
    ]
    faces = []
    for a, b, cc, d in quads:
        faces.append((a, b, cc))
        faces.append((a, cc, d))
    m = _build(verts, faces, "cube")
    return naive_uv_chart(m, atlas_resolution) if charted else m


def icosahedron(normalize: bool = True) -> Mesh:
    """Regular icosahedron, 20 faces."""
    phi = (1 + 5**0.5) / 2
    verts = np.array(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=np.float64,
    )
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    return _build(verts, faces, "icosahedron", normalize=normalize)


def icosphere(subdivisions: int = 2, radius: float = 0.6) -> Mesh:
    """Icosahedron subdivided ``subdivisions`` times, vertices on a sphere."""
    base = icosahedron(normalize=False)
    verts = [tuple(v) for v in base.vertices]
    faces = [tuple(f) for f in base.faces]

    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                va = np.asarray(verts[a])
                vb = np.asarray(verts[b])
                verts.append(tuple(0.5 * (va + vb)))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = new_faces

    v = np.asarray(verts, dtype=np.float64)
    v = v / np.linalg.norm(v, axis=1)[:, None] * radius
    f = np.asarray(faces, dtype=np.int32)
    # exact sphere normals instead of the area-weighted estimate
    m = Mesh(
        vertices=v,
        faces=f,
        vertex_normals=v / radius,
        uvs=None,
        name=f"icosphere{subdivisions}",
    )
    return m


def uv_sphere(n_lat: int = 16, n_lon: int = 32, radius: float = 0.6) -> Mesh:
    """Latitude/longitude sphere with pole fans; ~2*n_lat*n_lon triangles."""
    verts = [(0.0, radius, 0.0)]
    for i in range(1, n_lat):
        theta = np.pi * i / n_lat
        for j in range(n_lon):
            phi = 2 * np.pi * j / n_lon
            verts.append(
                (
                    radius * np.sin(theta) * np.sin(phi),
                    radius * np.cos(theta),
                    radius * np.sin(theta) * np.cos(phi),
                )
            )
    verts.append((0.0, -radius, 0.0))
    south = len(verts) - 1

    def ring(i: int, j: int) -> int:
        return 1 + (i - 1) * n_lon + (j % n_lon)

    faces = []
    for j in range(n_lon):
        faces.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append((a, c, d))
            faces.append((a, d, b))
    for j in range(n_lon):
        faces.append((south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)))

    v = np.asarray(verts, dtype=np.float64)
    return Mesh(
        vertices=v,
        faces=np.asarray(faces, dtype=np.int32),
        vertex_normals=v / radius,
        uvs=None,
        name="uv_sphere",
    )
