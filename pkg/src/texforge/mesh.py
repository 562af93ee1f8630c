"""Triangle mesh loading, validation, normalization and fallback UV charting.

The interchange format is a plain-text indexed triangle format with
``v x y z``, ``vn x y z``, ``vt u v`` and ``f i/j/k ...`` records (the
common subset of Wavefront OBJ). Quads are fan-triangulated; other
polygons are rejected.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from texforge.errors import MissingUVWarning, NonTriangulated, ParseError, TooManyFaces

# Bounding-sphere radius every mesh is scaled to. Chosen so the object sits
# well inside the view frustum at the default camera radius of 2.
NORMALIZED_RADIUS = 0.6


@dataclass
class Mesh:
    """Indexed triangle mesh with per-vertex normals and per-corner UVs.

    ``uvs`` has shape (F, 3, 2) so seams (different UVs for the same vertex
    in different faces) are representable; ``None`` means the mesh arrived
    without UVs and fallback charting is required before texturing.
    """

    vertices: np.ndarray          # (V, 3) float64
    faces: np.ndarray             # (F, 3) int32
    vertex_normals: np.ndarray    # (V, 3) float64, unit length
    uvs: np.ndarray | None = None # (F, 3, 2) float64 in [0, 1]
    name: str = field(default="mesh")

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int32)
        self.vertex_normals = np.ascontiguousarray(self.vertex_normals, dtype=np.float64)
        if self.uvs is not None:
            self.uvs = np.ascontiguousarray(self.uvs, dtype=np.float64)
        if self.faces.size and self.faces.max() >= len(self.vertices):
            raise ParseError("face index exceeds vertex count")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ParseError("faces must be vertex-index triples")
        for a in (self.vertices, self.faces, self.vertex_normals):
            a.setflags(write=False)
        if self.uvs is not None:
            self.uvs.setflags(write=False)

    @property
    def has_uvs(self) -> bool:
        return self.uvs is not None

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def face_corners(self) -> np.ndarray:
        """Vertex positions per face corner, shape (F, 3, 3)."""
        return self.vertices[self.faces]

    def face_normals(self) -> np.ndarray:
        """Unit geometric normals from vertex winding, shape (F, 3)."""
        tri = self.face_corners()
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        lens = np.linalg.norm(n, axis=1)
        lens = np.where(lens > 0, lens, 1.0)
        return n / lens[:, None]

    def face_areas(self) -> np.ndarray:
        tri = self.face_corners()
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(n, axis=1)

    def surface_area(self) -> float:
        return float(self.face_areas().sum())

    def bounding_sphere_radius(self) -> float:
        return float(np.linalg.norm(self.vertices, axis=1).max()) if len(self.vertices) else 0.0

    def with_vertices(self, vertices: np.ndarray) -> "Mesh":
        """Copy of this mesh with replaced vertex positions and recomputed normals."""
        return Mesh(
            vertices=vertices,
            faces=self.faces.copy(),
            vertex_normals=compute_vertex_normals(vertices, self.faces),
            uvs=None if self.uvs is None else self.uvs.copy(),
            name=self.name,
        )

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs, shape (E, 2)."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.setflags(write=True)
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)


@dataclass
class TextureAtlas:
    """Square RGB image addressed by UV coordinates; the object being painted."""

    resolution: int
    pixels: np.ndarray  # (res, res, 3) float32 in [0, 1]

    @classmethod
    def filled(cls, resolution: int = 1024, color: float | tuple = 0.5) -> "TextureAtlas":
        px = np.empty((resolution, resolution, 3), dtype=np.float32)
        px[:] = np.asarray(color, dtype=np.float32)
        return cls(resolution=resolution, pixels=px)

    def copy(self) -> "TextureAtlas":
        return TextureAtlas(self.resolution, self.pixels.copy())

    def validate(self) -> None:
        if self.pixels.shape != (self.resolution, self.resolution, 3):
            raise ValueError("atlas must be square RGB at the declared resolution")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ValueError("atlas channel values must lie in [0, 1]")


def compute_vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted average of incident face normals, normalized per vertex."""
    tri = vertices[faces]
    fn = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])  # length = 2 * area
    normals = np.zeros_like(vertices, dtype=np.float64)
    for c in range(3):
        np.add.at(normals, faces[:, c], fn)
    lens = np.linalg.norm(normals, axis=1)
    lens = np.where(lens > 0, lens, 1.0)
    return normals / lens[:, None]


def normalize_vertices(vertices: np.ndarray, radius: float = NORMALIZED_RADIUS) -> np.ndarray:
    """Center on the bounding-box midpoint and scale the farthest vertex to ``radius``."""
    lo = vertices.min(axis=0)
    hi = vertices.max(axis=0)
    centered = vertices - 0.5 * (lo + hi)
    r = np.linalg.norm(centered, axis=1).max()
    if r == 0:
        return centered
    return centered * (radius / r)


def _parse_face_token(token: str, nv: int, nt: int, nn: int) -> tuple[int, int, int]:
    """Resolve one ``i``, ``i/j``, ``i//k`` or ``i/j/k`` corner reference to 0-based indices."""
    parts = token.split("/")
    if len(parts) > 3:
        raise ParseError(f"malformed face corner {token!r}")

    def resolve(p: str, count: int) -> int:
        if p == "":
            return -1
        i = int(p)
        i = i - 1 if i > 0 else count + i
        if i < 0 or i >= count:
            raise ParseError(f"face index {p} out of range")
        return i

    v = resolve(parts[0], nv)
    t = resolve(parts[1], nt) if len(parts) > 1 else -1
    n = resolve(parts[2], nn) if len(parts) > 2 else -1
    if v < 0:
        raise ParseError(f"face corner {token!r} lacks a vertex index")
    return v, t, n


def load_mesh(path: str | Path, normalize: bool = True, triangulate_quads: bool = True) -> Mesh:
    """Load, validate and normalize a mesh from the plain-text triangle format.

    Vertex normals are computed by area-weighted face-normal averaging when
    the file carries none. A :class:`MissingUVWarning` is emitted when the
    file has no UVs (fallback charting will be needed).
    """
    path = Path(path)
    positions: list[list[float]] = []
    texcoords: list[list[float]] = []
    normals: list[list[float]] = []
    corners: list[list[tuple[int, int, int]]] = []

    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            kind = tokens[0]
            try:
                if kind == "v":
                    positions.append([float(x) for x in tokens[1:4]])
                elif kind == "vt":
                    texcoords.append([float(x) for x in tokens[1:3]])
                elif kind == "vn":
                    normals.append([float(x) for x in tokens[1:4]])
                elif kind == "f":
                    refs = [
                        _parse_face_token(t, len(positions), len(texcoords), len(normals))
                        for t in tokens[1:]
                    ]
                    if len(refs) < 3:
                        raise ParseError("face with fewer than 3 corners")
                    if len(refs) > 4 or (len(refs) == 4 and not triangulate_quads):
                        raise NonTriangulated(
                            f"{path.name}:{lineno}: face with {len(refs)} corners"
                        )
                    corners.append(refs[:3])
                    if len(refs) == 4:
                        corners.append([refs[0], refs[2], refs[3]])
                # other record kinds (o, g, s, usemtl, ...) are ignored
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{path.name}:{lineno}: {raw.strip()!r}") from exc

    if not positions or not corners:
        raise ParseError(f"{path.name}: no triangle data found")

    verts = np.asarray(positions, dtype=np.float64)
    faces = np.asarray([[c[0] for c in tri] for tri in corners], dtype=np.int32)

    uvs = None
    if texcoords:
        vt = np.asarray(texcoords, dtype=np.float64)
        uv_idx = np.asarray([[c[1] for c in tri] for tri in corners], dtype=np.int64)
        if (uv_idx >= 0).all():
            uvs = vt[uv_idx]
            uvs = np.clip(uvs, 0.0, 1.0)
    if uvs is None:
        warnings.warn(
            f"{path.name}: no UV coordinates; fallback charting will be used",
            MissingUVWarning,
        )

    if normalize:
        verts = normalize_vertices(verts)

    if normals:
        vn_arr = np.asarray(normals, dtype=np.float64)
        n_idx = np.asarray([[c[2] for c in tri] for tri in corners], dtype=np.int64)
        if (n_idx >= 0).all():
            acc = np.zeros_like(verts)
            for c in range(3):
                np.add.at(acc, faces[:, c], vn_arr[n_idx[:, c]])
            lens = np.linalg.norm(acc, axis=1)
            ok = lens > 1e-12
            acc[ok] /= lens[ok, None]
            vnorm = np.where(ok[:, None], acc, compute_vertex_normals(verts, faces))
        else:
            vnorm = compute_vertex_normals(verts, faces)
    else:
        vnorm = compute_vertex_normals(verts, faces)

    return Mesh(vertices=verts, faces=faces, vertex_normals=vnorm, uvs=uvs, name=path.stem)


def save_mesh(mesh: Mesh, path: str | Path) -> None:
    """Write a mesh back out in the plain-text triangle format."""
    path = Path(path)
    lines = [f"# {mesh.name}"]
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for n in mesh.vertex_normals:
        lines.append(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}")
    if mesh.uvs is not None:
        for tri_uv in mesh.uvs:
            for uv in tri_uv:
                lines.append(f"vt {uv[0]:.9g} {uv[1]:.9g}")
        for fi, tri in enumerate(mesh.faces):
            t = 3 * fi
            lines.append(
                f"f {tri[0]+1}/{t+1}/{tri[0]+1} {tri[1]+1}/{t+2}/{tri[1]+1} "
                f"{tri[2]+1}/{t+3}/{tri[2]+1}"
            )
    else:
        for tri in mesh.faces:
            lines.append(f"f {tri[0]+1}//{tri[0]+1} {tri[1]+1}//{tri[1]+1} {tri[2]+1}//{tri[2]+1}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def naive_uv_chart(mesh: Mesh, atlas_resolution: int = 1024, gutter_texels: int = 1) -> Mesh:
    """Give each triangle its own disjoint chart cell in a grid layout.

    Each face is embedded isometrically into 2D and scaled by one global
    factor, so chart area stays proportional to 3D face area. Cells are
    inset by ``gutter_texels`` on every side, leaving at least two texels
    between neighboring charts.
    """
    if mesh.has_uvs:
        raise ValueError("mesh already has UVs; fallback charting is only for meshes without them")

    nf = mesh.num_faces
    cols = int(math.ceil(math.sqrt(nf)))
    rows = int(math.ceil(nf / cols))
    cell_px = atlas_resolution / max(cols, rows)
    if cell_px < 4:
        raise TooManyFaces(
            f"{nf} faces leaves {cell_px:.1f} texels per chart cell at {atlas_resolution}^2"
        )

    cell_u = 1.0 / cols
    cell_v = 1.0 / rows
    inset_u = gutter_texels / atlas_resolution
    inset_v = gutter_texels / atlas_resolution
    inner_u = cell_u - 2 * inset_u
    inner_v = cell_v - 2 * inset_v

    tri = mesh.face_corners()
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    l1 = np.linalg.norm(e1, axis=1)
    safe_l1 = np.where(l1 > 0, l1, 1.0)
    x2 = np.einsum("ij,ij->i", e2, e1) / safe_l1
    y2 = np.linalg.norm(np.cross(e1, e2), axis=1) / safe_l1

    # local 2D triangle per face: (0,0), (l1,0), (x2,y2)
    px = np.stack([np.zeros(nf), l1, x2], axis=1)
    py = np.stack([np.zeros(nf), np.zeros(nf), y2], axis=1)
    minx, maxx = px.min(axis=1), px.max(axis=1)
    width = maxx - minx
    height = py.max(axis=1)

    wh = np.maximum(width, 1e-30)
    hh = np.maximum(height, 1e-30)
    valid = (width > 0) & (height > 0)
    if not valid.any():
        raise ValueError("all faces degenerate; cannot chart")
    scale = float(np.minimum(inner_u / wh, inner_v / hh)[valid].min())

    uvs = np.zeros((nf, 3, 2), dtype=np.float64)
    for f in range(nf):
        r, c = divmod(f, cols)
        sx = (px[f] - minx[f]) * scale
        sy = py[f] * scale
        # center the scaled triangle in its inner cell
        off_u = c * cell_u + inset_u + 0.5 * (inner_u - width[f] * scale)
        off_v = r * cell_v + inset_v + 0.5 * (inner_v - height[f] * scale)
        uvs[f, :, 0] = off_u + sx
        uvs[f, :, 1] = off_v + sy

    uvs = np.clip(uvs, 0.0, 1.0)
    return Mesh(
        vertices=mesh.vertices.copy(),
        faces=mesh.faces.copy(),
        vertex_normals=mesh.vertex_normals.copy(),
        uvs=uvs,
        name=mesh.name,
    )


def ensure_uvs(mesh: Mesh, atlas_resolution: int = 1024) -> Mesh:
    """Return the mesh unchanged if it has UVs, else apply fallback charting."""
    return mesh if mesh.has_uvs else naive_uv_chart(mesh, atlas_resolution)
