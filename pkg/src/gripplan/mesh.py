"""Triangle-mesh workpieces: loading, mass properties, raster seeding.

All coordinates are millimeters. A mesh is immutable after construction;
derived structures (adjacency, canonical frame, refinement lattices) are
cached lazily and never change the public fields.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateMesh, EmptyRaster, ParseError

logger = logging.getLogger(__name__)

WELD_TOLERANCE = 1e-5      # mm; vertices closer than this merge on load
MIN_TRIANGLE_AREA = 1e-9   # mm^2; smaller faces are dropped as degenerate
_EPS = 1e-9


@dataclass
class SeedPoint:
    """A candidate examination point on the mesh surface."""

    position: np.ndarray   # (3,) point on the owning triangle
    normal: np.ndarray     # (3,) unit normal of the owning face
    triangle_id: int


@dataclass(eq=False)
class TriangleMesh:
    """Indexed triangle surface with per-face normals and mass properties."""

    vertices: np.ndarray       # (n, 3) float64
    triangles: np.ndarray      # (m, 3) int32 vertex indices
    face_normals: np.ndarray   # (m, 3) unit vectors
    name: str = "mesh"
    watertight: bool = False
    roughness: float | None = None

    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_arrays(cls, vertices, triangles, name="mesh", *,
                    unit_scale=1.0, roughness=None) -> "TriangleMesh":
        """Weld, validate, and orient raw vertex/triangle arrays.

        Raises ParseError for out-of-range indices and DegenerateMesh when
        no valid triangle survives.
        """
        vertices = np.asarray(vertices, dtype=np.float64) * float(unit_scale)
        triangles = np.asarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ParseError("vertex array must be (n, 3)")
        if triangles.size == 0:
            raise DegenerateMesh("mesh contains no triangles")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise ParseError("triangle array must be (m, 3)")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise ParseError(
                f"triangle references vertex index {int(triangles.max())} "
                f"of {len(vertices)}")

        # Weld: snap coordinates to the weld grid and merge identical cells.
        keys = np.round(vertices / WELD_TOLERANCE).astype(np.int64)
        _, first, inverse = np.unique(
            keys, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.reshape(-1)
        vertices = vertices[first]
        order = np.argsort(first, kind="stable")
        remap = np.empty(len(first), dtype=np.int64)
        remap[order] = np.arange(len(first))
        vertices = vertices[order]
        triangles = remap[inverse[triangles]]

        # Drop triangles that collapsed during welding or are too small.
        distinct = (
            (triangles[:, 0] != triangles[:, 1])
            & (triangles[:, 1] != triangles[:, 2])
            & (triangles[:, 0] != triangles[:, 2]))
        triangles = triangles[distinct]
        if len(triangles):
            v0 = vertices[triangles[:, 0]]
            cross = np.cross(vertices[triangles[:, 1]] - v0,
                             vertices[triangles[:, 2]] - v0)
            areas = 0.5 * np.linalg.norm(cross, axis=1)
            keep = areas > MIN_TRIANGLE_AREA
            triangles = triangles[keep]
            cross = cross[keep]
        if len(triangles) == 0:
            raise DegenerateMesh("no valid triangles after welding")

        normals = cross / np.linalg.norm(cross, axis=1, keepdims=True)
        mesh = cls(vertices=vertices, triangles=triangles.astype(np.int32),
                   face_normals=normals, name=name, roughness=roughness)
        mesh.watertight = mesh._check_watertight()
        if not mesh.watertight:
            logger.warning("mesh %r is not watertight; solid mass properties "
                           "fall back to surface integrals", name)
        return mesh

    # -- topology ----------------------------------------------------------

    def _check_watertight(self) -> bool:
        """Closed 2-manifold test: every directed edge has exactly one twin."""
        tri = self.triangles
        directed = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        d_keys = directed[:, 0].astype(np.int64) * len(self.vertices) + directed[:, 1]
        if len(np.unique(d_keys)) != len(d_keys):
            return False
        lo = directed.min(axis=1).astype(np.int64)
        hi = directed.max(axis=1).astype(np.int64)
        _, counts = np.unique(lo * len(self.vertices) + hi, return_counts=True)
        return bool(np.all(counts == 2))

    def edge_adjacency(self):
        """(neighbors, boundary_edges): per-triangle neighbor ids and the
        vertex-index pairs of edges owned by a single face."""
        if "adjacency" in self._cache:
            return self._cache["adjacency"]
        edge_faces: dict[tuple[int, int], list[int]] = {}
        for t, (a, b, c) in enumerate(np.asarray(self.triangles)):
            for u, v in ((a, b), (b, c), (c, a)):
                key = (int(min(u, v)), int(max(u, v)))
                edge_faces.setdefault(key, []).append(t)
        neighbors = [[] for _ in range(len(self.triangles))]
        boundary = []
        for key, faces in edge_faces.items():
            if len(faces) == 1:
                boundary.append(key)
            else:
                for t in faces:
                    for other in faces:
                        if other != t:
                            neighbors[t].append(other)
        result = (neighbors, boundary)
        self._cache["adjacency"] = result
        return result

    def triangle_vertices(self, triangle_id: int) -> np.ndarray:
        return self.vertices[self.triangles[triangle_id]]

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    # -- mass properties ----------------------------------------------------

    def _tet_volumes(self):
        v0 = self.vertices[self.triangles[:, 0]]
        v1 = self.vertices[self.triangles[:, 1]]
        v2 = self.vertices[self.triangles[:, 2]]
        return np.einsum("ij,ij->i", v0, np.cross(v1, v2)) / 6.0, (v0, v1, v2)

    def volume(self) -> float:
        """Signed enclosed volume; meaningful only for watertight meshes."""
        vols, _ = self._tet_volumes()
        return float(vols.sum())

    def surface_area(self) -> float:
        _, (v0, v1, v2) = self._tet_volumes()
        return float(0.5 * np.linalg.norm(
            np.cross(v1 - v0, v2 - v0), axis=1).sum())


def center_of_mass(mesh: TriangleMesh) -> np.ndarray:
    """Uniform-density solid centroid (divergence-theorem tetrahedron sum).

    Non-watertight meshes fall back to the area-weighted surface centroid.
    """
    if mesh.watertight:
        vols, (v0, v1, v2) = mesh._tet_volumes()
        total = vols.sum()
        if abs(total) > 1e-9:
            moments = (vols[:, None] * (v0 + v1 + v2)) / 4.0
            return moments.sum(axis=0) / total
        logger.warning("mesh %r encloses ~zero volume; using surface centroid",
                       mesh.name)
    _, (v0, v1, v2) = mesh._tet_volumes()
    areas = 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)
    centroids = (v0 + v1 + v2) / 3.0
    return (areas[:, None] * centroids).sum(axis=0) / areas.sum()


def _second_moment(mesh: TriangleMesh, com: np.ndarray) -> np.ndarray:
    """Covariance of the solid (or surface for open meshes) about ``com``."""
    v0 = mesh.vertices[mesh.triangles[:, 0]] - com
    v1 = mesh.vertices[mesh.triangles[:, 1]] - com
    v2 = mesh.vertices[mesh.triangles[:, 2]] - com
    if mesh.watertight:
        vols = np.einsum("ij,ij->i", v0, np.cross(v1, v2)) / 6.0
        s = v0 + v1 + v2
        sq = (np.einsum("ni,nj->nij", v0, v0)
              + np.einsum("ni,nj->nij", v1, v1)
              + np.einsum("ni,nj->nij", v2, v2)
              + np.einsum("ni,nj->nij", s, s))
        cov = (vols[:, None, None] * sq).sum(axis=0) / 20.0
        if abs(vols.sum()) > 1e-9:
            return cov
    areas = 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)
    s = v0 + v1 + v2
    sq = (np.einsum("ni,nj->nij", v0, v0)
          + np.einsum("ni,nj->nij", v1, v1)
          + np.einsum("ni,nj->nij", v2, v2)
          + np.einsum("ni,nj->nij", s, s))
    return (areas[:, None, None] * sq).sum(axis=0) / 12.0


def _anchor_order(mesh: TriangleMesh, com: np.ndarray) -> np.ndarray:
    """Vertex indices sorted by pose-invariant salience, most salient last.

    Keys are rigid-motion invariants (distance to the centroid, incidence
    counts, incident-face geometry), quantized so float noise from a rigid
    transform cannot reorder them.
    """
    v = mesh.vertices
    dist = np.linalg.norm(v - com, axis=1)
    valence = np.zeros(len(v), dtype=np.int64)
    area_sum = np.zeros(len(v))
    centroid_dist_sum = np.zeros(len(v))
    t0 = v[mesh.triangles[:, 0]]
    t1 = v[mesh.triangles[:, 1]]
    t2 = v[mesh.triangles[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(t1 - t0, t2 - t0), axis=1)
    cdist = np.linalg.norm((t0 + t1 + t2) / 3.0 - com, axis=1)
    for col in range(3):
        idx = mesh.triangles[:, col]
        np.add.at(valence, idx, 1)
        np.add.at(area_sum, idx, areas)
        np.add.at(centroid_dist_sum, idx, cdist)
    q = lambda x: np.round(x * 1e6).astype(np.int64)
    return np.lexsort((q(centroid_dist_sum), q(area_sum), valence, q(dist)))


def canonical_frame(mesh: TriangleMesh):
    """Pose-invariant frame (origin, rotation with columns x|y|z).

    Built from the centroid, the most isolated principal inertia axis, and
    a salience-ranked anchor vertex, so that rigidly transforming the mesh
    transforms the frame identically. Ties on a fully symmetric mesh are
    broken by vertex order (deterministic per file, not pose-invariant).
    """
    if "frame" in mesh._cache:
        return mesh._cache["frame"]
    com = center_of_mass(mesh)
    cov = _second_moment(mesh, com)
    inertia = np.trace(cov) * np.eye(3) - cov
    evals, evecs = np.linalg.eigh(inertia)
    scale = max(abs(evals).max(), 1.0)
    gaps = np.array([evals[1] - evals[0],
                     min(evals[1] - evals[0], evals[2] - evals[1]),
                     evals[2] - evals[1]])
    order = _anchor_order(mesh, com)
    ranked = mesh.vertices[order[::-1]]

    if gaps.max() > 1e-9 * scale:
        z = evecs[:, int(np.argmax(gaps))].copy()
    else:
        z = None
    extent = float(np.linalg.norm(mesh.vertices.max(axis=0)
                                  - mesh.vertices.min(axis=0))) or 1.0
    if z is None:
        for v in ranked:
            d = v - com
            if np.linalg.norm(d) > 1e-9 * extent:
                z = d / np.linalg.norm(d)
                break
        else:
            z = np.array([0.0, 0.0, 1.0])
    else:
        for v in ranked:
            s = float(np.dot(v - com, z))
            if abs(s) > 1e-9 * extent:
                if s < 0:
                    z = -z
                break

    x = None
    for v in ranked:
        r = (v - com) - np.dot(v - com, z) * z
        if np.linalg.norm(r) > 1e-9 * extent:
            x = r / np.linalg.norm(r)
            break
    if x is None:
        x = np.array([1.0, 0.0, 0.0])
        x = x - np.dot(x, z) * z
        if np.linalg.norm(x) < 1e-12:
            x = np.array([0.0, 1.0, 0.0]) - z[1] * z
        x /= np.linalg.norm(x)
    y = np.cross(z, x)
    rot = np.column_stack([x, y, z])
    mesh._cache["frame"] = (com, rot)
    return com, rot


# -- raster ----------------------------------------------------------------


def raster_sample(mesh: TriangleMesh, spacing: float) -> list[SeedPoint]:
    """Seed the surface by cutting it with a 3D grid of pitch ``spacing``.

    The grid is aligned with the mesh's canonical frame and anchored at the
    canonical bounding box, so identical geometry yields identical seeds in
    any pose. Each grid plane that properly crosses a triangle contributes
    the crossing segment, resampled at ``spacing`` along its interior.
    Seeds are ordered by (triangle_id, axis, plane, step) and deduplicated.

    Raises EmptyRaster when no seed results (spacing exceeds the extent).
    """
    if spacing <= 0:
        raise ValueError("raster spacing must be positive")
    origin, rot = canonical_frame(mesh)
    local = (mesh.vertices - origin) @ rot  # rows: canonical coordinates
    lo = local.min(axis=0)
    hi = local.max(axis=0)

    rows = []  # (triangle_id, axis, plane_index, step, local point)
    tris = np.asarray(mesh.triangles)
    for tid in range(len(tris)):
        corners = local[tris[tid]]
        for axis in range(3):
            coords = corners[:, axis]
            cmin, cmax = coords.min(), coords.max()
            j_first = max(1, int(math.ceil((cmin - lo[axis]) / spacing - 1e-12)))
            j_last = int(math.floor((cmax - lo[axis]) / spacing + 1e-12))
            for j in range(j_first, j_last + 1):
                pos = lo[axis] + j * spacing
                if pos >= hi[axis] - _EPS:
                    continue
                d = coords - pos
                if not ((d > _EPS).any() and (d < -_EPS).any()):
                    continue  # tangent or coplanar: not a proper crossing
                seg = _plane_triangle_segment(corners, d)
                if seg is None:
                    continue
                p0, p1 = seg
                # Quantized comparison: the plane-axis coordinate is equal on
                # both ends, so raw float ordering would be noise-driven.
                if _qkey(p1) < _qkey(p0):
                    p0, p1 = p1, p0
                length = float(np.linalg.norm(p1 - p0))
                step = 1
                while step * spacing < length - _EPS:
                    t = step * spacing / length
                    rows.append((tid, axis, j, step, p0 + t * (p1 - p0)))
                    step += 1

    if not rows:
        raise EmptyRaster(
            f"spacing {spacing} mm produced no seeds on {mesh.name!r}")
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    seeds = []
    seen = set()
    for tid, _, _, _, p in rows:
        key = tuple(np.round(p / 1e-6).astype(np.int64))
        if key in seen:
            continue
        seen.add(key)
        seeds.append(SeedPoint(position=origin + rot @ p,
                               normal=mesh.face_normals[tid].copy(),
                               triangle_id=tid))
    return seeds


def _qkey(p, grid=1e-6):
    return tuple(int(round(c / grid)) for c in p)


def _plane_triangle_segment(corners, d):
    """Intersection segment of a triangle with the plane given by signed
    distances ``d`` of its corners. Assumes a proper crossing."""
    pts = []
    for i in range(3):
        if abs(d[i]) <= _EPS:
            pts.append(corners[i])
    for i, j in ((0, 1), (1, 2), (2, 0)):
        if d[i] > _EPS and d[j] < -_EPS or d[i] < -_EPS and d[j] > _EPS:
            t = d[i] / (d[i] - d[j])
            pts.append(corners[i] + t * (corners[j] - corners[i]))
    if len(pts) < 2:
        return None
    pts = np.asarray(pts)
    if len(pts) > 2:
        # Collinear by construction: keep the extreme pair.
        direction = pts[-1] - pts[0]
        proj = pts @ direction
        pts = pts[[int(np.argmin(proj)), int(np.argmax(proj))]]
    if np.linalg.norm(pts[1] - pts[0]) <= _EPS:
        return None
    return pts[0], pts[1]


def normal_prefilter(seeds: list[SeedPoint], approach_axis,
                     max_tilt: float) -> list[SeedPoint]:
    """Keep seeds whose normal is within ``max_tilt`` degrees of the
    approach axis; order is preserved."""
    axis = np.asarray(approach_axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError("approach_axis must be unit length")
    if not 0.0 <= max_tilt <= 180.0:
        raise ValueError("max_tilt must be in [0, 180] degrees")
    threshold = math.cos(math.radians(max_tilt))
    return [s for s in seeds if float(np.dot(s.normal, axis)) >= threshold]


# -- file I/O ----------------------------------------------------------------

FORMATS = ("auto", "stl-binary", "stl-ascii", "obj")


def load_mesh(path, fmt: str = "auto", *, unit_scale: float = 1.0,
              name: str | None = None, roughness: float | None = None
              ) -> TriangleMesh:
    """Load an stl (binary or ascii) or obj file into a TriangleMesh.

    ``fmt`` may be "auto" (extension plus content sniffing), "stl-binary",
    "stl-ascii", or "obj". Coordinates are multiplied by ``unit_scale``.
    """
    path = Path(path)
    if fmt not in FORMATS:
        raise ValueError(f"unknown mesh format {fmt!r}; expected {FORMATS}")
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if fmt == "auto":
        fmt = _sniff_format(path, data)
    if fmt == "obj":
        vertices, triangles = _parse_obj(data, path)
    elif fmt == "stl-ascii":
        vertices, triangles = _parse_stl_ascii(data, path)
    else:
        vertices, triangles = _parse_stl_binary(data, path)
    return TriangleMesh.from_arrays(
        vertices, triangles, name=name or path.stem,
        unit_scale=unit_scale, roughness=roughness)


def _sniff_format(path: Path, data: bytes) -> str:
    if path.suffix.lower() == ".obj":
        return "obj"
    head = data[:512].lstrip()
    if head.startswith(b"solid") and b"facet" in data[:4096]:
        return "stl-ascii"
    return "stl-binary"


def _parse_stl_binary(data: bytes, path: Path):
    if len(data) < 84:
        raise ParseError(f"{path}: truncated binary stl")
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + 50 * count
    if len(data) < expected:
        raise ParseError(f"{path}: binary stl declares {count} facets but "
                         f"holds {len(data)} bytes (< {expected})")
    raw = np.frombuffer(data, dtype=np.uint8, count=50 * count, offset=84)
    floats = raw.reshape(count, 50)[:, :48].copy().view("<f4").reshape(count, 12)
    tris = floats[:, 3:12].astype(np.float64).reshape(count * 3, 3)
    triangles = np.arange(count * 3, dtype=np.int64).reshape(count, 3)
    return tris, triangles


def _parse_stl_ascii(data: bytes, path: Path):
    vertices = []
    try:
        text = data.decode("utf-8", errors="replace")
    except Exception as exc:  # pragma: no cover - decode(replace) won't raise
        raise ParseError(f"{path}: undecodable ascii stl") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "vertex":
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: malformed vertex line")
            try:
                vertices.append([float(parts[1]), float(parts[2]),
                                 float(parts[3])])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad coordinate") from exc
    if len(vertices) == 0 or len(vertices) % 3 != 0:
        raise ParseError(f"{path}: ascii stl vertex count {len(vertices)} "
                         "is not a multiple of 3")
    vertices = np.asarray(vertices)
    triangles = np.arange(len(vertices), dtype=np.int64).reshape(-1, 3)
    return vertices, triangles


def _parse_obj(data: bytes, path: Path):
    vertices = []
    faces = []
    text = data.decode("utf-8", errors="replace")
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise ParseError(f"{path}:{lineno}: malformed vertex")
            try:
                vertices.append([float(parts[1]), float(parts[2]),
                                 float(parts[3])])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad coordinate") from exc
        elif parts[0] == "f":
            idx = []
            for token in parts[1:]:
                ref = token.split("/")[0]
                try:
                    i = int(ref)
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: bad face index "
                                     f"{token!r}") from exc
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            if len(idx) < 3:
                raise ParseError(f"{path}:{lineno}: face with <3 vertices")
            for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not vertices:
        raise ParseError(f"{path}: obj file contains no vertices")
    if not faces:
        raise DegenerateMesh(f"{path}: obj file contains no faces")
    vertices = np.asarray(vertices)
    faces = np.asarray(faces, dtype=np.int64)
    if faces.min() < 0 or faces.max() >= len(vertices):
        raise ParseError(
            f"{path}: face references vertex index {int(faces.max()) + 1} "
            f"of {len(vertices)}")
    return vertices, faces


def save_stl_binary(mesh: TriangleMesh, path) -> None:
    tris = mesh.vertices[mesh.triangles]
    count = len(tris)
    buf = bytearray(b"\x00" * 80)
    buf += struct.pack("<I", count)
    record = np.zeros((count, 12), dtype="<f4")
    record[:, 0:3] = mesh.face_normals
    record[:, 3:12] = tris.reshape(count, 9)
    body = np.zeros((count, 50), dtype=np.uint8)
    body[:, :48] = record.view(np.uint8).reshape(count, 48)
    buf += body.tobytes()
    Path(path).write_bytes(bytes(buf))


def save_stl_ascii(mesh: TriangleMesh, path) -> None:
    lines = [f"solid {mesh.name}"]
    for tid, tri in enumerate(mesh.triangles):
        n = mesh.face_normals[tid]
        lines.append(f"  facet normal {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}")
        lines.append("    outer loop")
        for vid in tri:
            v = mesh.vertices[vid]
            lines.append(f"      vertex {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {mesh.name}")
    Path(path).write_text("\n".join(lines) + "\n")


def save_obj(mesh: TriangleMesh, path) -> None:
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for tri in mesh.triangles:
        lines.append(f"f {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n")
