"""Procedural test-part generators.

Small watertight (or deliberately open) meshes used by the test suite and
for demo runs. Everything is millimeters, z up.
"""

from __future__ import annotations

import math

import numpy as np

from .mesh import TriangleMesh

# Box faces are split so that corner 0 carries the most incident triangles;
# that gives the canonical-frame anchor a unique, pose-invariant winner.
_BOX_TRIANGLES = [
    (0, 6, 2), (0, 4, 6),        # x = min
    (1, 3, 7), (1, 7, 5),        # x = max
    (0, 1, 5), (0, 5, 4),        # y = min
    (2, 7, 3), (2, 6, 7),        # y = max
    (0, 3, 1), (0, 2, 3),        # z = min
    (4, 5, 6), (5, 7, 6),        # z = max
]


def make_box(size=(10.0, 10.0, 10.0), center=(0.0, 0.0, 0.0),
             name="box") -> TriangleMesh:
    """Axis-aligned watertight box, 12 triangles."""
    sx, sy, sz = (s / 2.0 for s in size)
    cx, cy, cz = center
    corners = np.array([
        [cx - sx, cy - sy, cz - sz],
        [cx + sx, cy - sy, cz - sz],
        [cx - sx, cy + sy, cz - sz],
        [cx + sx, cy + sy, cz - sz],
        [cx - sx, cy - sy, cz + sz],
        [cx + sx, cy - sy, cz + sz],
        [cx - sx, cy + sy, cz + sz],
        [cx + sx, cy + sy, cz + sz],
    ])
    return TriangleMesh.from_arrays(corners, _BOX_TRIANGLES, name=name)


def make_plate(side=100.0, thickness=5.0, name="plate") -> TriangleMesh:
    """The standard square test plate, centered at the origin."""
    return make_box((side, side, thickness), name=name)


def make_uv_sphere(radius=10.0, rings=24, sectors=48, polar_max_deg=180.0,
                   center=(0.0, 0.0, 0.0), name="sphere") -> TriangleMesh:
    """Latitude/longitude tessellated sphere (or cap when polar_max < 180).

    A cap is an open mesh bounded by its last ring; the full sphere is
    closed and watertight.
    """
    cx, cy, cz = center
    polar_max = math.radians(polar_max_deg)
    full = polar_max_deg >= 180.0 - 1e-9
    vertices = [[cx, cy, cz + radius]]
    ring_rows = []
    for i in range(1, rings + 1):
        theta = polar_max * i / rings
        if full and i == rings:
            break
        row = []
        for j in range(sectors):
            phi = 2.0 * math.pi * j / sectors
            row.append(len(vertices))
            vertices.append([
                cx + radius * math.sin(theta) * math.cos(phi),
                cy + radius * math.sin(theta) * math.sin(phi),
                cz + radius * math.cos(theta)])
        ring_rows.append(row)
    triangles = []
    first = ring_rows[0]
    for j in range(sectors):
        triangles.append((0, first[j], first[(j + 1) % sectors]))
    for a, b in zip(ring_rows[:-1], ring_rows[1:]):
        for j in range(sectors):
            k = (j + 1) % sectors
            triangles.append((a[j], b[j], b[k]))
            triangles.append((a[j], b[k], a[k]))
    if full:
        south = len(vertices)
        vertices.append([cx, cy, cz - radius])
        last = ring_rows[-1]
        for j in range(sectors):
            triangles.append((south, last[(j + 1) % sectors], last[j]))
    return TriangleMesh.from_arrays(vertices, triangles, name=name)


def make_prism(polygon_2d, triangles_2d, height, name="prism") -> TriangleMesh:
    """Extrude a CCW 2D polygon (with a caller-supplied cap triangulation)
    along +z into a watertight prism. z spans [-height/2, +height/2]."""
    poly = np.asarray(polygon_2d, dtype=np.float64)
    n = len(poly)
    bottom = np.column_stack([poly, np.full(n, -height / 2.0)])
    top = np.column_stack([poly, np.full(n, height / 2.0)])
    vertices = np.vstack([bottom, top])
    triangles = []
    for a, b, c in triangles_2d:
        triangles.append((a, c, b))              # bottom cap faces -z
        triangles.append((a + n, b + n, c + n))  # top cap faces +z

    # Side walls follow the boundary edges of the cap triangulation.
    edge_count: dict[tuple[int, int], int] = {}
    directed = set()
    for a, b, c in triangles_2d:
        for u, v in ((a, b), (b, c), (c, a)):
            edge_count[(min(u, v), max(u, v))] = (
                edge_count.get((min(u, v), max(u, v)), 0) + 1)
            directed.add((u, v))
    for (u, v), count in sorted(edge_count.items()):
        if count != 1:
            continue
        a, b = (u, v) if (u, v) in directed else (v, u)
        triangles.append((a, b, b + n))
        triangles.append((a, b + n, a + n))
    return TriangleMesh.from_arrays(vertices, triangles, name=name)


def make_l_solid(name="l-solid") -> TriangleMesh:
    """An L-shaped solid: a 40x20 slab plus a 20x20 tab, 10 mm tall."""
    polygon = [(0, 0), (40, 0), (40, 20), (20, 20), (20, 40), (0, 40)]
    caps = [(0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 5)]
    return make_prism(polygon, caps, height=10.0, name=name)


def make_ridged_plate(side=100.0, thickness=5.0, ridge_width=20.0,
                      ridge_height=20.0, name="ridged-plate") -> TriangleMesh:
    """The test plate with a full-length rectangular ridge along one edge.

    Cross-section (in x/z), extruded along y; the ridge occupies
    x in [-side/2, -side/2 + ridge_width] on the top face.
    """
    half = side / 2.0
    t2 = thickness / 2.0
    rx = -half + ridge_width
    profile = [
        (-half, -t2), (half, -t2), (half, t2), (rx, t2),
        (rx, t2 + ridge_height), (-half, t2 + ridge_height),
    ]
    caps = [(0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 5)]
    mesh = make_prism(profile, caps, height=side, name=name)
    # Profile was drawn in the (x, z) plane; rotate the extrusion axis onto
    # y (proper rotation, so the winding stays outward).
    vertices = mesh.vertices[:, [0, 2, 1]].copy()
    vertices[:, 1] *= -1.0
    return TriangleMesh.from_arrays(vertices, mesh.triangles, name=name)


def make_dihedral(angle_deg=90.0, width=60.0, depth=60.0, seam_segments=8,
                  name="dihedral") -> TriangleMesh:
    """Two rectangular sheets joined along a shared seam at ``angle_deg``.

    The first sheet lies in the z=0 plane with the seam along the y axis at
    x=0; the second rises from the seam. Open mesh; the sheets share seam
    vertices so surface walks cross the crease.
    """
    tilt = math.radians(180.0 - angle_deg)
    up = np.array([math.cos(tilt), 0.0, math.sin(tilt)])
    rows = seam_segments + 1
    ys = np.linspace(-depth / 2.0, depth / 2.0, rows)
    base = np.array([[x, y, 0.0] for x in (-width, 0.0) for y in ys])
    wing = np.array([up * width + [0, y, 0] for y in ys])
    vertices = np.vstack([base, wing])
    triangles = []
    for i in range(seam_segments):
        a, b = i, i + 1                       # outer row of flat sheet
        c, d = rows + i, rows + i + 1         # seam row
        triangles += [(a, c, d), (a, d, b)]
        e, f = 2 * rows + i, 2 * rows + i + 1  # raised sheet outer row
        triangles += [(c, e, f), (c, f, d)]
    return TriangleMesh.from_arrays(vertices, triangles, name=name)


def transformed(mesh: TriangleMesh, rotation=None, translation=None,
                name=None) -> TriangleMesh:
    """Rigidly transformed copy of a mesh."""
    rot = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
    shift = np.zeros(3) if translation is None else np.asarray(translation,
                                                               dtype=float)
    vertices = mesh.vertices @ rot.T + shift
    return TriangleMesh.from_arrays(vertices, mesh.triangles,
                                    name=name or mesh.name)
