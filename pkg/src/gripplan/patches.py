"""Cup-footprint surface patches and the per-point acceptance rules.

A patch is the surface material under one suction-cup footprint: every
refined surface sample whose radial distance from the cup axis (seed
normal) is at most the cup radius, restricted to the surface component
walkable from the seed triangle. The acceptance pipeline is fixed:
footprint coverage first, then the unevenness envelope, then the normal
spread bound, so rejection reasons are deterministic.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import PatchTooSparse
from .mesh import SeedPoint, TriangleMesh

logger = logging.getLogger(__name__)

_EPS = 1e-9
MIN_PATCH_SAMPLES = 6


class RejectionReason(enum.Enum):
    BOUNDARY_OVERHANG = "boundary_overhang"
    CONE_VIOLATION = "cone_violation"
    NORMAL_SPREAD = "normal_spread"
    PREFILTER_TILT = "prefilter_tilt"


@dataclass
class Rejection:
    reason: RejectionReason
    detail: str = ""


@dataclass
class GrippingPoint:
    """An accepted cup contact."""

    position: np.ndarray     # (3,)
    normal: np.ndarray       # (3,) unit
    quality: float           # 1 - deviation/flatness_tol, clamped to [0, 1]
    deviation: float         # max |axial deviation| over the patch (mm)
    normal_spread: float     # max sample-normal angle to the center (deg)
    seed_index: int = -1     # position in the deterministic seed order


@dataclass
class SurfacePatch:
    center: np.ndarray          # (3,)
    center_normal: np.ndarray   # (3,) unit
    positions: np.ndarray       # (k, 3) samples inside the footprint
    normals: np.ndarray         # (k, 3) face normal per sample
    cup_radius: float
    boundary_clipped: bool

    @property
    def samples(self):
        """(point, normal) pairs, matching the footprint definition."""
        return list(zip(self.positions, self.normals))

    def axial_deviations(self) -> np.ndarray:
        return (self.positions - self.center) @ self.center_normal

    def radial_distances(self) -> np.ndarray:
        rel = self.positions - self.center
        axial = rel @ self.center_normal
        return np.linalg.norm(rel - axial[:, None] * self.center_normal,
                              axis=1)


@dataclass
class FlatnessReport:
    max_abs_deviation: float
    max_normal_spread: float
    cone_violated: bool
    mean_curvature: float   # diagnostic estimate (1/mm); not used to reject


def _refined_lattice(mesh: TriangleMesh, pitch: float):
    """Per-triangle barycentric refinement: sample points at most ``pitch``
    apart plus the sub-edge index pairs. Cached on the mesh."""
    key = ("lattice", round(pitch, 12))
    if key in mesh._cache:
        return mesh._cache[key]
    lattices = []
    for tid in range(len(mesh.triangles)):
        v = mesh.triangle_vertices(tid)
        longest = max(np.linalg.norm(v[1] - v[0]),
                      np.linalg.norm(v[2] - v[1]),
                      np.linalg.norm(v[0] - v[2]))
        n = max(1, int(math.ceil(longest / pitch - 1e-12)))
        ij = [(i, j) for j in range(n + 1) for i in range(n + 1 - j)]
        index = {pair: k for k, pair in enumerate(ij)}
        bary = np.array(ij, dtype=np.float64) / n
        points = (v[0]
                  + np.outer(bary[:, 0], v[1] - v[0])
                  + np.outer(bary[:, 1], v[2] - v[0]))
        edges = set()
        for i, j in ij:
            if i + j >= n:
                continue
            a = index[(i, j)]
            edges.add((a, index[(i + 1, j)]))
            edges.add((a, index[(i, j + 1)]))
            edges.add((index[(i + 1, j)], index[(i, j + 1)]))
        edges = np.array(sorted(edges), dtype=np.int64) if edges else \
            np.empty((0, 2), dtype=np.int64)
        lattices.append((points, edges))
    mesh._cache[key] = lattices
    return lattices


def _projected_triangle_distance(corners, center, axis) -> float:
    """Distance from the cup axis to a triangle, measured in the plane
    normal to the axis (0 when the axis pierces the triangle)."""
    rel = corners - center
    axial = rel @ axis
    u = rel - np.outer(axial, axis)
    # Inside test via consistent cross-product signs around the triangle.
    signs = []
    for i in range(3):
        e = u[(i + 1) % 3] - u[i]
        signs.append(float(np.dot(np.cross(e, -u[i]), axis)))
    if all(s >= -_EPS for s in signs) or all(s <= _EPS for s in signs):
        return 0.0
    best = math.inf
    for i in range(3):
        a = u[i]
        w = u[(i + 1) % 3] - a
        ww = float(w @ w)
        s = 0.0 if ww < 1e-18 else min(1.0, max(0.0, float(-(a @ w) / ww)))
        best = min(best, float(np.linalg.norm(a + s * w)))
    return best


def _segment_axis_distance(p0, p1, center, axis) -> float:
    rel0 = p0 - center
    rel1 = p1 - center
    u = rel0 - np.dot(rel0, axis) * axis
    w = (rel1 - np.dot(rel1, axis) * axis) - u
    ww = float(w @ w)
    s = 0.0 if ww < 1e-18 else min(1.0, max(0.0, float(-(u @ w) / ww)))
    return float(np.linalg.norm(u + s * w))


def extract_patch(mesh: TriangleMesh, seed: SeedPoint,
                  cup_diameter: float) -> SurfacePatch:
    """Cut the surface under a cup footprint centered at ``seed``.

    Samples come from the cached refinement lattice (spacing at most
    cup_diameter / 8) of every triangle in the component reachable from the
    seed triangle through faces that intersect the footprint cylinder, plus
    exact footprint-rim crossing points of lattice edges. A patch that
    reaches a mesh boundary edge inside the footprint is flagged
    ``boundary_clipped``.

    Raises PatchTooSparse when fewer than 6 samples result.
    """
    if cup_diameter <= 0:
        raise ValueError("cup_diameter must be positive")
    radius = cup_diameter / 2.0
    center = np.asarray(seed.position, dtype=np.float64)
    axis = np.asarray(seed.normal, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)

    lattices = _refined_lattice(mesh, cup_diameter / 8.0)
    neighbors, boundary_edges = mesh.edge_adjacency()
    tri_boundary: dict[int, list[tuple[int, int]]] = {}
    if boundary_edges:
        edge_set = set(boundary_edges)
        for tid, (a, b, c) in enumerate(np.asarray(mesh.triangles)):
            for u, v in ((a, b), (b, c), (c, a)):
                key = (int(min(u, v)), int(max(u, v)))
                if key in edge_set:
                    tri_boundary.setdefault(tid, []).append(key)

    visited = {int(seed.triangle_id)}
    stack = [int(seed.triangle_id)]
    component = []
    while stack:
        tid = stack.pop()
        component.append(tid)
        for other in neighbors[tid]:
            if other in visited:
                continue
            d = _projected_triangle_distance(
                mesh.triangle_vertices(other), center, axis)
            visited.add(other)
            if d <= radius + _EPS:
                stack.append(other)

    pos_chunks = [center[None, :]]
    nrm_chunks = [axis[None, :]]
    clipped = False
    for tid in component:
        points, edges = lattices[tid]
        rel = points - center
        axial = rel @ axis
        radial_vec = rel - axial[:, None] * axis
        rho = np.linalg.norm(radial_vec, axis=1)
        inside = rho <= radius + _EPS
        n_face = mesh.face_normals[tid]
        if inside.any():
            pos_chunks.append(points[inside])
            nrm_chunks.append(np.broadcast_to(n_face,
                                              (int(inside.sum()), 3)))
        if len(edges):
            ra = rho[edges[:, 0]]
            rb = rho[edges[:, 1]]
            crossing = ((ra < radius - _EPS) & (rb > radius + _EPS)) | \
                       ((ra > radius + _EPS) & (rb < radius - _EPS))
            for a, b in edges[crossing]:
                u = radial_vec[a]
                w = radial_vec[b] - radial_vec[a]
                aa = float(w @ w)
                bb = 2.0 * float(u @ w)
                cc = float(u @ u) - radius * radius
                disc = bb * bb - 4.0 * aa * cc
                if aa < 1e-18 or disc < 0:
                    continue
                sq = math.sqrt(disc)
                for t in ((-bb - sq) / (2 * aa), (-bb + sq) / (2 * aa)):
                    if 0.0 < t < 1.0:
                        p = points[a] + t * (points[b] - points[a])
                        pos_chunks.append(p[None, :])
                        nrm_chunks.append(n_face[None, :])
        if tid in tri_boundary:
            for u_idx, v_idx in tri_boundary[tid]:
                d = _segment_axis_distance(mesh.vertices[u_idx],
                                           mesh.vertices[v_idx],
                                           center, axis)
                if d < radius - _EPS:
                    clipped = True

    positions = np.vstack(pos_chunks)
    normals = np.vstack(nrm_chunks)
    keys = np.round(positions / 1e-7).astype(np.int64)
    _, unique_idx = np.unique(keys, axis=0, return_index=True)
    unique_idx = np.sort(unique_idx)
    positions = positions[unique_idx]
    normals = normals[unique_idx]

    if len(positions) < MIN_PATCH_SAMPLES:
        raise PatchTooSparse(
            f"footprint at {np.round(center, 3).tolist()} captured only "
            f"{len(positions)} samples")
    return SurfacePatch(center=center, center_normal=axis,
                        positions=positions, normals=normals,
                        cup_radius=radius, boundary_clipped=clipped)


def flatness_check(patch: SurfacePatch, flatness_tol: float,
                   cone_slope: float) -> FlatnessReport:
    """Test every sample against the unevenness envelope
    |axial| <= flatness_tol + cone_slope * radial."""
    if flatness_tol < 0 or cone_slope < 0:
        raise ValueError("flatness_tol and cone_slope must be nonnegative")
    axial = patch.axial_deviations()
    rho = patch.radial_distances()
    violated = bool(np.any(np.abs(axial) > flatness_tol + cone_slope * rho))
    cos_spread = np.clip(patch.normals @ patch.center_normal, -1.0, 1.0)
    spread = float(np.degrees(np.arccos(cos_spread.min())))
    rho4 = float((rho ** 4).sum())
    curvature = 0.0 if rho4 < 1e-18 else float(
        -2.0 * (axial * rho ** 2).sum() / rho4)
    return FlatnessReport(max_abs_deviation=float(np.abs(axial).max()),
                          max_normal_spread=spread,
                          cone_violated=violated,
                          mean_curvature=curvature)


def evaluate_candidate(mesh: TriangleMesh, seed: SeedPoint, params
                       ) -> GrippingPoint | Rejection:
    """Decide whether a cup can seal at ``seed``.

    Checks run in fixed order: footprint coverage (sparse or clipped ->
    boundary_overhang), unevenness envelope (cone_violation), then normal
    spread. The first failure wins; success yields a GrippingPoint whose
    quality is 1 - deviation/flatness_tol clamped to [0, 1].
    """
    try:
        patch = extract_patch(mesh, seed, params.cup_diameter)
    except PatchTooSparse as exc:
        return Rejection(RejectionReason.BOUNDARY_OVERHANG, str(exc))
    if patch.boundary_clipped and not params.allow_boundary:
        return Rejection(RejectionReason.BOUNDARY_OVERHANG,
                         "footprint crosses a mesh boundary")
    report = flatness_check(patch, params.flatness_tol, params.cone_slope)
    if report.cone_violated:
        return Rejection(
            RejectionReason.CONE_VIOLATION,
            f"max deviation {report.max_abs_deviation:.6g} mm")
    if report.max_normal_spread > params.max_curvature_angle:
        return Rejection(
            RejectionReason.NORMAL_SPREAD,
            f"normal spread {report.max_normal_spread:.6g} deg")
    if params.flatness_tol > 0:
        quality = 1.0 - report.max_abs_deviation / params.flatness_tol
    else:
        quality = 1.0 if report.max_abs_deviation <= _EPS else 0.0
    quality = min(1.0, max(0.0, quality))
    return GrippingPoint(position=np.asarray(seed.position, float).copy(),
                         normal=np.asarray(seed.normal, float).copy(),
                         quality=quality,
                         deviation=report.max_abs_deviation,
                         normal_spread=report.max_normal_spread)
