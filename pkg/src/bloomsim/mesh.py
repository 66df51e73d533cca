"""Triangular meshes: gmsh import, geometry, fixtures, refinement.

A :class:`TriMesh` stores nodes and triangles together with the precomputed
P1 geometry (areas, shape-function gradients, boundary edges).  Meshes come
from gmsh ASCII files (format 2.2 or the 4.1 block layout) or from the
bundled synthetic lake generator used by tests and demos.  Uniform "red"
refinement splits every triangle into four, exactly halving element
diameters, which is what the convergence checks rely on.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

__all__ = [
    "TriMesh",
    "MeshError",
    "load_gmsh_mesh",
    "write_msh22",
    "refine_uniform",
    "two_triangle_square",
    "lake_outline",
    "synthetic_lake_mesh",
]

_AREA_TOL = 1e-14


class MeshError(ValueError):
    """Malformed or unusable mesh input."""


@dataclass
class TriMesh:
    """Nodes, triangles, and precomputed P1 element geometry.

    Construction validates the mesh: positive (counterclockwise) triangle
    areas, every node referenced, and a connected triangulation.
    """

    nodes: np.ndarray       # (N, 2)
    triangles: np.ndarray   # (M, 3) int
    areas: np.ndarray = field(init=False)
    grad_x: np.ndarray = field(init=False)   # (M, 3) d(phi_j)/dx per element
    grad_y: np.ndarray = field(init=False)
    boundary_edges: np.ndarray = field(init=False)  # (E, 2) node pairs

    def __post_init__(self) -> None:
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshError("nodes must be an (N, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be an (M, 3) array")
        if self.triangles.size == 0:
            raise MeshError("mesh contains no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.nodes):
            raise MeshError("triangle index out of range")

        x = self.nodes[:, 0][self.triangles]
        y = self.nodes[:, 1][self.triangles]
        twice_signed = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (
            x[:, 2] - x[:, 0]
        ) * (y[:, 1] - y[:, 0])
        if np.any(np.abs(twice_signed) < _AREA_TOL):
            raise MeshError("degenerate (zero-area) triangle")
        if np.any(twice_signed < 0):
            raise MeshError("inverted (clockwise) triangle")
        self.areas = 0.5 * twice_signed

        # constant P1 gradients: grad phi_j = (b_j, c_j) / (2 A)
        self.grad_x = np.stack(
            [y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1
        ) / (2.0 * self.areas[:, None])
        self.grad_y = np.stack(
            [x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1
        ) / (2.0 * self.areas[:, None])

        referenced = np.zeros(len(self.nodes), dtype=bool)
        referenced[self.triangles] = True
        if not referenced.all():
            raise MeshError(f"{(~referenced).sum()} node(s) not referenced by any triangle")
        self._check_connected()
        self.boundary_edges = self._find_boundary_edges()

    def _check_connected(self) -> None:
        # union-find over triangle vertices
        parent = np.arange(len(self.nodes))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for tri in self.triangles:
            a = find(tri[0])
            for j in tri[1:]:
                b = find(j)
                if a != b:
                    parent[b] = a
        roots = {find(i) for i in range(len(self.nodes))}
        if len(roots) != 1:
            raise MeshError(f"mesh is disconnected ({len(roots)} components)")

    def _find_boundary_edges(self) -> np.ndarray:
        counts: dict[tuple[int, int], tuple[int, int]] = {}
        seen: dict[tuple[int, int], int] = {}
        for tri in self.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                seen[key] = seen.get(key, 0) + 1
                counts[key] = (a, b)
        edges = [counts[k] for k, c in seen.items() if c == 1]
        return np.array(edges, dtype=np.int64) if edges else np.empty((0, 2), dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @property
    def boundary_length(self) -> float:
        if len(self.boundary_edges) == 0:
            return 0.0
        d = self.nodes[self.boundary_edges[:, 0]] - self.nodes[self.boundary_edges[:, 1]]
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def max_edge_length(self) -> float:
        x = self.nodes[:, 0][self.triangles]
        y = self.nodes[:, 1][self.triangles]
        lengths = []
        for i, j in ((0, 1), (1, 2), (2, 0)):
            lengths.append(np.hypot(x[:, i] - x[:, j], y[:, i] - y[:, j]))
        return float(np.max(lengths))


def _orient_ccw(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    x = nodes[:, 0][triangles]
    y = nodes[:, 1][triangles]
    signed = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (
        y[:, 1] - y[:, 0]
    )
    out = triangles.copy()
    flip = signed < 0
    out[flip, 1], out[flip, 2] = triangles[flip, 2], triangles[flip, 1]
    return out


def _parse_msh22(lines: list[str]) -> tuple[np.ndarray, np.ndarray, int]:
    nodes: dict[int, tuple[float, float]] = {}
    triangles: list[tuple[int, int, int]] = []
    skipped = 0
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line == "$Nodes":
            count = int(lines[i + 1])
            for row in lines[i + 2 : i + 2 + count]:
                parts = row.split()
                nodes[int(parts[0])] = (float(parts[1]), float(parts[2]))
            i += 2 + count
        elif line == "$Elements":
            count = int(lines[i + 1])
            for row in lines[i + 2 : i + 2 + count]:
                parts = row.split()
                etype = int(parts[1])
                n_tags = int(parts[2])
                conn = [int(t) for t in parts[3 + n_tags :]]
                if etype == 2:
                    triangles.append(tuple(conn))
                else:
                    skipped += 1
            i += 2 + count
        else:
            i += 1
    return _finish_gmsh(nodes, triangles, skipped)


def _parse_msh41(lines: list[str]) -> tuple[np.ndarray, np.ndarray, int]:
    nodes: dict[int, tuple[float, float]] = {}
    triangles: list[tuple[int, int, int]] = []
    skipped = 0
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line == "$Nodes":
            header = lines[i + 1].split()
            n_blocks = int(header[0])
            i += 2
            for _ in range(n_blocks):
                block = lines[i].split()
                n_in_block = int(block[3])
                tags = [int(lines[i + 1 + j]) for j in range(n_in_block)]
                for j in range(n_in_block):
                    coords = lines[i + 1 + n_in_block + j].split()
                    nodes[tags[j]] = (float(coords[0]), float(coords[1]))
                i += 1 + 2 * n_in_block
        elif line == "$Elements":
            header = lines[i + 1].split()
            n_blocks = int(header[0])
            i += 2
            for _ in range(n_blocks):
                block = lines[i].split()
                etype = int(block[2])
                n_in_block = int(block[3])
                for j in range(n_in_block):
                    parts = lines[i + 1 + j].split()
                    if etype == 2:
                        triangles.append(tuple(int(t) for t in parts[1:4]))
                    else:
                        skipped += 1
                i += 1 + n_in_block
        else:
            i += 1
    return _finish_gmsh(nodes, triangles, skipped)


def _finish_gmsh(nodes, triangles, skipped):
    if not triangles:
        raise MeshError("mesh file contains no triangles")
    tags = sorted(nodes)
    index = {tag: k for k, tag in enumerate(tags)}
    coords = np.array([nodes[t] for t in tags])
    conn = np.array([[index[a], index[b], index[c]] for a, b, c in triangles])
    used = np.zeros(len(coords), dtype=bool)
    used[conn] = True
    if not used.all():
        # gmsh files routinely carry boundary-only points; drop them
        remap = -np.ones(len(coords), dtype=np.int64)
        remap[used] = np.arange(used.sum())
        coords = coords[used]
        conn = remap[conn]
    return coords, conn, skipped


def load_gmsh_mesh(path) -> TriMesh:
    """Read a gmsh ASCII mesh (v2.2 or v4.1), keeping the 2D triangles.

    Non-triangle elements are ignored with a count warning.  Unknown format
    versions, files without triangles, and inverted or degenerate triangles
    raise :class:`MeshError`.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    try:
        fmt_at = lines.index("$MeshFormat")
        version = lines[fmt_at + 1].split()[0]
    except (ValueError, IndexError) as exc:
        raise MeshError("missing $MeshFormat header") from exc
    if version.startswith("2.2"):
        coords, conn, skipped = _parse_msh22(lines)
    elif version.startswith("4.1"):
        coords, conn, skipped = _parse_msh41(lines)
    else:
        raise MeshError(f"unsupported gmsh format version {version}")
    if skipped:
        warnings.warn(f"ignored {skipped} non-triangle element(s)")
    return TriMesh(coords, conn)


def write_msh22(mesh: TriMesh, path) -> None:
    """Write a minimal gmsh 2.2 ASCII file (triangles only)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        fh.write(f"$Nodes\n{mesh.n_nodes}\n")
        for i, (x, y) in enumerate(mesh.nodes, start=1):
            fh.write(f"{i} {x:.17g} {y:.17g} 0\n")
        fh.write("$EndNodes\n")
        fh.write(f"$Elements\n{mesh.n_triangles}\n")
        for i, (a, b, c) in enumerate(mesh.triangles, start=1):
            fh.write(f"{i} 2 2 0 1 {a + 1} {b + 1} {c + 1}\n")
        fh.write("$EndElements\n")


def refine_uniform(mesh: TriMesh) -> TriMesh:
    """Red refinement: each triangle splits into four via edge midpoints.

    The coarse nodes keep their indices (they come first in the refined
    node list), so coarse nodal fields can be compared against restricted
    fine fields directly.
    """
    midpoint_index: dict[tuple[int, int], int] = {}
    new_nodes = [tuple(xy) for xy in mesh.nodes]

    def midpoint(a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        if key not in midpoint_index:
            xy = 0.5 * (mesh.nodes[a] + mesh.nodes[b])
            midpoint_index[key] = len(new_nodes)
            new_nodes.append((float(xy[0]), float(xy[1])))
        return midpoint_index[key]

    new_triangles = []
    for a, b, c in mesh.triangles:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_triangles.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
    return TriMesh(np.array(new_nodes), np.array(new_triangles))


def two_triangle_square(side: float = 1.0) -> TriMesh:
    """The unit square split along a diagonal; the smallest valid mesh."""
    nodes = np.array([[0.0, 0.0], [side, 0.0], [side, side], [0.0, side]])
    triangles = np.array([[0, 1, 2], [0, 2, 3]])
    return TriMesh(nodes, triangles)


def lake_outline(n_points: int = 160, radius: float = 400.0) -> np.ndarray:
    """A smooth closed lake-like curve with two sheltered inlets (metres).

    Polar perturbation of a circle; points are counterclockwise and the
    curve does not self-intersect for the default coefficients.
    """
    theta = np.linspace(0.0, 2.0 * math.pi, n_points, endpoint=False)
    r = radius * (
        1.0
        + 0.22 * np.cos(2 * theta)
        + 0.10 * np.sin(3 * theta)
        - 0.07 * np.cos(5 * theta)
    )
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def _points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd ray casting; boundary points are not guaranteed either way."""
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    px, py = polygon[:, 0], polygon[:, 1]
    for i in range(len(polygon)):
        x1, y1 = px[i - 1], py[i - 1]
        x2, y2 = px[i], py[i]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < x_cross)
    return inside


def synthetic_lake_mesh(target_h: float = 80.0, radius: float = 400.0) -> TriMesh:
    """Unstructured triangulation of the synthetic lake outline.

    Boundary points at roughly ``target_h`` spacing plus a staggered interior
    lattice are Delaunay-triangulated; triangles whose centroid falls outside
    the outline are discarded, which carves out the non-convex inlets.
    """
    outline_n = max(32, int(round(2.0 * math.pi * radius * 1.2 / target_h)))
    outline = lake_outline(n_points=outline_n, radius=radius)

    lo = outline.min(axis=0) - target_h
    hi = outline.max(axis=0) + target_h
    xs = np.arange(lo[0], hi[0] + target_h, target_h)
    ys = np.arange(lo[1], hi[1] + target_h * 0.866, target_h * 0.866)
    pts = []
    for j, yv in enumerate(ys):
        offset = 0.5 * target_h if j % 2 else 0.0
        for xv in xs:
            pts.append((xv + offset, yv))
    interior = np.array(pts)
    # keep lattice points clear of the boundary so small slivers cannot form
    keep = _points_in_polygon(interior, outline)
    for q in outline:
        d2 = (interior[:, 0] - q[0]) ** 2 + (interior[:, 1] - q[1]) ** 2
        keep &= d2 > (0.55 * target_h) ** 2
    points = np.vstack([outline, interior[keep]])

    tri = Delaunay(points)
    centroids = points[tri.simplices].mean(axis=1)
    inside = _points_in_polygon(centroids, outline)
    conn = _orient_ccw(points, tri.simplices[inside])

    # drop any nodes that lost all their triangles during the carve
    used = np.zeros(len(points), dtype=bool)
    used[conn] = True
    remap = -np.ones(len(points), dtype=np.int64)
    remap[used] = np.arange(used.sum())
    return TriMesh(points[used], remap[conn])
