"""Triangular meshes of a disk, electrode placement, difference operators,
and pixel rasterization.

The mesh generator is fully deterministic: nodes are laid out on concentric
rings (6*m nodes on ring m) and triangulated sextant by sextant, so a given
(radius, target_elements) pair always yields the same mesh. Boundary nodes
sit exactly on the circle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

# Nodes added per ring. 6 makes radial and tangential spacing nearly equal,
# i.e. close-to-equilateral triangles.
RING_GROWTH = 6

# A neighbor qualifies for the x (or y) difference only if the centroid
# displacement has an x (or y) component exceeding this fraction of the
# centroid distance.
DIRECTION_THRESHOLD = 0.2


@dataclass(frozen=True)
class TriMesh:
    """Immutable triangulation of the disk.

    nodes              (n_nodes, 2) coordinates in meters
    triangles          (n_elements, 3) node indices, counter-clockwise
    boundary_edges     (n_boundary, 2) node pairs tracing the boundary loop
    element_centroids  (n_elements, 2)
    element_areas      (n_elements,)
    element_neighbors  per-element tuple of edge-adjacent element indices
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    element_centroids: np.ndarray
    element_areas: np.ndarray
    element_neighbors: tuple[tuple[int, ...], ...]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.triangles.shape[0]

    def boundary_nodes(self) -> np.ndarray:
        """Node indices on the boundary, in loop order."""
        return self.boundary_edges[:, 0]

    def boundary_elements(self) -> np.ndarray:
        """Indices of elements owning at least one boundary edge."""
        edge_set = {tuple(sorted(e)) for e in self.boundary_edges.tolist()}
        hits = []
        for k, tri in enumerate(self.triangles.tolist()):
            for a, b in ((0, 1), (1, 2), (2, 0)):
                if tuple(sorted((tri[a], tri[b]))) in edge_set:
                    hits.append(k)
                    break
        return np.asarray(hits, dtype=int)


@dataclass(frozen=True)
class ElectrodeLayout:
    """Point electrodes snapped to boundary nodes."""

    count: int
    angles: np.ndarray  # realized boundary angles, radians in [0, 2pi)
    node_ids: np.ndarray


@dataclass(frozen=True)
class DifferenceOperators:
    """First-order difference operators on element values.

    ``dx`` and ``dy`` are N x N sparse matrices; ``stacked`` is the 2N x N
    vertical stack (dx on top). Rows without a qualifying neighbor are zero,
    and every row sums to zero, so constants are annihilated exactly.
    """

    dx: sp.csr_matrix
    dy: sp.csr_matrix
    stacked: sp.csr_matrix

    @property
    def n_elements(self) -> int:
        return self.dx.shape[0]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _ring_start(m: int) -> int:
    # nodes before ring m: center + 6*(1 + 2 + ... + (m-1))
    return 1 + 3 * m * (m - 1)


def generate_disk_mesh(radius: float, target_elements: int) -> TriMesh:
    """Build a deterministic triangular mesh of the disk of given radius.

    The ring count M is chosen so the element count 6*M^2 is as close as
    possible to ``target_elements`` (always within 30%). Boundary nodes lie
    exactly on the circle.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if target_elements < 64:
        raise ValueError(f"target_elements must be >= 64, got {target_elements}")

    raw = math.sqrt(target_elements / RING_GROWTH)
    lo, hi = max(1, math.floor(raw)), math.ceil(raw)
    n_rings = min(
        (lo, hi),
        key=lambda m: abs(RING_GROWTH * m * m - target_elements),
    )

    nodes = [(0.0, 0.0)]
    for m in range(1, n_rings + 1):
        r = radius * m / n_rings
        count = RING_GROWTH * m
        for j in range(count):
            theta = 2.0 * math.pi * j / count
            nodes.append((r * math.cos(theta), r * math.sin(theta)))
    nodes = np.asarray(nodes, dtype=float)

    triangles = []
    # innermost ring: fan around the center node
    start1 = _ring_start(1)
    for j in range(RING_GROWTH):
        triangles.append((0, start1 + j, start1 + (j + 1) % RING_GROWTH))
    # ring m >= 2: per sextant, m+1 outer nodes face m inner nodes
    for m in range(2, n_rings + 1):
        so, si = _ring_start(m), _ring_start(m - 1)
        no, ni = RING_GROWTH * m, RING_GROWTH * (m - 1)
        for s in range(RING_GROWTH):
            outer = [so + (s * m + t) % no for t in range(m + 1)]
            inner = [si + (s * (m - 1) + t) % ni for t in range(m)]
            for t in range(m):
                triangles.append((outer[t], outer[t + 1], inner[t]))
            for t in range(m - 1):
                triangles.append((inner[t], outer[t + 1], inner[t + 1]))
    triangles = np.asarray(triangles, dtype=int)

    # enforce counter-clockwise orientation
    p = nodes[triangles]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    signed = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    flip = signed < 0
    triangles[flip] = triangles[flip][:, ::-1]

    sb = _ring_start(n_rings)
    nb = RING_GROWTH * n_rings
    boundary_edges = np.array(
        [(sb + j, sb + (j + 1) % nb) for j in range(nb)], dtype=int
    )

    return _finish_mesh(nodes, triangles, boundary_edges)


def _finish_mesh(
    nodes: np.ndarray, triangles: np.ndarray, boundary_edges: np.ndarray
) -> TriMesh:
    p = nodes[triangles]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    if np.any(areas <= 0):
        raise ValueError("degenerate or mis-oriented triangle encountered")
    centroids = p.mean(axis=1)

    edge_owners: dict[tuple[int, int], list[int]] = {}
    for k, tri in enumerate(triangles.tolist()):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
            edge_owners.setdefault(key, []).append(k)
    neighbors: list[list[int]] = [[] for _ in range(len(triangles))]
    for owners in edge_owners.values():
        if len(owners) == 2:
            a, b = owners
            neighbors[a].append(b)
            neighbors[b].append(a)

    return TriMesh(
        nodes=_freeze(np.ascontiguousarray(nodes, dtype=float)),
        triangles=_freeze(np.ascontiguousarray(triangles, dtype=int)),
        boundary_edges=_freeze(np.ascontiguousarray(boundary_edges, dtype=int)),
        element_centroids=_freeze(centroids),
        element_areas=_freeze(areas),
        element_neighbors=tuple(tuple(sorted(n)) for n in neighbors),
    )


def place_electrodes(
    mesh: TriMesh, count: int, angles: np.ndarray | None = None
) -> ElectrodeLayout:
    """Snap ``count`` point electrodes to the boundary nodes nearest the
    target angles (uniform 2*pi*i/count when ``angles`` is not given).

    Passing explicit ``angles`` lets a second, finer mesh reuse the realized
    electrode positions of a coarser one.
    """
    if count < 4:
        raise ValueError(f"electrode count must be >= 4, got {count}")
    bnodes = mesh.boundary_nodes()
    if len(bnodes) < count:
        raise ValueError(
            f"mesh boundary has {len(bnodes)} nodes, fewer than {count} electrodes"
        )
    xy = mesh.nodes[bnodes]
    node_angles = np.mod(np.arctan2(xy[:, 1], xy[:, 0]), 2.0 * np.pi)
    if angles is None:
        targets = 2.0 * np.pi * np.arange(count) / count
    else:
        targets = np.mod(np.asarray(angles, dtype=float), 2.0 * np.pi)
        if targets.shape != (count,):
            raise ValueError("angles must have one entry per electrode")

    chosen = []
    for t in targets:
        d = np.abs(node_angles - t)
        d = np.minimum(d, 2.0 * np.pi - d)
        chosen.append(int(np.argmin(d)))
    if len(set(chosen)) != count:
        raise ValueError(
            "electrode targets snap to duplicate boundary nodes; mesh too coarse"
        )
    node_ids = bnodes[chosen]
    return ElectrodeLayout(
        count=count,
        angles=_freeze(node_angles[chosen].copy()),
        node_ids=_freeze(np.asarray(node_ids, dtype=int)),
    )


def build_difference_operators(mesh: TriMesh) -> DifferenceOperators:
    """Single-neighbor forward differences on element values.

    For the x operator, element k is paired with the edge-neighbor whose
    centroid displacement has the largest x component, provided that
    component exceeds ``DIRECTION_THRESHOLD`` times the centroid distance;
    the row is then (value[l] - value[k]) / dx. Rows with no qualifying
    neighbor are zero. The y operator is built the same way.
    """
    n = mesh.n_elements
    c = mesh.element_centroids
    rows_x, cols_x, vals_x = [], [], []
    rows_y, cols_y, vals_y = [], [], []
    for k in range(n):
        best_dx, best_lx = 0.0, -1
        best_dy, best_ly = 0.0, -1
        for l in mesh.element_neighbors[k]:
            d = c[l] - c[k]
            dist = math.hypot(d[0], d[1])
            if d[0] > DIRECTION_THRESHOLD * dist and d[0] > best_dx:
                best_dx, best_lx = d[0], l
            if d[1] > DIRECTION_THRESHOLD * dist and d[1] > best_dy:
                best_dy, best_ly = d[1], l
        if best_lx >= 0:
            rows_x += [k, k]
            cols_x += [k, best_lx]
            vals_x += [-1.0 / best_dx, 1.0 / best_dx]
        if best_ly >= 0:
            rows_y += [k, k]
            cols_y += [k, best_ly]
            vals_y += [-1.0 / best_dy, 1.0 / best_dy]
    dx = sp.csr_matrix((vals_x, (rows_x, cols_x)), shape=(n, n))
    dy = sp.csr_matrix((vals_y, (rows_y, cols_y)), shape=(n, n))
    return DifferenceOperators(dx=dx, dy=dy, stacked=sp.vstack([dx, dy]).tocsr())


def raster_extent(mesh: TriMesh) -> float:
    """Half-width of the square pixel grid covering the mesh."""
    return float(np.max(np.abs(mesh.nodes)))


def rasterize(mesh: TriMesh, values: np.ndarray, resolution: int) -> np.ndarray:
    """Sample element values on a resolution x resolution pixel grid.

    Pixel (iy, ix) takes the value of the triangle containing its center;
    pixel centers outside the mesh are NaN. Row index iy increases with y.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n_elements,):
        raise ValueError(
            f"expected {mesh.n_elements} element values, got shape {values.shape}"
        )
    if resolution < 1:
        raise ValueError("resolution must be >= 1")

    ext = raster_extent(mesh)
    step = 2.0 * ext / resolution
    centers = -ext + step * (np.arange(resolution) + 0.5)
    image = np.full((resolution, resolution), np.nan)

    eps = 1e-12 * ext
    for k in range(mesh.n_elements):
        pa, pb, pc = mesh.nodes[mesh.triangles[k]]
        xmin = min(pa[0], pb[0], pc[0])
        xmax = max(pa[0], pb[0], pc[0])
        ymin = min(pa[1], pb[1], pc[1])
        ymax = max(pa[1], pb[1], pc[1])
        ix0 = np.searchsorted(centers, xmin - eps)
        ix1 = np.searchsorted(centers, xmax + eps)
        iy0 = np.searchsorted(centers, ymin - eps)
        iy1 = np.searchsorted(centers, ymax + eps)
        if ix0 >= ix1 or iy0 >= iy1:
            continue
        gx, gy = np.meshgrid(centers[ix0:ix1], centers[iy0:iy1])
        # inclusive barycentric sign test; first-painted triangle wins on edges
        d1 = (gx - pb[0]) * (pa[1] - pb[1]) - (pa[0] - pb[0]) * (gy - pb[1])
        d2 = (gx - pc[0]) * (pb[1] - pc[1]) - (pb[0] - pc[0]) * (gy - pc[1])
        d3 = (gx - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (gy - pa[1])
        inside = (d1 >= -eps) & (d2 >= -eps) & (d3 >= -eps)
        inside |= (d1 <= eps) & (d2 <= eps) & (d3 <= eps)
        block = image[iy0:iy1, ix0:ix1]
        write = inside & np.isnan(block)
        block[write] = values[k]
    return image


def pixel_of_point(mesh: TriMesh, point: np.ndarray, resolution: int) -> tuple[int, int]:
    """(row, col) pixel index of a physical point on the rasterize grid."""
    ext = raster_extent(mesh)
    step = 2.0 * ext / resolution
    ix = int(np.clip((point[0] + ext) / step, 0, resolution - 1))
    iy = int(np.clip((point[1] + ext) / step, 0, resolution - 1))
    return iy, ix


# ---------------------------------------------------------------------------
# plain-text serialization


def save_mesh(path, mesh: TriMesh, layout: ElectrodeLayout | None = None) -> None:
    """Write nodes, triangles and electrode node ids as plain text."""
    with open(path, "w") as f:
        f.write(f"{mesh.n_nodes}\n")
        for x, y in mesh.nodes.tolist():
            f.write(f"{x!r} {y!r}\n")
        f.write(f"{mesh.n_elements}\n")
        for a, b, c in mesh.triangles.tolist():
            f.write(f"{a} {b} {c}\n")
        n_el = 0 if layout is None else layout.count
        f.write(f"{n_el}\n")
        if layout is not None:
            for nid in layout.node_ids:
                f.write(f"{nid}\n")


def load_mesh(path) -> tuple[TriMesh, ElectrodeLayout | None]:
    """Read a mesh file written by :func:`save_mesh`."""
    with open(path) as f:
        tokens = f.read().split("\n")
    pos = 0

    def line():
        nonlocal pos
        while tokens[pos].strip() == "":
            pos += 1
        out = tokens[pos]
        pos += 1
        return out

    n_nodes = int(line())
    nodes = np.array(
        [[float(v) for v in line().split()] for _ in range(n_nodes)], dtype=float
    )
    n_tri = int(line())
    triangles = np.array(
        [[int(v) for v in line().split()] for _ in range(n_tri)], dtype=int
    )
    boundary_edges = _boundary_loop(triangles)
    mesh = _finish_mesh(nodes, triangles, boundary_edges)
    n_el = int(line())
    layout = None
    if n_el > 0:
        node_ids = np.array([int(line()) for _ in range(n_el)], dtype=int)
        xy = nodes[node_ids]
        angles = np.mod(np.arctan2(xy[:, 1], xy[:, 0]), 2.0 * np.pi)
        layout = ElectrodeLayout(
            count=n_el, angles=_freeze(angles), node_ids=_freeze(node_ids)
        )
    return mesh, layout


def _boundary_loop(triangles: np.ndarray) -> np.ndarray:
    """Recover the ordered boundary loop: edges owned by exactly one triangle."""
    owners: dict[tuple[int, int], int] = {}
    directed: dict[tuple[int, int], tuple[int, int]] = {}
    for tri in triangles.tolist():
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
            owners[key] = owners.get(key, 0) + 1
            directed[key] = (tri[a], tri[b])
    # CCW triangles traverse the boundary counter-clockwise
    nxt = {}
    for key, n in owners.items():
        if n == 1:
            a, b = directed[key]
            nxt[a] = b
    if not nxt:
        raise ValueError("mesh has no boundary")
    start = min(nxt)
    loop = [start]
    cur = nxt[start]
    while cur != start:
        loop.append(cur)
        cur = nxt[cur]
        if len(loop) > len(nxt):
            raise ValueError("boundary edges do not form a single closed loop")
    if len(loop) != len(nxt):
        raise ValueError("boundary edges do not form a single closed loop")
    return np.array(
        [(loop[i], loop[(i + 1) % len(loop)]) for i in range(len(loop))], dtype=int
    )


def save_element_values(path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=float)
    with open(path, "w") as f:
        f.write(f"{len(values)}\n")
        for v in values.tolist():
            f.write(f"{v!r}\n")


def load_element_values(path) -> np.ndarray:
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    n = int(lines[0])
    return np.array([float(v) for v in lines[1 : n + 1]], dtype=float)
