"""Fine triangulation with conforming fracture edges, coarse grid, neighborhoods.

The fine mesh is a structured node lattice.  Fracture polylines are snapped to
lattice nodes and walked as chains of horizontal, vertical and diagonal lattice
edges; every cell is then split along the diagonal a fracture uses (or the
default ``/`` diagonal), so each fracture is exactly a union of fine edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    pass


SIDES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Fracture:
    points: np.ndarray
    aperture: float
    permeability: float
    porosity: float = 1.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise MeshError(f"fracture polyline needs at least 2 points, got shape {pts.shape}")
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg <= 0.0):
            raise MeshError("fracture polyline has a zero-length segment")
        if not self.aperture > 0:
            raise MeshError(f"fracture aperture must be positive, got {self.aperture}")
        if not self.permeability > 0:
            raise MeshError(f"fracture permeability must be positive, got {self.permeability}")
        if not 0 < self.porosity <= 1:
            raise MeshError(f"fracture porosity must lie in (0, 1], got {self.porosity}")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class FractureNetwork:
    fractures: tuple[Fracture, ...] = ()

    def __len__(self):
        return len(self.fractures)

    def __iter__(self):
        return iter(self.fractures)

    @classmethod
    def from_list(cls, items) -> "FractureNetwork":
        fracs = []
        for it in items:
            if isinstance(it, Fracture):
                fracs.append(it)
            else:
                fracs.append(Fracture(np.asarray(it["points"], float), float(it["aperture"]),
                                      float(it["permeability"]), float(it.get("porosity", 1.0))))
        return cls(tuple(fracs))

    def __or__(self, other: "FractureNetwork") -> "FractureNetwork":
        return FractureNetwork(self.fractures + other.fractures)


@dataclass(frozen=True, eq=False)
class FineMesh:
    """Conforming P1 triangulation on a rectangle.

    ``fracture_edges[s]`` is the ordered chain of edge ids of fracture ``s``;
    ``cell_of_triangle`` maps triangles back to lattice cells ``(ix, iy)``.
    """
    extent: tuple[float, float]
    nx: int
    ny: int
    nodes: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_triangles: list
    boundary: dict
    fracture_edges: tuple
    fracture_nodes: tuple
    network: FractureNetwork
    cell_of_triangle: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        p = self.nodes[self.edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @property
    def h_min(self) -> float:
        return float(self.edge_lengths.min())

    @cached_property
    def spacing(self) -> tuple[float, float]:
        return self.extent[0] / self.nx, self.extent[1] / self.ny

    def node_index(self, ix, iy):
        return np.asarray(iy) * (self.nx + 1) + np.asarray(ix)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(np.concatenate([self.boundary[s] for s in SIDES]))

    @cached_property
    def fracture_segments(self) -> tuple[np.ndarray, np.ndarray]:
        """All fracture edges as (node pairs, fracture id) arrays."""
        if not self.fracture_edges:
            return np.zeros((0, 2), int), np.zeros(0, int)
        ids = np.concatenate([np.full(len(c), s) for s, c in enumerate(self.fracture_edges)])
        eds = np.concatenate([np.asarray(c, int) for c in self.fracture_edges])
        return self.edges[eds], ids

    def locate(self, point) -> tuple[int, np.ndarray]:
        """Containing triangle and barycentric weights of a point."""
        x, y = map(float, point)
        lx, ly = self.extent
        tol = 1e-12 * max(lx, ly)
        if not (-tol <= x <= lx + tol and -tol <= y <= ly + tol):
            raise MeshError(f"point {(x, y)} lies outside the domain [0,{lx}]x[0,{ly}]")
        hx, hy = self.spacing
        ix = min(max(int(np.floor(x / hx)), 0), self.nx - 1)
        iy = min(max(int(np.floor(y / hy)), 0), self.ny - 1)
        for t in self._cell_triangles[iy * self.nx + ix]:
            lam = _barycentric(self.nodes[self.triangles[t]], (x, y))
            if lam.min() >= -1e-10:
                lam = np.clip(lam, 0.0, None)
                return int(t), lam / lam.sum()
        raise MeshError(f"could not locate point {(x, y)}")  # pragma: no cover

    @cached_property
    def _cell_triangles(self):
        out = [[] for _ in range(self.nx * self.ny)]
        for t, (ix, iy) in enumerate(self.cell_of_triangle):
            out[iy * self.nx + ix].append(t)
        return out


def _barycentric(tri, p):
    (x1, y1), (x2, y2), (x3, y3) = tri
    det = (y2 - y3) * (x1 - x3) + (x3 - x2) * (y1 - y3)
    l1 = ((y2 - y3) * (p[0] - x3) + (x3 - x2) * (p[1] - y3)) / det
    l2 = ((y3 - y1) * (p[0] - x3) + (x1 - x3) * (p[1] - y3)) / det
    return np.array([l1, l2, 1.0 - l1 - l2])


def _lattice_walk(a, b):
    """Lattice nodes from a to b with unit (king-move) steps along the straight line."""
    (i0, j0), (i1, j1) = a, b
    n = max(abs(i1 - i0), abs(j1 - j0))
    if n == 0:
        return [a]
    k = np.arange(n + 1)
    ii = np.rint(i0 + (i1 - i0) * k / n).astype(int)
    jj = np.rint(j0 + (j1 - j0) * k / n).astype(int)
    return list(zip(ii.tolist(), jj.tolist()))


def build_fine_mesh(extent, nx: int, ny: int, network: FractureNetwork | None = None) -> FineMesh:
    """Structured lattice triangulation honouring the fracture network."""
    if nx < 2 or ny < 2:
        raise MeshError(f"nx and ny must be >= 2, got nx={nx}, ny={ny}")
    lx, ly = float(extent[0]), float(extent[1])
    if lx <= 0 or ly <= 0:
        raise MeshError("domain extent must be positive")
    network = network if network is not None else FractureNetwork()
    if not isinstance(network, FractureNetwork):
        network = FractureNetwork.from_list(network)
    hx, hy = lx / nx, ly / ny

    xs, ys = np.linspace(0.0, lx, nx + 1), np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    # 0 = default '/' diagonal, 1 = '\' diagonal
    split = np.zeros((ny, nx), dtype=np.int8)
    forced = np.full((ny, nx), -1, dtype=np.int8)
    chains = []
    tol = 1e-9 * max(lx, ly)
    for s, frac in enumerate(network):
        pts = frac.points
        if np.any(pts[:, 0] < -tol) or np.any(pts[:, 0] > lx + tol) or \
                np.any(pts[:, 1] < -tol) or np.any(pts[:, 1] > ly + tol):
            raise MeshError(f"fracture {s} lies (partly) outside the domain")
        snapped = [(int(np.rint(x / hx)), int(np.rint(y / hy))) for x, y in pts]
        for a, b in zip(snapped[:-1], snapped[1:]):
            if a == b:
                raise MeshError(
                    f"fracture {s}: consecutive vertices snap to the same lattice node; "
                    f"refine to spacing below {np.linalg.norm(np.diff(pts, axis=0), axis=1).min():.6g}")
        path = [snapped[0]]
        for a, b in zip(snapped[:-1], snapped[1:]):
            path.extend(_lattice_walk(a, b)[1:])
        for (i0, j0), (i1, j1) in zip(path[:-1], path[1:]):
            di, dj = i1 - i0, j1 - j0
            if di != 0 and dj != 0:
                ci, cj = min(i0, i1), min(j0, j1)
                want = 0 if di * dj > 0 else 1
                if forced[cj, ci] not in (-1, want):
                    raise MeshError(
                        f"fracture {s} crosses another fracture inside lattice cell ({ci},{cj}); "
                        f"refine the fine grid (current spacing {hx:.6g} x {hy:.6g})")
                forced[cj, ci] = want
        if len(set(path)) != len(path):
            raise MeshError(f"fracture {s} revisits a lattice node; refine the fine grid")
        chains.append(path)
    split[forced == 1] = 1

    tris = []
    cells = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            if split[j, i] == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
            cells += [(i, j), (i, j)]
    triangles = np.array(tris, dtype=np.int64)
    cell_of_triangle = np.array(cells, dtype=np.int64)

    raw = np.sort(np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]), axis=1)
    edges, inverse = np.unique(raw, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    owner = np.tile(np.arange(len(triangles)), 3)
    edge_triangles = [[] for _ in range(len(edges))]
    for e, t in zip(inverse.tolist(), owner.tolist()):
        edge_triangles[e].append(t)
    lookup = {(int(p), int(q)): k for k, (p, q) in enumerate(edges)}

    fracture_edges, fracture_nodes = [], []
    for path in chains:
        ids = [nid(i, j) for i, j in path]
        chain = []
        for p, q in zip(ids[:-1], ids[1:]):
            key = (min(p, q), max(p, q))
            if key not in lookup:  # pragma: no cover - guaranteed by the split rule
                raise MeshError("internal error: fracture edge missing from triangulation")
            chain.append(lookup[key])
        fracture_edges.append(tuple(chain))
        fracture_nodes.append(np.array(ids, dtype=np.int64))

    ii = np.arange(nx + 1)
    jj = np.arange(ny + 1)
    boundary = {
        "left": nid(0, jj),
        "right": nid(nx, jj),
        "bottom": nid(ii, 0),
        "top": nid(ii, ny),
    }
    return FineMesh((lx, ly), nx, ny, nodes, triangles, edges, edge_triangles, boundary,
                    tuple(fracture_edges), tuple(fracture_nodes), network, cell_of_triangle)


@dataclass(frozen=True, eq=False)
class CoarseGrid:
    mesh: FineMesh
    mx: int
    my: int
    block_of_triangle: np.ndarray
    node_coords: np.ndarray

    @property
    def n_nodes(self) -> int:
        return (self.mx + 1) * (self.my + 1)

    @property
    def n_blocks(self) -> int:
        return self.mx * self.my

    @property
    def H(self) -> tuple[float, float]:
        return self.mesh.extent[0] / self.mx, self.mesh.extent[1] / self.my

    @property
    def ratio(self) -> tuple[int, int]:
        return self.mesh.nx // self.mx, self.mesh.ny // self.my

    def node_ij(self, node_id: int) -> tuple[int, int]:
        return node_id % (self.mx + 1), node_id // (self.mx + 1)

    def node_blocks(self, node_id: int) -> list[int]:
        if not 0 <= node_id < self.n_nodes:
            raise IndexError(f"coarse node {node_id} out of range [0, {self.n_nodes})")
        I, J = self.node_ij(node_id)
        out = []
        for bj in (J - 1, J):
            for bi in (I - 1, I):
                if 0 <= bi < self.mx and 0 <= bj < self.my:
                    out.append(bj * self.mx + bi)
        return out

    @cached_property
    def blocks(self) -> list[np.ndarray]:
        order = np.argsort(self.block_of_triangle, kind="stable")
        counts = np.bincount(self.block_of_triangle, minlength=self.n_blocks)
        return np.split(order, np.cumsum(counts)[:-1])

    @cached_property
    def skeleton_nodes(self) -> np.ndarray:
        """Fine nodes lying on coarse block edges."""
        rx, ry = self.ratio
        ix = np.arange(self.mesh.n_nodes) % (self.mesh.nx + 1)
        iy = np.arange(self.mesh.n_nodes) // (self.mesh.nx + 1)
        return np.flatnonzero((ix % rx == 0) | (iy % ry == 0))


def build_coarse_grid(mesh: FineMesh, mx: int, my: int) -> CoarseGrid:
    if mx < 1 or my < 1:
        raise MeshError("coarse dimensions must be positive")
    if mesh.nx % mx or mesh.ny % my:
        raise MeshError(
            f"coarse grid {mx}x{my} is not nested in fine grid {mesh.nx}x{mesh.ny}: "
            f"{mx} must divide {mesh.nx} and {my} must divide {mesh.ny}")
    rx, ry = mesh.nx // mx, mesh.ny // my
    ci, cj = mesh.cell_of_triangle[:, 0], mesh.cell_of_triangle[:, 1]
    block = (cj // ry) * mx + ci // rx
    H = (mesh.extent[0] / mx, mesh.extent[1] / my)
    I, J = np.meshgrid(np.arange(mx + 1), np.arange(my + 1))
    coords = np.column_stack([I.ravel() * H[0], J.ravel() * H[1]])
    return CoarseGrid(mesh, mx, my, block, coords)


@dataclass(frozen=True, eq=False)
class Neighborhood:
    """Union of coarse blocks around one coarse node, with its local submesh.

    ``nodes`` holds global fine ids in increasing order; local id ``k`` maps to
    ``nodes[k]``.  ``boundary`` and ``interior`` are local ids, ``boundary``
    ordered by global id.
    """
    center: int
    blocks: tuple[int, ...]
    triangles: np.ndarray
    nodes: np.ndarray
    local_triangles: np.ndarray
    boundary: np.ndarray
    interior: np.ndarray
    fracture_edges: np.ndarray
    fracture_ids: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def to_local(self, global_ids):
        loc = np.searchsorted(self.nodes, global_ids)
        if np.any(loc >= len(self.nodes)) or np.any(self.nodes[np.minimum(loc, len(self.nodes) - 1)] != global_ids):
            raise KeyError("node not in neighborhood")
        return loc


def neighborhood(grid: CoarseGrid, node_id: int) -> Neighborhood:
    blocks = grid.node_blocks(node_id)
    mesh = grid.mesh
    tris = np.sort(np.concatenate([grid.blocks[b] for b in blocks]))
    nodes = np.unique(mesh.triangles[tris])
    local_tris = np.searchsorted(nodes, mesh.triangles[tris])

    raw = np.sort(np.concatenate([local_tris[:, [0, 1]], local_tris[:, [1, 2]], local_tris[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(raw, axis=0, return_counts=True)
    boundary = np.unique(uniq[counts == 1].ravel())
    interior = np.setdiff1d(np.arange(len(nodes)), boundary)

    tri_set = np.zeros(mesh.n_triangles, bool)
    tri_set[tris] = True
    f_edges, f_ids = [], []
    for s, chain in enumerate(mesh.fracture_edges):
        for e in chain:
            if any(tri_set[t] for t in mesh.edge_triangles[e]):
                f_edges.append(e)
                f_ids.append(s)
    return Neighborhood(node_id, tuple(blocks), tris, nodes, local_tris, boundary, interior,
                        np.array(f_edges, dtype=np.int64), np.array(f_ids, dtype=np.int64))


def partition_of_unity(grid: CoarseGrid) -> np.ndarray:
    """Bilinear coarse hat functions at fine nodes, shape ``(N_v, n_fine)``."""
    mesh = grid.mesh
    Hx, Hy = grid.H
    x = mesh.nodes[:, 0] / Hx
    y = mesh.nodes[:, 1] / Hy
    chi = np.zeros((grid.n_nodes, mesh.n_nodes))
    for k in range(grid.n_nodes):
        I, J = grid.node_ij(k)
        chi[k] = np.clip(1.0 - np.abs(x - I), 0.0, None) * np.clip(1.0 - np.abs(y - J), 0.0, None)
    return chi
