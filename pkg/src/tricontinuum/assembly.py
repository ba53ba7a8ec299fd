"""P1 operators for the coupled three-continuum system with DFM line terms.

Global DOF layout: ``continuum * n + node`` with continua ordered (m, f, v).
All assemblers work on a :class:`Patch`, which is either the whole fine mesh
or the submesh of one coarse neighborhood.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .physics import CONTINUA, Model, SingularStateError, alpha

N_CONT = 3

_REF_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
_LINE_MASS = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
_LINE_STIFF = np.array([[1.0, -1.0], [-1.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Patch:
    coords: np.ndarray     # (n, 2)
    tris: np.ndarray       # (nt, 3) local connectivity
    tri_ids: np.ndarray    # (nt,) global triangle ids, to index coefficient fields
    segs: np.ndarray       # (ns, 2) local connectivity of fracture edges
    seg_frac: np.ndarray   # (ns,) fracture id of each edge
    network: object

    @property
    def n(self) -> int:
        return len(self.coords)


def mesh_patch(mesh) -> Patch:
    segs, ids = mesh.fracture_segments
    return Patch(mesh.nodes, mesh.triangles, np.arange(mesh.n_triangles), segs, ids, mesh.network)


def neighborhood_patch(mesh, nb) -> Patch:
    segs = np.searchsorted(nb.nodes, mesh.edges[nb.fracture_edges]) if len(nb.fracture_edges) \
        else np.zeros((0, 2), int)
    return Patch(mesh.nodes[nb.nodes], nb.local_triangles, nb.triangles, segs, nb.fracture_ids, mesh.network)


# ---------------------------------------------------------------- kernels

def _geometry(coords, tris):
    p = coords[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    # gradients of barycentric coordinates
    g = np.empty((len(tris), 3, 2))
    g[:, 0] = np.column_stack([p[:, 1, 1] - p[:, 2, 1], p[:, 2, 0] - p[:, 1, 0]])
    g[:, 1] = np.column_stack([p[:, 2, 1] - p[:, 0, 1], p[:, 0, 0] - p[:, 2, 0]])
    g[:, 2] = np.column_stack([p[:, 0, 1] - p[:, 1, 1], p[:, 1, 0] - p[:, 0, 0]])
    g /= (2.0 * area)[:, None, None]
    return area, g


def _scatter(conn, local, n, offset_r=0, offset_c=0):
    k = conn.shape[1]
    rows = np.repeat(conn, k, axis=1).ravel() + offset_r
    cols = np.tile(conn, (1, k)).ravel() + offset_c
    return rows, cols, local.reshape(len(conn), -1).ravel()


def tri_mass(patch: Patch, weight) -> tuple:
    area, _ = _geometry(patch.coords, patch.tris)
    w = np.broadcast_to(np.asarray(weight, float), area.shape)
    local = (w * area)[:, None, None] * _REF_MASS
    return _scatter(patch.tris, local, patch.n)


def tri_stiffness(patch: Patch, weight) -> tuple:
    area, g = _geometry(patch.coords, patch.tris)
    w = np.broadcast_to(np.asarray(weight, float), area.shape)
    local = (w * area)[:, None, None] * np.einsum("tik,tjk->tij", g, g)
    return _scatter(patch.tris, local, patch.n)


def seg_mass(patch: Patch, weight) -> tuple:
    if len(patch.segs) == 0:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    L = np.linalg.norm(patch.coords[patch.segs[:, 1]] - patch.coords[patch.segs[:, 0]], axis=1)
    local = (np.asarray(weight, float) * L)[:, None, None] * _LINE_MASS
    return _scatter(patch.segs, local, patch.n)


def seg_stiffness(patch: Patch, weight) -> tuple:
    if len(patch.segs) == 0:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    L = np.linalg.norm(patch.coords[patch.segs[:, 1]] - patch.coords[patch.segs[:, 0]], axis=1)
    local = (np.asarray(weight, float) / L)[:, None, None] * _LINE_STIFF
    return _scatter(patch.segs, local, patch.n)


def _fracture_attr(patch: Patch, name: str) -> np.ndarray:
    fr = patch.network.fractures
    return np.array([getattr(fr[s], name) for s in patch.seg_frac], dtype=float)


def _block(n, parts):
    """Assemble a 3n x 3n CSR matrix from (row_block, col_block, (rows, cols, vals)) triples."""
    R, C, V = [], [], []
    for bi, bj, (r, c, v) in parts:
        R.append(r + bi * n)
        C.append(c + bj * n)
        V.append(v)
    if not R:
        return sp.csr_matrix((N_CONT * n, N_CONT * n))
    A = sp.coo_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))),
                      shape=(N_CONT * n, N_CONT * n))
    A = A.tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _nodal_lag(w, n):
    if w is None:
        return None
    w = np.asarray(w, dtype=float)
    return w.reshape(N_CONT, n) if w.ndim == 1 else w


# ---------------------------------------------------------------- operators

def mass(patch: Patch, model: Model) -> sp.csr_matrix:
    """b(u, v): storage-weighted P1 mass per continuum plus aperture-scaled fracture mass."""
    fluid = model.fluid
    parts = []
    if len(patch.segs):
        bF = _fracture_attr(patch, "porosity") * fluid.c / fluid.B0 * _fracture_attr(patch, "aperture")
    for i, bi in enumerate(model.storage):
        parts.append((i, i, tri_mass(patch, bi)))
        if len(patch.segs):
            parts.append((i, i, seg_mass(patch, bF)))
    return _block(patch.n, parts)


def stiffness(patch: Patch, model: Model, w=None, unit_alpha: bool = False) -> sp.csr_matrix:
    """a(u, v; w) for continua m and f; the vug block is identically zero.

    ``alpha`` is evaluated per triangle from the mean nodal lag pressure (per edge
    on fractures).  ``w=None`` freezes alpha at the reference pressure (1/mu);
    ``unit_alpha`` drops alpha altogether (the seminorm |.|_a).
    """
    w = _nodal_lag(w, patch.n)
    fluid = model.fluid
    perms = model.permeabilities
    dk = _fracture_attr(patch, "aperture") * _fracture_attr(patch, "permeability") if len(patch.segs) else None
    parts = []
    for i in range(N_CONT - 1):
        if unit_alpha:
            a_t, a_s = 1.0, 1.0
        elif w is None:
            a_t = a_s = 1.0 / fluid.mu
        else:
            a_t = alpha(w[i][patch.tris].mean(axis=1), fluid)
            a_s = alpha(w[i][patch.segs].mean(axis=1), fluid) if len(patch.segs) else 1.0
            if np.any(a_t <= 0) or np.any(np.asarray(a_s) <= 0):
                raise SingularStateError(
                    f"mobility 1 + c(u - u0) <= 0 in continuum {CONTINUA[i]!r}: pressure fell below u0 - 1/c")
        parts.append((i, i, tri_stiffness(patch, perms[i][patch.tri_ids] * a_t)))
        if dk is not None:
            parts.append((i, i, seg_stiffness(patch, dk * a_s)))
    return _block(patch.n, parts)


def exchange(patch: Patch, model: Model) -> sp.csr_matrix:
    """q(u, v) = sum_i sum_{j != i} q_ij (u_i - u_j, v_i) with consistent P1 mass."""
    q = model.exchange.q
    parts = []
    for i in range(N_CONT):
        for j in range(N_CONT):
            if i == j:
                continue
            r, c, v = tri_mass(patch, q[i, j][patch.tri_ids])
            parts.append((i, i, (r, c, v)))
            parts.append((i, j, (r, c, -v)))
    Q = _block(patch.n, parts)
    # duplicate summation order differs between mirrored entries; make symmetry exact
    return ((Q + Q.T) * 0.5).tocsr()


def spectral_mass(patch: Patch, model: Model) -> sp.csr_matrix:
    """s(u, v) = (1/mu) sum_i (kappa_i u_i, v_i), fractures weighted by d * kappa_F."""
    mu = model.fluid.mu
    dk = _fracture_attr(patch, "aperture") * _fracture_attr(patch, "permeability") if len(patch.segs) else None
    parts = []
    for i, k in enumerate(model.permeabilities):
        parts.append((i, i, tri_mass(patch, k[patch.tri_ids] / mu)))
        if dk is not None:
            parts.append((i, i, seg_mass(patch, dk / mu)))
    return _block(patch.n, parts)


def assemble_mass(mesh, model: Model) -> sp.csr_matrix:
    return mass(mesh_patch(mesh), model)


def assemble_stiffness(mesh, model: Model, w=None, unit_alpha: bool = False) -> sp.csr_matrix:
    return stiffness(mesh_patch(mesh), model, w, unit_alpha)


def assemble_exchange(mesh, model: Model) -> sp.csr_matrix:
    return exchange(mesh_patch(mesh), model)


def assemble_spectral_mass(mesh, model: Model) -> sp.csr_matrix:
    return spectral_mass(mesh_patch(mesh), model)


def l2_mass(mesh) -> sp.csr_matrix:
    """Unweighted scalar P1 mass matrix (n x n)."""
    r, c, v = tri_mass(mesh_patch(mesh), 1.0)
    M = sp.coo_matrix((v, (r, c)), shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()
    M.sum_duplicates()
    return M


# ---------------------------------------------------------------- loads

@dataclass(frozen=True)
class Well:
    location: tuple[float, float]
    rate: float
    continuum: int = 0


def assemble_load(mesh, wells=(), densities=None, neumann=None) -> np.ndarray:
    """Right-hand side of length 3n.

    ``densities`` maps continuum index to a per-triangle source density;
    ``neumann`` maps side name to an outward flux g (-kappa/mu du/dn = g),
    applied to the flowing continua m and f.
    """
    n = mesh.n_nodes
    F = np.zeros(N_CONT * n)
    for well in wells:
        t, lam = mesh.locate(well.location)
        F[well.continuum * n + mesh.triangles[t]] += well.rate * lam
    if densities:
        area = mesh.areas
        for i, f in densities.items():
            f = np.broadcast_to(np.asarray(f, float), area.shape)
            np.add.at(F, i * n + mesh.triangles.ravel(), np.repeat(f * area / 3.0, 3))
    if neumann:
        for side, g in neumann.items():
            if g == 0:
                continue
            nodes = mesh.boundary[side]
            seg = np.column_stack([nodes[:-1], nodes[1:]])
            L = np.linalg.norm(mesh.nodes[seg[:, 1]] - mesh.nodes[seg[:, 0]], axis=1)
            for i in range(N_CONT - 1):
                np.add.at(F, i * n + seg.ravel(), np.repeat(-g * L / 2.0, 2))
    return F


# ---------------------------------------------------------------- boundary conditions

@dataclass(frozen=True, eq=False)
class DofMap:
    n: int
    dirichlet: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        d = np.asarray(self.dirichlet, dtype=np.int64)
        v = np.broadcast_to(np.asarray(self.values, float), d.shape).copy()
        if np.any(d < 0) or np.any(d >= self.size):
            raise IndexError("Dirichlet DOF outside the system")
        d, idx = np.unique(d, return_index=True)
        object.__setattr__(self, "dirichlet", d)
        object.__setattr__(self, "values", v[idx])

    @property
    def size(self) -> int:
        return N_CONT * self.n

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.size, bool)
        mask[self.dirichlet] = False
        return np.flatnonzero(mask)

    def lifting(self) -> np.ndarray:
        g = np.zeros(self.size)
        g[self.dirichlet] = self.values
        return g

    def expand(self, x_free) -> np.ndarray:
        x = self.lifting()
        x[self.free] = x_free
        return x


def dirichlet_dofmap(mesh, sides: dict) -> DofMap:
    """Dirichlet DOFs for every continuum on the given sides (side -> value)."""
    n = mesh.n_nodes
    dofs, vals = [], []
    for side, value in sides.items():
        nodes = mesh.boundary[side]
        for i in range(N_CONT):
            dofs.append(i * n + nodes)
            vals.append(np.full(len(nodes), float(value)))
    if not dofs:
        return DofMap(n)
    return DofMap(n, np.concatenate(dofs), np.concatenate(vals))


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    M: sp.csr_matrix
    K: sp.csr_matrix
    Q: sp.csr_matrix
    F: np.ndarray


def apply_dirichlet(A, b, dofmap: DofMap):
    """Symmetric elimination: returns ``(A_ff, b_f - A_fd g_d)``."""
    A = sp.csr_matrix(A)
    free, dir_ = dofmap.free, dofmap.dirichlet
    if len(dir_) == 0:
        return A, np.asarray(b, float).copy()
    A_ff = A[free][:, free]
    rhs = np.asarray(b, float)[free] - A[free][:, dir_] @ dofmap.values
    return A_ff, rhs
