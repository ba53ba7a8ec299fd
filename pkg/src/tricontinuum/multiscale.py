"""GMsFEM space: coupled snapshots, local spectral selection, PoU localisation.

Also builds the one-basis-per-node-per-continuum MsFEM baseline.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly as asm
from .geometry import CoarseGrid, Neighborhood, neighborhood, partition_of_unity
from .linalg import EigenDecomposition, filtered_gen_eig
from .physics import Model

N_CONT = asm.N_CONT


class SnapshotError(RuntimeError):
    pass


def _local_dofs(ids, n):
    return np.concatenate([i * n + np.asarray(ids) for i in range(N_CONT)])


def _harmonic_extension(A, constrained, data):
    """Fill the unconstrained rows of ``A X = 0`` given ``X[constrained] = data``."""
    size = A.shape[0]
    free = np.setdiff1d(np.arange(size), constrained)
    X = np.zeros((size, data.shape[1]))
    X[constrained] = data
    if len(free):
        A_ff = sp.csc_matrix(A[free][:, free])
        try:
            lu = spla.splu(A_ff)
        except RuntimeError as exc:
            raise SnapshotError(f"singular local system ({exc}); the submesh may be disconnected") from exc
        rhs = -(A[free][:, constrained] @ data)
        X[free] = lu.solve(np.asarray(rhs))
        if not np.all(np.isfinite(X)):
            raise SnapshotError("singular local system; the submesh may be disconnected")
    return X


@dataclass(frozen=True, eq=False)
class SnapshotSpace:
    """Coupled harmonic extensions of unit boundary data on one neighborhood.

    Column ``s * nB + k`` carries ``e_s`` at boundary node ``k`` (local DOF
    layout ``continuum * n_loc + node``).
    """
    neighborhood: Neighborhood
    patch: asm.Patch
    operator: sp.csr_matrix   # a_omega at frozen alpha = 1/mu
    columns: np.ndarray

    @property
    def dim(self) -> int:
        return self.columns.shape[1]

    @property
    def boundary_dofs(self) -> np.ndarray:
        return _local_dofs(self.neighborhood.boundary, self.patch.n)

    @property
    def interior_dofs(self) -> np.ndarray:
        return _local_dofs(self.neighborhood.interior, self.patch.n)

    def interior_residual(self) -> float:
        R = self.operator @ self.columns
        scale = abs(self.operator).max() * max(np.abs(self.columns).max(), 1.0)
        return float(np.abs(R[self.interior_dofs]).max() / scale) if len(self.interior_dofs) else 0.0


def local_operator(patch: asm.Patch, model: Model) -> sp.csr_matrix:
    return (asm.stiffness(patch, model) + asm.exchange(patch, model)).tocsr()


def solve_snapshots(mesh, nb: Neighborhood, model: Model) -> SnapshotSpace:
    patch = asm.neighborhood_patch(mesh, nb)
    A = local_operator(patch, model)
    bdofs = _local_dofs(nb.boundary, patch.n)
    X = _harmonic_extension(A, bdofs, np.eye(len(bdofs)))
    return SnapshotSpace(nb, patch, A, X)


@dataclass(frozen=True, eq=False)
class LocalModes:
    neighborhood: Neighborhood
    eigenvalues: np.ndarray  # every eigenvalue of the projected problem, ascending
    fields: np.ndarray       # (3 n_loc, n_kept) fine-scale eigenfunctions, s-orthonormal


def local_spectral(snap: SnapshotSpace, model: Model, n_modes: int, method: str = "jacobi",
                   pin_constant: bool = True) -> LocalModes:
    """Solve a_omega(psi, v) = lam s_omega(psi, v) on the snapshot span.

    The zero mode is the constant coupled field; with ``pin_constant`` the
    computed first eigenfunction is replaced by the exact normalised constant.
    """
    if n_modes > snap.dim:
        raise ValueError(f"requested {n_modes} modes but the snapshot space has dimension {snap.dim}")
    S = asm.spectral_mass(snap.patch, model)
    Phi = snap.columns
    A_s = Phi.T @ (snap.operator @ Phi)
    S_s = Phi.T @ (S @ Phi)
    eig = filtered_gen_eig(A_s, S_s, method=method)
    if n_modes > len(eig.values):
        raise ValueError(f"requested {n_modes} modes but only {len(eig.values)} survive conditioning")
    fields = Phi @ eig.vectors[:, :n_modes]
    if pin_constant and n_modes:
        one = np.ones(Phi.shape[0])
        one /= np.sqrt(one @ (S @ one))
        if abs(fields[:, 0] @ (S @ one)) > 1.0 - 1e-6:
            fields[:, 0] = one
    return LocalModes(snap.neighborhood, eig.values, fields)


def compute_local_modes(grid: CoarseGrid, model: Model, n_modes: int, method: str = "jacobi") -> list[LocalModes]:
    out = []
    for i in range(grid.n_nodes):
        nb = neighborhood(grid, i)
        snap = solve_snapshots(grid.mesh, nb, model)
        out.append(local_spectral(snap, model, min(n_modes, snap.dim), method=method))
    return out


@dataclass(frozen=True, eq=False)
class MultiscaleSpace:
    """Coarse space given by its prolongation P (3n x dim)."""
    P: sp.csc_matrix
    counts: tuple[int, ...]
    Lambda: float = np.nan
    eigenvalues: tuple = ()

    @property
    def dim(self) -> int:
        return self.P.shape[1]

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.counts)])


def _prolongation(mesh, columns, chi=None):
    """Assemble P from per-neighborhood (node ids, local fields) pairs."""
    n = mesh.n_nodes
    rows, cols, vals = [], [], []
    col = 0
    for nodes, fields, weight in columns:
        gdofs = _local_dofs(nodes, n)
        w = np.tile(weight, N_CONT) if weight is not None else 1.0
        for k in range(fields.shape[1]):
            v = fields[:, k] * w
            nz = np.flatnonzero(v)
            rows.append(gdofs[nz])
            cols.append(np.full(len(nz), col))
            vals.append(v[nz])
            col += 1
    if col == 0:
        return sp.csc_matrix((N_CONT * n, 0))
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(N_CONT * n, col))


def build_space(grid: CoarseGrid, modes: list[LocalModes], chi=None, n_basis=None,
                threshold: float | None = None) -> MultiscaleSpace:
    """Localise the first ``n_basis`` eigenfunctions per neighborhood with the PoU.

    With ``threshold`` set, each neighborhood keeps the modes with eigenvalue
    below it (at least one) instead of a uniform count.
    """
    chi = partition_of_unity(grid) if chi is None else chi
    counts, cols, Lam = [], [], np.inf
    for i, m in enumerate(modes):
        avail = m.fields.shape[1]
        if threshold is not None:
            L = max(1, int(np.sum(m.eigenvalues[:avail] < threshold)))
        else:
            L = avail if n_basis is None else min(n_basis, avail)
        if L < len(m.eigenvalues):
            Lam = min(Lam, m.eigenvalues[L])
        counts.append(L)
        cols.append((m.neighborhood.nodes, m.fields[:, :L], chi[i][m.neighborhood.nodes]))
    P = _prolongation(grid.mesh, cols)
    return MultiscaleSpace(P, tuple(counts), float(Lam), tuple(m.eigenvalues for m in modes))


def msfem_space(grid: CoarseGrid, model: Model, chi=None) -> MultiscaleSpace:
    """Coupled MsFEM basis: per coarse node and continuum, the harmonic extension
    of ``chi_i e_s`` from the coarse skeleton into each block of the neighborhood."""
    mesh = grid.mesh
    chi = partition_of_unity(grid) if chi is None else chi
    skel = np.zeros(mesh.n_nodes, bool)
    skel[grid.skeleton_nodes] = True
    cols = []
    for i in range(grid.n_nodes):
        nb = neighborhood(grid, i)
        patch = asm.neighborhood_patch(mesh, nb)
        A = local_operator(patch, model)
        c_loc = np.flatnonzero(skel[nb.nodes])
        cdofs = _local_dofs(c_loc, patch.n)
        data = np.zeros((len(cdofs), N_CONT))
        vals = chi[i][nb.nodes[c_loc]]
        for s in range(N_CONT):
            data[s * len(c_loc):(s + 1) * len(c_loc), s] = vals
        X = _harmonic_extension(A, cdofs, data)
        cols.append((nb.nodes, X, None))
    P = _prolongation(mesh, cols)
    return MultiscaleSpace(P, tuple([N_CONT] * grid.n_nodes))


def galerkin_project(P, A):
    """``P^T A P`` for operators, ``P^T F`` for vectors."""
    if sp.issparse(A) or (isinstance(A, np.ndarray) and A.ndim == 2):
        Ac = P.T @ (A @ P)
        return Ac.toarray() if sp.issparse(Ac) else np.asarray(Ac)
    return np.asarray(P.T @ np.asarray(A, float)).ravel()


def downscale(P, coeffs) -> np.ndarray:
    coeffs = np.asarray(coeffs, float)
    if coeffs.shape[0] != P.shape[1]:
        raise ValueError(f"expected {P.shape[1]} coarse coefficients, got {coeffs.shape[0]}")
    return np.asarray(P @ coeffs).ravel() if coeffs.ndim == 1 else np.asarray(P @ coeffs)
