"""Sparse SPD solves and dense generalized symmetric eigenproblems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


DENSE_CUTOFF = 200


def pcg(A, b, tol=1e-10, maxiter=None, x0=None):
    """Conjugate gradients with a Jacobi preconditioner.  Returns ``(x, iterations)``."""
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = len(b)
    maxiter = 10 * n if maxiter is None else maxiter
    d = A.diagonal()
    if np.any(d <= 0):
        raise NotPositiveDefiniteError("non-positive diagonal entry: matrix is not SPD")
    inv_d = 1.0 / d
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), 0
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise NotPositiveDefiniteError("p^T A p <= 0: matrix is not SPD")
        a = rz / pAp
        x += a * p
        r -= a * Ap
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(b - A @ x) / bnorm
    raise ConvergenceError(f"PCG did not converge in {maxiter} iterations (relative residual {res:.3e})", res)


def solve_spd(A, b, tol=1e-10, method="auto"):
    """Solve ``A x = b`` for SPD ``A`` and verify ``||Ax - b|| <= tol ||b||``.

    ``method`` is one of ``auto`` (dense Cholesky below 200 unknowns, PCG above),
    ``cg``, ``dense`` or ``direct`` (sparse LU).
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    if n == 0:
        return np.zeros(0)
    if method == "auto":
        method = "dense" if n < DENSE_CUTOFF else "cg"
    if method == "dense":
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        try:
            x = scipy.linalg.cho_solve(scipy.linalg.cho_factor(Ad), b)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(str(exc)) from exc
    elif method == "cg":
        x, _ = pcg(A, b, tol=tol)
    elif method == "direct":
        x = spla.splu(sp.csc_matrix(A)).solve(b)
    else:
        raise ValueError(f"unknown method {method!r}")
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(A @ x - b)
    if res > tol * bnorm:
        raise ConvergenceError(f"solve residual {res / bnorm:.3e} exceeds tolerance {tol:.1e}", res / bnorm)
    return x


# ---------------------------------------------------------------- eigenproblems

@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    values: np.ndarray   # ascending
    vectors: np.ndarray  # columns, S-orthonormal

    def __len__(self):
        return len(self.values)


def _round_robin(n):
    """Pairings for one parallel Jacobi sweep over n (even) indices."""
    idx = list(range(n))
    rounds = []
    for _ in range(n - 1):
        rounds.append((np.array(idx[: n // 2]), np.array(idx[n // 2:][::-1])))
        idx = [idx[0]] + [idx[-1]] + idx[1:-1]
    return rounds


def jacobi_eigh(A, rel_tol=1e-15, max_sweeps=60):
    """Symmetric eigendecomposition by cyclic Jacobi rotations (parallel ordering).

    A pair is rotated while ``|a_pq| > rel_tol * sqrt(|a_pp a_qq|)``, which
    keeps small eigenvalues relatively accurate.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    A = 0.5 * (A + A.T)
    if n == 1:
        return A.diagonal().copy(), np.ones((1, 1))
    pad = n % 2
    if pad:
        A = np.pad(A, ((0, 1), (0, 1)))
    m = A.shape[0]
    V = np.eye(m)
    if not np.any(A):
        return np.zeros(n), np.eye(n)
    tiny = np.finfo(float).tiny / np.finfo(float).eps
    rounds = _round_robin(m)
    for _ in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            apq = A[p, q]
            app, aqq = A[p, p], A[q, q]
            active = np.abs(apq) > np.maximum(rel_tol * np.sqrt(np.abs(app * aqq)), tiny)
            if not active.any():
                continue
            rotated = True
            p, q, apq, app, aqq = p[active], q[active], apq[active], app[active], aqq[active]
            tau = (aqq - app) / (2.0 * apq)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            c = 1.0 / np.hypot(1.0, t)
            s = t * c
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = c * Ap - s * Aq
            A[:, q] = s * Ap + c * Aq
            Ap, Aq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * Ap - s[:, None] * Aq
            A[q, :] = s[:, None] * Ap + c[:, None] * Aq
            A[p, q] = 0.0
            A[q, p] = 0.0
            Vp, Vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = c * Vp - s * Vq
            V[:, q] = s * Vp + c * Vq
        if not rotated:
            break
    else:
        raise ConvergenceError("Jacobi eigensolver did not converge")
    w = np.diag(A)[:n].copy()
    V = V[:n, :n]
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def _standard_eigh(C, method):
    if method == "jacobi":
        return jacobi_eigh(C)
    if method == "lapack":
        return scipy.linalg.eigh(0.5 * (C + C.T))
    raise ValueError(f"unknown eigensolver {method!r}")


def gen_eig_sym(A, S, method="jacobi") -> EigenDecomposition:
    """All eigenpairs of ``A x = lam S x`` via ``S = L L^T`` and a symmetric solve.

    Vectors are S-orthonormal and eigenvalues ascending.
    """
    A = np.asarray(A, dtype=float)
    S = np.asarray(S, dtype=float)
    try:
        L = np.linalg.cholesky(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            "S is not positive definite; regularize the snapshot space "
            "(drop near-dependent snapshot directions) before the generalized solve") from exc
    Linv_A = scipy.linalg.solve_triangular(L, A, lower=True)
    C = scipy.linalg.solve_triangular(L, Linv_A.T, lower=True)
    w, Y = _standard_eigh(0.5 * (C + C.T), method)
    X = scipy.linalg.solve_triangular(L.T, Y, lower=False)
    return EigenDecomposition(w, X)


def filtered_gen_eig(A, S, rel_cut=1e-12, cond_limit=1e12, method="jacobi") -> EigenDecomposition:
    """Generalized solve with the S-conditioning filter.

    When cond(S) exceeds ``cond_limit`` the problem is restricted to the span of
    S-eigendirections above ``rel_cut * max``; returned vectors stay in the
    original coordinates.
    """
    A = np.asarray(A, dtype=float)
    S = 0.5 * (np.asarray(S, dtype=float) + np.asarray(S, dtype=float).T)
    s, U = scipy.linalg.eigh(S)
    smax = s[-1]
    if smax <= 0:
        raise NotPositiveDefiniteError("S has no positive directions")
    if s[0] > smax / cond_limit:
        return gen_eig_sym(A, S, method)
    keep = s > rel_cut * smax
    W = U[:, keep] / np.sqrt(s[keep])
    C = W.T @ A @ W
    w, Y = _standard_eigh(0.5 * (C + C.T), method)
    return EigenDecomposition(w, W @ Y)


# ---------------------------------------------------------------- debug io

def write_matrix_market(path, A):
    scipy.io.mmwrite(str(path), sp.coo_matrix(A) if sp.issparse(A) else np.asarray(A))


def read_matrix_market(path):
    return scipy.io.mmread(str(path))
