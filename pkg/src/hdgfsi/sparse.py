"""Sparse storage and linear solves for the condensed trace system.

Storage is scipy CSR; factorisation is SuperLU with a COLAMD fill-reducing
column ordering, iterative solves use restarted GMRES with an incomplete LU
preconditioner.
"""

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DIRECT_RTOL = 1e-11
BACKWARD_TOL = 1e-14


class SingularMatrixError(ArithmeticError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def csr_from_triplets(rows, cols, vals, shape):
    """Sum duplicate entries and return a canonical CSR matrix.

    Column indices are sorted within each row and explicit zeros dropped.
    """
    a = sp.coo_matrix(
        (np.asarray(vals, dtype=float).ravel(), (np.asarray(rows).ravel(), np.asarray(cols).ravel())),
        shape=shape,
    ).tocsr()
    a.sum_duplicates()
    a.eliminate_zeros()
    a.sort_indices()
    return a


def _relative_residual(a, x, b):
    nb = np.linalg.norm(b)
    return np.linalg.norm(a @ x - b) / nb if nb > 0 else np.linalg.norm(a @ x)


def inf_norm(a):
    return float(abs(a).sum(axis=1).max()) if a.shape[0] else 0.0


def backward_error(a, x, b, norm_a=None):
    """Normwise backward error ||Ax - b|| / (||A||_inf ||x|| + ||b||)."""
    na = inf_norm(a) if norm_a is None else norm_a
    den = na * np.linalg.norm(x) + np.linalg.norm(b)
    return np.linalg.norm(a @ x - b) / den if den > 0 else 0.0


def _locate_zero_pivot(a):
    # dense LU only to name the offending row in the error message
    if a.shape[0] > 4000:
        return None
    p, _, u = scipy.linalg.lu(a.toarray())
    d = np.abs(np.diag(u))
    scale = max(np.abs(u).max(), 1.0)
    bad = np.flatnonzero(d <= 1e-14 * scale)
    if not bad.size:
        return None
    return int(np.argmax(p[:, bad[0]]))


class DirectSolver:
    """LU factorisation kept for repeated solves with the same matrix."""

    def __init__(self, a):
        self.a = sp.csc_matrix(a)
        n, m = self.a.shape
        if n != m:
            raise ValueError(f"matrix must be square, got {self.a.shape}")
        self.n = n
        self.norm = inf_norm(self.a)
        if n == 0:
            self.lu = None
            return
        try:
            self.lu = spla.splu(self.a, permc_spec="COLAMD")
        except RuntimeError as exc:
            row = _locate_zero_pivot(self.a)
            where = f" at row {row}" if row is not None else ""
            raise SingularMatrixError(f"singular pivot{where}: {exc}", row) from None

    def solve(self, b, rtol=DIRECT_RTOL, refine=3, criterion="relative"):
        """Solve with iterative refinement.

        ``criterion="relative"`` requires ``||Ax - b|| / ||b|| <= rtol``;
        ``"backward"`` accepts a normwise backward error below
        ``BACKWARD_TOL`` as well, for ill-conditioned systems where the
        relative residual is limited by ``eps ||A|| ||x|| / ||b||``.
        """
        if criterion not in ("relative", "backward"):
            raise ValueError(f"unknown criterion {criterion!r}")
        b = np.asarray(b, dtype=float)
        if self.n == 0:
            return np.zeros(0)
        if not np.any(b):
            return np.zeros_like(b)
        x = self.lu.solve(b)
        res = _relative_residual(self.a, x, b)
        be = None
        for _ in range(refine + 1):
            if res <= rtol:
                break
            if criterion == "backward":
                be = backward_error(self.a, x, b, self.norm)
                if be <= BACKWARD_TOL:
                    break
            if _ == refine:
                break
            x = x + self.lu.solve(b - self.a @ x)
            res = _relative_residual(self.a, x, b)
            be = None
        if not np.all(np.isfinite(x)):
            raise SingularMatrixError("non-finite solution; matrix numerically singular")
        if res > rtol and criterion == "backward":
            if be is None:
                be = backward_error(self.a, x, b, self.norm)
            if be <= BACKWARD_TOL:
                return x
            raise ConvergenceError(f"direct solve backward error {be:.3e} exceeds {BACKWARD_TOL:.0e}", be)
        if res > rtol:
            raise ConvergenceError(f"direct solve residual {res:.3e} exceeds {rtol:.1e}", res)
        return x


def solve_direct(a, b, rtol=DIRECT_RTOL):
    """Solve ``a x = b`` by sparse LU; relative residual is checked against ``rtol``."""
    return DirectSolver(a).solve(b, rtol=rtol)


class IterativeSolver:
    """ILU-preconditioned GMRES for nonsymmetric systems."""

    def __init__(self, a, tol=1e-10, max_iter=2000, restart=100, drop_tol=1e-5, fill_factor=20):
        self.a = sp.csc_matrix(a)
        self.tol = tol
        self.max_iter = max_iter
        self.restart = restart
        if tol <= 0:
            raise ValueError("tol must be positive")
        n = self.a.shape[0]
        if n == 0:
            self.m = None
            return
        try:
            ilu = spla.spilu(self.a, drop_tol=drop_tol, fill_factor=fill_factor)
            self.m = spla.LinearOperator(self.a.shape, ilu.solve)
        except RuntimeError:
            d = self.a.diagonal()
            d[d == 0] = 1.0
            self.m = sp.diags(1.0 / d)

    def solve(self, b, x0=None):
        b = np.asarray(b, dtype=float)
        if self.a.shape[0] == 0:
            return np.zeros(0)
        if not np.any(b):
            return np.zeros_like(b)
        x, info = spla.gmres(
            self.a, b, x0=x0, rtol=self.tol, atol=0.0, restart=self.restart,
            maxiter=self.max_iter, M=self.m,
        )
        res = _relative_residual(self.a, x, b)
        if res > self.tol * 1.0001:
            raise ConvergenceError(
                f"GMRES stopped (info={info}) at relative residual {res:.3e} > {self.tol:.1e}", res
            )
        return x


def solve_iterative(a, b, tol=1e-10, max_iter=2000):
    return IterativeSolver(a, tol=tol, max_iter=max_iter).solve(b)
