"""Dense symmetric eigensolvers and semidefinite tests.

Everything here works on small dense matrices (problem sizes are tens at
most). The eigensolver is a cyclic Jacobi iteration, which is unconditionally
stable for symmetric input and keeps the package free of LAPACK wrappers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Relative off-diagonal Frobenius mass at which Jacobi is converged.
JACOBI_TOL = 1e-13
# Hard cap on full Jacobi sweeps.
MAX_SWEEPS = 50
# Default relative tolerance for semidefinite comparisons.
PSD_TOL = 1e-9
# Relative asymmetry accepted before symmetrizing.
SYMMETRY_TOL = 1e-12


class NotConvergedError(RuntimeError):
    """The Jacobi iteration did not reach the off-diagonal threshold."""


class NotPositiveDefiniteError(ValueError):
    """A matrix required to be positive definite is not."""


def frobenius(a) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float)))


def as_square_symmetric(a, name: str = "matrix") -> np.ndarray:
    """Validate and symmetrize a square matrix; returns (A + A^T)/2."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    scale = frobenius(a)
    if frobenius(a - a.T) > SYMMETRY_TOL * max(1.0, scale):
        raise ValueError(f"{name} is not symmetric within {SYMMETRY_TOL} of its scale")
    return (a + a.T) / 2.0


@dataclass(frozen=True)
class SymEigResult:
    """Eigendecomposition A = Q diag(w) Q^T with w ascending, Q orthonormal."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q, w = self.eigenvectors, self.eigenvalues
        return q @ np.diag(w) @ q.T


def _normalize_column_signs(q: np.ndarray) -> np.ndarray:
    # Fix each eigenvector's sign by its largest-magnitude entry (first on
    # ties) so results are deterministic across runs.
    q = q.copy()
    for j in range(q.shape[1]):
        col = q[:, j]
        i = int(np.argmax(np.abs(col)))
        if col[i] < 0:
            q[:, j] = -col
    return q


def sym_eig(a) -> SymEigResult:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations."""
    a = as_square_symmetric(a, "sym_eig input")
    n = a.shape[0]
    scale = frobenius(a)
    q = np.eye(n)
    if n == 1 or scale == 0.0:
        w = np.diag(a).copy()
        order = np.argsort(w, kind="stable")
        return SymEigResult(w[order], _normalize_column_signs(q[:, order]))

    a = a.copy()
    threshold = JACOBI_TOL * scale
    for _ in range(MAX_SWEEPS):
        off = frobenius(a - np.diag(np.diag(a)))
        if off < threshold:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = a[p, r]
                if abs(apr) <= 0.0:
                    continue
                # Classic two-sided rotation choosing the smaller angle.
                tau = (a[r, r] - a[p, p]) / (2.0 * apr)
                t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.hypot(1.0, t)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, r]
                rot_r = s * a[:, p] + c * a[:, r]
                a[:, p], a[:, r] = rot_p, rot_r
                rot_p = c * a[p, :] - s * a[r, :]
                rot_r = s * a[p, :] + c * a[r, :]
                a[p, :], a[r, :] = rot_p, rot_r
                # Zero the target pair explicitly to cut round-off drift.
                a[p, r] = a[r, p] = 0.0
                rot_p = c * q[:, p] - s * q[:, r]
                rot_r = s * q[:, p] + c * q[:, r]
                q[:, p], q[:, r] = rot_p, rot_r
    else:
        raise NotConvergedError(f"Jacobi did not converge in {MAX_SWEEPS} sweeps")

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return SymEigResult(w[order], _normalize_column_signs(q[:, order]))


def cholesky(p, min_pivot: float = 0.0) -> np.ndarray:
    """Lower-triangular L with L L^T = P. Raises if a pivot is <= min_pivot."""
    p = as_square_symmetric(p, "cholesky input")
    n = p.shape[0]
    lower = np.zeros_like(p)
    for j in range(n):
        pivot = p[j, j] - float(lower[j, :j] @ lower[j, :j])
        if pivot <= min_pivot:
            raise NotPositiveDefiniteError(
                f"pivot {pivot:.3e} at index {j} signals an indefinite matrix"
            )
        lower[j, j] = math.sqrt(pivot)
        for i in range(j + 1, n):
            lower[i, j] = (p[i, j] - float(lower[i, :j] @ lower[j, :j])) / lower[j, j]
    return lower


def gen_sym_eig(s, p) -> np.ndarray:
    """Ascending generalized eigenvalues of (S, P) for symmetric S, SPD P.

    Reduced to an ordinary symmetric problem through P = L L^T:
    eig(L^-1 S L^-T).
    """
    s = as_square_symmetric(s, "gen_sym_eig S")
    p = as_square_symmetric(p, "gen_sym_eig P")
    if s.shape != p.shape:
        raise ValueError(f"dimension mismatch: S is {s.shape}, P is {p.shape}")
    p_scale = frobenius(p)
    if sym_eig(p).eigenvalues[0] <= 1e-12 * p_scale:
        raise NotPositiveDefiniteError("P is not positive definite at the working tolerance")
    lower = cholesky(p)
    x = np.linalg.solve(lower, s)
    m = np.linalg.solve(lower, x.T).T
    return sym_eig((m + m.T) / 2.0).eigenvalues


def psd_check(m, tol: float = PSD_TOL) -> bool:
    """True iff lambda_min(M) >= -tol * max(1, ||M||_F)."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    m = as_square_symmetric(m, "psd_check input")
    lam_min = sym_eig(m).eigenvalues[0]
    return bool(lam_min >= -tol * max(1.0, frobenius(m)))
