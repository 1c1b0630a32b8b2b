"""Discrete-time algebraic Riccati equation solver and stability helpers.

Solves the control-form equation

    X = A'XA - A'XB (R + B'XB)^{-1} B'XA + Q

with the structured doubling algorithm, followed by a short fixed-point
polish on the Riccati map.  The filter-form equation is obtained by
duality: ``solve_dare(A.T, H.T, W, N)`` returns the a-priori error
covariance of the steady-state Kalman filter.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, IllConditioned, NonConvergence, NonFinite

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000

_POLISH_STEPS = 50


def _as_matrix(name, value):
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class DareProblem:
    """Validated inputs of a DARE.

    ``B`` is the input map in control form and the transposed output map
    in filter form; ``Q``/``R`` are cost weights or noise covariances.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        A = _as_matrix("A", self.A)
        B = _as_matrix("B", self.B)
        Q = _as_matrix("Q", self.Q)
        R = _as_matrix("R", self.R)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
        m = B.shape[1]
        if Q.shape != (n, n):
            raise DimensionMismatch(f"Q must be {n}x{n}, got {Q.shape}")
        if R.shape != (m, m):
            raise DimensionMismatch(f"R must be {m}x{m}, got {R.shape}")
        if not np.allclose(Q, Q.T, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise ValueError("Q must be symmetric")
        if not np.allclose(R, R.T, atol=1e-12 * max(1.0, np.abs(R).max())):
            raise ValueError("R must be symmetric")
        if np.linalg.eigvalsh(0.5 * (R + R.T)).min() <= 0.0:
            raise IllConditioned("R must be positive definite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "R", 0.5 * (R + R.T))

    @property
    def n(self):
        return self.A.shape[0]


def riccati_map(problem, X):
    """One application of the Riccati operator to ``X``."""
    A, B, Q, R = problem.A, problem.B, problem.Q, problem.R
    XA = X @ A
    XB = X @ B
    S = R + B.T @ XB
    if np.linalg.cond(S) > 1e13:
        raise IllConditioned("R + B'XB is numerically singular")
    gain = np.linalg.solve(S, XB.T @ A)
    out = A.T @ XA - (A.T @ XB) @ gain + Q
    return 0.5 * (out + out.T)


def dare_residual(problem, X):
    """Frobenius norm of ``X - riccati_map(X)``."""
    return float(np.linalg.norm(X - riccati_map(problem, X), "fro"))


def solve_dare(A, B, Q, R, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Stabilizing solution of the discrete algebraic Riccati equation.

    Args:
        A: state matrix (n x n).
        B: input matrix (n x m).
        Q: symmetric PSD state weight (n x n).
        R: symmetric PD input weight (m x m).
        tol: residual bound, scaled by ``max(1, ||X||_F)``.
        max_iter: doubling iteration cap.

    Returns:
        Symmetric PSD matrix X.

    Raises:
        NonConvergence: the iteration cap was reached with the residual
            still above ``tol``.
        IllConditioned: ``R + B'XB`` became numerically singular.
        DimensionMismatch: inconsistent shapes.
    """
    problem = A if isinstance(A, DareProblem) else DareProblem(A, B, Q, R)
    n = problem.n
    eye = np.eye(n)

    Ak = problem.A.copy()
    Gk = problem.B @ np.linalg.solve(problem.R, problem.B.T)
    Gk = 0.5 * (Gk + Gk.T)
    Hk = problem.Q.copy()

    converged = False
    for _ in range(max_iter):
        M = eye + Gk @ Hk
        if np.linalg.cond(M) > 1e14:
            raise IllConditioned("doubling step matrix I + GH is singular")
        MA = np.linalg.solve(M, Ak)
        MG = np.linalg.solve(M, Gk)
        H_next = Hk + Ak.T @ Hk @ MA
        G_next = Gk + Ak @ MG @ Ak.T
        Ak = Ak @ MA
        H_next = 0.5 * (H_next + H_next.T)
        Gk = 0.5 * (G_next + G_next.T)
        if not np.all(np.isfinite(H_next)):
            raise NonConvergence("doubling iteration diverged (unstabilizable pair?)")
        delta = np.linalg.norm(H_next - Hk, "fro")
        if not np.isfinite(delta):
            raise NonConvergence("doubling iteration diverged (unstabilizable pair?)")
        Hk = H_next
        if delta <= 1e-3 * tol * max(1.0, np.linalg.norm(Hk, "fro")):
            converged = True
            break

    X = Hk
    scale = max(1.0, np.linalg.norm(X, "fro"))
    residual = dare_residual(problem, X)
    # Fixed-point polish removes the roundoff left by doubling.
    for _ in range(_POLISH_STEPS):
        if residual <= 1e-2 * tol * scale:
            break
        X_next = riccati_map(problem, X)
        next_residual = dare_residual(problem, X_next)
        if next_residual >= residual:
            break
        X, residual = X_next, next_residual

    if not np.isfinite(residual):
        raise NonConvergence("Riccati residual is not finite (unstabilizable pair?)")
    if not converged and residual > tol * scale:
        raise NonConvergence(
            f"DARE residual {residual:.3e} above tolerance after {max_iter} iterations"
        )
    if residual > tol * scale:
        raise NonConvergence(f"DARE residual {residual:.3e} above tolerance {tol:.1e}")
    return X


def spectral_radius(M):
    """Largest eigenvalue magnitude of a square matrix."""
    arr = np.atleast_2d(np.asarray(M, dtype=float))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("matrix has non-finite entries")
    return float(np.max(np.abs(np.linalg.eigvals(arr))))


def closed_loop_matrix(A, B, R, X):
    """``A - B (R + B'XB)^{-1} B'XA`` for a control-form solution X."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    gain = np.linalg.solve(R + B.T @ X @ B, B.T @ X @ A)
    return A - B @ gain
