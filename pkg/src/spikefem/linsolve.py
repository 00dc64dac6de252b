"""Conventional solver used as ground truth for every relative-error number.

Plain conjugate gradients, no preconditioner: systems here stay well under a
thousand unknowns and determinism matters more than speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import CsrMatrix


class ConvergenceError(RuntimeError):
    def __init__(self, residual: float, max_iter: int):
        super().__init__(f"CG did not converge within {max_iter} iterations "
                         f"(relative residual {residual:.3e})")
        self.residual = residual
        self.max_iter = max_iter


@dataclass(frozen=True)
class CgConfig:
    tol: float = 1e-10
    max_iter: int = 10_000

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


def _cg(A: CsrMatrix, b: np.ndarray, tol: float, max_iter: int):
    """Run CG from x=0; returns (x, relative residual, iterations used)."""
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return x, 0.0, 0
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    for it in range(1, max_iter + 1):
        Ap = A.matvec(p)
        alpha = rs / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        if np.sqrt(rs_new) <= tol * b_norm:
            return x, np.sqrt(rs_new) / b_norm, it
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, np.sqrt(rs) / b_norm, max_iter


def cg_solve(A: CsrMatrix, b: np.ndarray, cfg: CgConfig | None = None) -> np.ndarray:
    """Solve A x = b to ``cfg.tol`` relative residual; raises ConvergenceError."""
    cfg = cfg or CgConfig()
    b = np.asarray(b, dtype=np.float64)
    if A.n_rows != A.n_cols or b.shape != (A.n_rows,):
        raise ValueError(f"inconsistent dimensions: A is {A.n_rows}x{A.n_cols}, "
                         f"b has shape {b.shape}")
    x, rel_res, _ = _cg(A, b, cfg.tol, cfg.max_iter)
    if rel_res > cfg.tol:
        raise ConvergenceError(rel_res, cfg.max_iter)
    return x


def cg_iterations(A: CsrMatrix, b: np.ndarray, n_iter: int) -> np.ndarray:
    """Best estimate after at most ``n_iter`` CG iterations (no convergence check)."""
    x, _, _ = _cg(A, np.asarray(b, dtype=np.float64), 1e-14, n_iter)
    return x


def residual_norm(A: CsrMatrix, x: np.ndarray, b: np.ndarray) -> float:
    """Euclidean norm of A x - b."""
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if x.shape != (A.n_cols,) or b.shape != (A.n_rows,):
        raise ValueError(f"inconsistent dimensions: A is {A.n_rows}x{A.n_cols}, "
                         f"x has shape {x.shape}, b has shape {b.shape}")
    return float(np.linalg.norm(A.matvec(x) - b))
