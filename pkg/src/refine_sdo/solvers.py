"""Linear-system oracles with a residual-bounded inexactness contract.

Two routes: a dense factorization solve, and a matrix-free
conjugate-direction iteration on the normal equations M'M u = M'v that
touches the system only through products with M and M' (M'M is never
formed).  The iterative route exists to realize the bounded-residual
regime the interior-point loop is built around: a solve that stops at
``tol_abs`` leaves a Newton residual of exactly that size, and the
orthogonal-subspaces parameterization confines the damage to the
complementarity equation.

Every report re-measures its own residual; nothing downstream trusts
the recurrence-tracked value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import warnings

import numpy as np
import scipy.linalg

from .errors import NonConverged, Singular

# reports re-measure their own residuals, so scipy's accuracy warning
# for ill-conditioned solves is redundant noise here
warnings.filterwarnings("ignore", category=scipy.linalg.LinAlgWarning)
from .symmat import cond_estimate, spectral_norm_power


@dataclass
class SolveReport:
    solution: np.ndarray
    residual_norm: float
    iterations: int
    method: str                    # "direct" | "iterative_normal"
    converged: bool = True
    matvec_count: int = 0


class MatrixOperator:
    """Product-counting wrapper exposing matvec/rmatvec for a dense matrix."""

    def __init__(self, M: np.ndarray):
        self.M = np.asarray(M, dtype=float)
        self.shape = self.M.shape
        self.count = 0

    def matvec(self, x):
        self.count += 1
        return self.M @ x

    def rmatvec(self, x):
        self.count += 1
        return self.M.T @ x


def _as_operator(M):
    if hasattr(M, "matvec") and hasattr(M, "rmatvec"):
        return M
    return MatrixOperator(M)


def solve_direct(M: np.ndarray, v: np.ndarray) -> SolveReport:
    """Factorization-based solve with a recomputed residual."""
    M = np.asarray(M, dtype=float)
    v = np.asarray(v, dtype=float).ravel()
    try:
        u = scipy.linalg.solve(M, v)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise Singular(f"direct solve failed: {exc}") from exc
    if not np.all(np.isfinite(u)):
        raise Singular("direct solve produced non-finite entries")
    res = float(np.linalg.norm(M @ u - v))
    return SolveReport(solution=u, residual_norm=res, iterations=1, method="direct")


def solve_iterative_normal(M, v: np.ndarray, tol_abs: float,
                           max_iter: int | None = None) -> SolveReport:
    """Conjugate directions on the normal equations, matrix-free.

    ``M`` may be a dense array or any object with matvec/rmatvec.
    Terminates when ||M u - v|| <= tol_abs; raises NonConverged (with
    the partial report attached) when max_iter is exhausted first.
    The product budget is 2k + 1 for k iterations, including the final
    residual re-measurement.
    """
    if tol_abs <= 0:
        raise ValueError("tol_abs must be positive")
    op = _as_operator(M)
    v = np.asarray(v, dtype=float).ravel()
    n = op.shape[1]
    if max_iter is None:
        # degree cap ~ 2 kappa log(1/tol_rel); condition estimate needs the
        # dense matrix, pure operators fall back to a dimension multiple
        tol_rel = min(0.5, tol_abs / max(1e-30, float(np.linalg.norm(v))))
        if hasattr(op, "M"):
            kappa = cond_estimate(op.M)
            max_iter = max(n, math.ceil(2.0 * kappa * math.log(1.0 / tol_rel)))
        else:
            max_iter = max(10 * n, math.ceil(2.0 * n * math.log(1.0 / tol_rel)))

    start_count = getattr(op, "count", 0)
    u = np.zeros(n)
    s = v.copy()                      # v - M u, tracked by recurrence
    z = op.rmatvec(s)
    p = z.copy()
    gamma = float(z @ z)
    k = 0
    converged = np.linalg.norm(s) <= tol_abs
    while not converged and k < max_iter:
        w = op.matvec(p)
        denom = float(w @ w)
        if denom == 0.0 or gamma == 0.0:
            break
        alpha = gamma / denom
        u += alpha * p
        s -= alpha * w
        k += 1
        if np.linalg.norm(s) <= tol_abs:
            converged = True
            break
        if k >= max_iter:
            break
        z = op.rmatvec(s)
        gamma_new = float(z @ z)
        p = z + (gamma_new / gamma) * p
        gamma = gamma_new
    res = float(np.linalg.norm(op.matvec(u) - v))
    converged = res <= tol_abs
    report = SolveReport(solution=u, residual_norm=res, iterations=k,
                         method="iterative_normal", converged=converged,
                         matvec_count=getattr(op, "count", 0) - start_count)
    if not converged:
        raise NonConverged(
            f"normal-equations iteration stopped at residual {res:.3e} "
            f"(target {tol_abs:.3e}) after {k} iterations", report=report)
    return report


def newton_tolerance(beta: float, mu: float, M_or_norm) -> float:
    """Solve tolerance beta*mu / ||M|| for the inexact Newton step.

    Pass the assembled system to have its spectral norm estimated by 20
    power iterations (padded by 5% so the implied residual bound is not
    undershot), or pass a known norm directly.
    """
    if not (0.0 < beta < 1.0):
        raise ValueError("beta must lie in (0, 1)")
    if mu <= 0.0:
        raise ValueError("mu must be positive")
    if np.isscalar(M_or_norm):
        norm = float(M_or_norm)
    else:
        norm = 1.05 * spectral_norm_power(np.asarray(M_or_norm, dtype=float), iters=20)
    if norm <= 0.0:
        raise ValueError("system norm must be positive")
    return beta * mu / norm
