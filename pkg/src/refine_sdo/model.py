"""Problem representations, residuals, and central-path neighborhood.

Two forms are supported.  Standard form is the usual trace-constrained
problem over the semidefinite cone:

    min C.X   s.t.  A_i.X = b_i,  X >= 0
    max b'y   s.t.  sum_i y_i A_i + S = C,  S >= 0.

Canonical form replaces the equalities by inequalities ``A_i.X >= b_i``
written with explicit surplus variables,

    min C.X   s.t.  A_i.X - u_i = b_i,  X >= 0, u >= 0
    max b'y   s.t.  sum_i y_i A_i + S = C,  S >= 0, y >= 0,

which is the sense the self-dual embedding needs: its constraint rows
reduce to exactly these at (tau, theta) = (1, 0), and sign feasibility
of the dual multipliers (y >= 0) only works out for the surplus
convention.  Complementarity then pairs (X, S) and (y, u), so the
canonical duality gap is X.S + y'u over dimension n + m.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import DimMismatch, NotPositiveDefinite, RankDeficient
from .symmat import SymMat, min_eig, mat_fn, psd_tol, svec

_RANK_TOL = 1e-10


class Form(enum.Enum):
    STANDARD = "standard"
    CANONICAL = "canonical"


@dataclass(eq=False)
class SdoProblem:
    """Immutable problem data for one primal-dual pair."""

    constraint_mats: list[SymMat]
    rhs: np.ndarray
    objective: SymMat
    form: Form = Form.STANDARD

    def __post_init__(self):
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        if len(self.constraint_mats) != len(self.rhs):
            raise DimMismatch("number of constraint matrices != length of rhs")
        layout = self.objective.block_sizes
        for i, Ai in enumerate(self.constraint_mats):
            if Ai.block_sizes != layout:
                raise DimMismatch(f"constraint {i} layout {Ai.block_sizes} != {layout}")
        self._A_s: Optional[np.ndarray] = None
        self._check_rank()

    def _check_rank(self):
        # Canonical rows are inequalities; their slack-extended equality
        # image [A_s | -I] has full row rank by construction, so only
        # standard form needs the independence check (an equality split
        # into two opposing inequalities is legitimately dependent).
        if self.m == 0 or self.form is Form.CANONICAL:
            return
        A = self.constraint_rows()
        R = scipy.linalg.qr(A.T, mode="r")[0]
        diag = np.abs(np.diag(R[: self.m, : self.m])) if R.shape[0] >= self.m else np.zeros(self.m)
        dmax = diag.max() if len(diag) else 0.0
        if dmax == 0.0 or (diag < _RANK_TOL * dmax).any():
            raise RankDeficient("constraint matrices are linearly dependent")

    @property
    def m(self) -> int:
        return len(self.constraint_mats)

    @property
    def n(self) -> int:
        return self.objective.total_dim

    @property
    def block_sizes(self):
        return self.objective.block_sizes

    @property
    def complementarity_dim(self) -> int:
        """Denominator of mu: n in standard form, n + m in canonical."""
        return self.n if self.form is Form.STANDARD else self.n + self.m

    def constraint_rows(self) -> np.ndarray:
        """The m x sv matrix whose rows are svec(A_i)."""
        if self._A_s is None:
            if self.m:
                self._A_s = np.vstack([svec(Ai).entries for Ai in self.constraint_mats])
            else:
                self._A_s = np.zeros((0, sum(n * (n + 1) // 2 for n in self.block_sizes)))
        return self._A_s

    def data_scale(self) -> float:
        """1 + max(||b||, ||C||_F), the reference for residual tolerances."""
        return 1.0 + max(
            float(np.linalg.norm(self.rhs)) if self.m else 0.0,
            self.objective.norm_fro(),
        )


@dataclass(eq=False)
class PrimalDualPoint:
    """A primal-dual iterate (X, y, S), plus surplus u in canonical form."""

    X: SymMat
    y: np.ndarray
    S: SymMat
    u: Optional[np.ndarray] = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.u is not None:
            self.u = np.asarray(self.u, dtype=float).ravel()
        if not self.X.same_layout(self.S):
            raise DimMismatch("X and S layouts differ")

    def gap(self) -> float:
        g = self.X.dot(self.S)
        if self.u is not None:
            g += float(self.y @ self.u)
        return g

    def mu(self, prob: SdoProblem) -> float:
        return self.gap() / prob.complementarity_dim

    def copy(self) -> "PrimalDualPoint":
        return PrimalDualPoint(
            self.X.copy(), self.y.copy(), self.S.copy(),
            None if self.u is None else self.u.copy())


def residuals(prob: SdoProblem, pt: PrimalDualPoint):
    """Primal residual vector, dual residual matrix, gap, and mu.

    primal_res_i = b_i - A_i.X  (+ u_i in canonical form, where the
    constraint reads A_i.X - u_i = b_i);
    dual_res = C - sum_i y_i A_i - S.

    Everything runs in svec coordinates (the vectorization is an
    isometry, so trace products and Frobenius norms carry over).
    """
    if pt.X.block_sizes != prob.block_sizes:
        raise DimMismatch("point layout does not match problem")
    if len(pt.y) != prob.m:
        raise DimMismatch("y length does not match constraint count")
    from .symmat import smat_array, svec
    A_s = prob.constraint_rows()
    x_vec = svec(pt.X).entries
    primal = prob.rhs - A_s @ x_vec
    if prob.form is Form.CANONICAL:
        if pt.u is None:
            raise DimMismatch("canonical-form point must carry u")
        primal = primal + pt.u
    dual_vec = svec(prob.objective).entries - A_s.T @ pt.y - svec(pt.S).entries
    dual = smat_array(dual_vec, prob.block_sizes)
    gap = pt.gap() if prob.form is Form.CANONICAL else pt.X.dot(pt.S)
    return primal, dual, gap, gap / prob.complementarity_dim


def neighborhood_distance(pt: PrimalDualPoint, prob: SdoProblem | None = None,
                          mu: float | None = None) -> tuple[float, float]:
    """(Frobenius distance of X^1/2 S X^1/2 from mu I, mu).

    In canonical form the (y, u) pairs join the complementarity vector.
    Requires X strictly positive definite.
    """
    if min_eig(pt.X) <= psd_tol(pt.X):
        raise NotPositiveDefinite("X must be positive definite for the neighborhood test")
    if mu is None:
        if prob is not None:
            mu = pt.mu(prob)
        else:
            dim = pt.X.total_dim + (len(pt.y) if pt.u is not None else 0)
            mu = pt.gap() / dim
    Xh = mat_fn(pt.X, "sqrt")
    dist2 = 0.0
    for Xb, Sb in zip(Xh.blocks, pt.S.blocks):
        W = Xb @ Sb @ Xb
        W[np.diag_indices_from(W)] -= mu
        dist2 += float(np.sum(W * W))
    if pt.u is not None:
        dist2 += float(np.sum((pt.y * pt.u - mu) ** 2))
    return float(np.sqrt(dist2)), float(mu)


def in_neighborhood(pt: PrimalDualPoint, gamma: float,
                    prob: SdoProblem | None = None) -> bool:
    """Frobenius (narrow) neighborhood membership test."""
    dist, mu = neighborhood_distance(pt, prob)
    return dist <= gamma * mu


# -- form conversion ------------------------------------------------------------


def standard_to_canonical(prob: SdoProblem):
    """Split each equality into a pair of opposing inequalities.

    Returns (canonical problem, map_point, unmap_point): map_point
    carries a standard-form point into the split problem (u = 0 on both
    rows for feasible points), unmap_point recombines the split
    multipliers into the equality multiplier y_i = y_2i - y_2i+1.
    """
    if prob.form is not Form.STANDARD:
        raise DimMismatch("expected a standard-form problem")
    mats = []
    rhs = []
    for Ai, bi in zip(prob.constraint_mats, prob.rhs):
        mats.append(Ai)
        rhs.append(bi)
        mats.append(-1.0 * Ai)
        rhs.append(-bi)
    out = SdoProblem(mats, np.array(rhs), prob.objective, Form.CANONICAL)

    def map_point(pt: PrimalDualPoint) -> PrimalDualPoint:
        u = np.empty(2 * prob.m)
        for i, (Ai, bi) in enumerate(zip(prob.constraint_mats, prob.rhs)):
            r = Ai.dot(pt.X) - bi
            u[2 * i] = r
            u[2 * i + 1] = -r
        # equality multiplier splits into the positive parts of +/- y
        y = np.empty(2 * prob.m)
        y[0::2] = np.maximum(pt.y, 0.0)
        y[1::2] = np.maximum(-pt.y, 0.0)
        return PrimalDualPoint(pt.X.copy(), y, pt.S.copy(), u)

    def unmap_point(pt: PrimalDualPoint) -> PrimalDualPoint:
        return PrimalDualPoint(pt.X.copy(), pt.y[0::2] - pt.y[1::2], pt.S.copy())

    return out, map_point, unmap_point


def canonical_to_standard(prob: SdoProblem):
    """Append the surplus variables as 1x1 diagonal blocks.

    Returns (standard problem, map_point, unmap_point).  The extended
    constraint matrices carry -1 in slack slot i so that
    A_i.X - u_i = b_i becomes an equality over the enlarged cone; the
    dual slack of the image is then diag(S, diag(y)).
    """
    if prob.form is not Form.CANONICAL:
        raise DimMismatch("expected a canonical-form problem")
    m = prob.m
    mats = []
    for i, Ai in enumerate(prob.constraint_mats):
        slack = [np.array([[-1.0 if j == i else 0.0]]) for j in range(m)]
        mats.append(SymMat([B.copy() for B in Ai.blocks] + slack))
    zeros = [np.zeros((1, 1)) for _ in range(m)]
    C = SymMat([B.copy() for B in prob.objective.blocks] + zeros)
    out = SdoProblem(mats, prob.rhs.copy(), C, Form.STANDARD)

    def map_point(pt: PrimalDualPoint) -> PrimalDualPoint:
        X = SymMat(list(pt.X.blocks) + [np.array([[ui]]) for ui in pt.u])
        S = SymMat(list(pt.S.blocks) + [np.array([[yi]]) for yi in pt.y])
        return PrimalDualPoint(X, pt.y.copy(), S)

    nblk = len(prob.block_sizes)

    def unmap_point(pt: PrimalDualPoint) -> PrimalDualPoint:
        X = SymMat([B.copy() for B in pt.X.blocks[:nblk]])
        S = SymMat([B.copy() for B in pt.S.blocks[:nblk]])
        u = np.array([pt.X.blocks[nblk + j][0, 0] for j in range(m)])
        return PrimalDualPoint(X, pt.y.copy(), S, u)

    return out, map_point, unmap_point
