"""Homogeneous self-dual embedding of a canonical-form problem.

The embedding wraps the inequality-form pair into one self-dual
problem whose constraint system is skew-symmetric:

    min (n+m+2) theta
    A_i.X   - b_i tau  + bbar_i theta - u_i  = 0          (i in [m])
    -sum_j y_j A_j + C tau - Cbar theta - S  = 0
    b'y    - C.X              + obar theta - phi = 0
    -bbar'y + Cbar.X - obar tau           - rho  = -(n+m+2)
    X, S >= 0 (cone),  y, u, tau, theta, phi, rho >= 0

with

    bbar_i = b_i + 1 - A_i.I
    Cbar   = C - I - sum_j A_j
    obar   = 1 + C.I - b'e.

These constants are exactly the ones that make the all-ones point
(y, X, tau, theta, u, S, phi, rho) = (e, I, 1, 1, e, I, 1, 1) feasible
with every complementarity product equal to one, i.e. perfectly
centered at mu = 1.  (Note obar uses C, not Cbar: substituting the
all-ones point into rows three and four forces it, and only this
choice zeroes all four residuals.)

An optimal embedding solution classifies the original pair through
(tau, phi): tau > 0 scales back to a complementary pair, tau = 0 with
phi > 0 certifies an improving ray, and tau = phi = 0 means no
complementary pair exists.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimMismatch, FormError
from .model import Form, PrimalDualPoint, SdoProblem
from .symmat import SymMat, smat_array, svec


@dataclass(eq=False)
class SelfDualProblem:
    base: SdoProblem
    bbar: np.ndarray
    Cbar: SymMat
    obar: float

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def m(self) -> int:
        return self.base.m

    @property
    def complementarity_dim(self) -> int:
        return self.n + self.m + 2


@dataclass(eq=False)
class SelfDualPoint:
    """One embedding iterate; deltas reuse the same container."""

    y: np.ndarray
    X: SymMat
    tau: float
    theta: float
    u: np.ndarray
    S: SymMat
    phi: float
    rho: float

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.u = np.asarray(self.u, dtype=float).ravel()
        if len(self.y) != len(self.u):
            raise DimMismatch("y and u lengths differ")
        if not self.X.same_layout(self.S):
            raise DimMismatch("X and S layouts differ")

    def gap(self) -> float:
        return float(self.y @ self.u) + self.X.dot(self.S) \
            + self.tau * self.phi + self.theta * self.rho

    def mu(self) -> float:
        n = self.X.total_dim
        return self.gap() / (n + len(self.y) + 2)

    def add(self, d: "SelfDualPoint", alpha: float = 1.0) -> "SelfDualPoint":
        return SelfDualPoint(
            self.y + alpha * d.y, self.X + alpha * d.X,
            self.tau + alpha * d.tau, self.theta + alpha * d.theta,
            self.u + alpha * d.u, self.S + alpha * d.S,
            self.phi + alpha * d.phi, self.rho + alpha * d.rho)

    def copy(self) -> "SelfDualPoint":
        return SelfDualPoint(self.y.copy(), self.X.copy(), self.tau, self.theta,
                             self.u.copy(), self.S.copy(), self.phi, self.rho)


def build_embedding(prob: SdoProblem) -> SelfDualProblem:
    """Construct the self-dual embedding of a canonical-form problem."""
    if prob.form is not Form.CANONICAL:
        raise FormError("the embedding requires a canonical-form problem")
    I = SymMat.identity(prob.block_sizes)
    bbar = np.array([bi + 1.0 - Ai.dot(I) for Ai, bi in zip(prob.constraint_mats, prob.rhs)])
    Cbar = prob.objective - I
    for Aj in prob.constraint_mats:
        Cbar = Cbar - Aj
    obar = 1.0 + prob.objective.dot(I) - float(prob.rhs.sum())
    return SelfDualProblem(prob, bbar, Cbar, obar)


def initial_point(emb: SelfDualProblem) -> SelfDualPoint:
    """The built-in strictly feasible, perfectly centered start (mu = 1)."""
    layout = emb.base.block_sizes
    return SelfDualPoint(
        y=np.ones(emb.m), X=SymMat.identity(layout), tau=1.0, theta=1.0,
        u=np.ones(emb.m), S=SymMat.identity(layout), phi=1.0, rho=1.0)


def constraint_residuals(emb: SelfDualProblem, pt: SelfDualPoint):
    """Residuals of the four linear constraint groups at ``pt``.

    Returns (r_u: m-vector, r_S: SymMat, r_phi: float, r_rho: float),
    all zero at any feasible embedding point.
    """
    prob = emb.base
    r_u = np.array([
        Ai.dot(pt.X) - bi * pt.tau + bbi * pt.theta - ui
        for Ai, bi, bbi, ui in zip(prob.constraint_mats, prob.rhs, emb.bbar, pt.u)])
    r_S = pt.tau * prob.objective - pt.theta * emb.Cbar - pt.S
    for yj, Aj in zip(pt.y, prob.constraint_mats):
        r_S = r_S - yj * Aj
    r_phi = float(prob.rhs @ pt.y) - prob.objective.dot(pt.X) \
        + emb.obar * pt.theta - pt.phi
    r_rho = -float(emb.bbar @ pt.y) + emb.Cbar.dot(pt.X) - emb.obar * pt.tau \
        - pt.rho + (emb.n + emb.m + 2)
    return r_u, r_S, r_phi, r_rho


def constraint_residual_norm(emb: SelfDualProblem, pt: SelfDualPoint) -> float:
    r_u, r_S, r_phi, r_rho = constraint_residuals(emb, pt)
    return float(np.sqrt(np.sum(r_u ** 2) + r_S.norm_fro() ** 2
                         + r_phi ** 2 + r_rho ** 2))


# -- solution classification ---------------------------------------------------


@dataclass
class Optimal:
    X: SymMat
    y: np.ndarray
    S: SymMat
    u: np.ndarray
    tau: float


@dataclass
class ImprovingRay:
    X: SymMat
    y: np.ndarray
    S: SymMat
    phi: float


@dataclass
class NoComplementaryPair:
    tau: float
    phi: float


def extract_solution(pt: SelfDualPoint, tol: float):
    """Classify an (approximately) optimal embedding point.

    tau > tol yields the scaled-back primal-dual pair; tau <= tol with
    phi > tol returns the raw ray block; otherwise no complementary
    pair exists.  ``tol`` should be of the order sqrt(final gap).
    """
    if pt.tau > tol:
        inv = 1.0 / pt.tau
        return Optimal(inv * pt.X, inv * pt.y, inv * pt.S, inv * pt.u, pt.tau)
    if pt.phi > tol:
        return ImprovingRay(pt.X.copy(), pt.y.copy(), pt.S.copy(), pt.phi)
    return NoComplementaryPair(pt.tau, pt.phi)


def extract_primal_dual(pt: SelfDualPoint, tol: float) -> Optional[PrimalDualPoint]:
    """Optimal-branch extraction as a canonical-form point, else None."""
    out = extract_solution(pt, tol)
    if isinstance(out, Optimal):
        return PrimalDualPoint(out.X, out.y, out.S, out.u)
    return None


# -- standard-form image ---------------------------------------------------------


@dataclass(eq=False)
class EmbeddingImage:
    """The embedding rewritten as one standard-form problem.

    Variables and their dual slacks are stacked over the doubled block
    layout [X-blocks, y, tau, theta, S-blocks, u, phi, rho]; the
    constraint system is [M | -I] where M is the skew coefficient
    matrix, so the image always has full row rank and the trivial
    embedding start maps to the identity with a perfectly centered
    dual.  Refining problems share this constraint matrix, which is why
    its null-space basis is computed once.
    """

    problem: SdoProblem
    emb: SelfDualProblem

    def to_point(self, pt: SelfDualPoint) -> PrimalDualPoint:
        X = SymMat(list(pt.X.blocks)
                   + [np.array([[v]]) for v in pt.y]
                   + [np.array([[pt.tau]]), np.array([[pt.theta]])]
                   + list(pt.S.blocks)
                   + [np.array([[v]]) for v in pt.u]
                   + [np.array([[pt.phi]]), np.array([[pt.rho]])])
        # self-duality: the dual multiplier equals the variable tuple
        # (indexed by constraint row) and the dual slack is the variable
        # with its two halves swapped
        yvec = np.concatenate([svec(pt.X).entries, pt.y, [pt.tau, pt.theta]])
        S = SymMat(list(pt.S.blocks)
                   + [np.array([[v]]) for v in pt.u]
                   + [np.array([[pt.phi]]), np.array([[pt.rho]])]
                   + list(pt.X.blocks)
                   + [np.array([[v]]) for v in pt.y]
                   + [np.array([[pt.tau]]), np.array([[pt.theta]])])
        return PrimalDualPoint(X, yvec, S)

    def from_point(self, pt: PrimalDualPoint) -> SelfDualPoint:
        nblk = len(self.emb.base.block_sizes)
        m = self.emb.m
        blocks = pt.X.blocks
        X = SymMat([B.copy() for B in blocks[:nblk]])
        y = np.array([blocks[nblk + j][0, 0] for j in range(m)])
        tau = blocks[nblk + m][0, 0]
        theta = blocks[nblk + m + 1][0, 0]
        off = nblk + m + 2
        S = SymMat([B.copy() for B in blocks[off:off + nblk]])
        u = np.array([blocks[off + nblk + j][0, 0] for j in range(m)])
        phi = blocks[off + nblk + m][0, 0]
        rho = blocks[off + nblk + m + 1][0, 0]
        return SelfDualPoint(y, X, tau, theta, u, S, phi, rho)


def skew_coefficient_matrix(emb: SelfDualProblem) -> np.ndarray:
    """The skew-symmetric matrix M of the embedding, in svec coordinates.

    Columns follow the variable tuple [y (m), X (sv), tau, theta], rows
    the slack tuple [u (m), S (sv), phi, rho]; slack = M z - q with
    q = -(n+m+2) e_rho.  Skewness is with respect to the natural
    pairing (y_i, u_i), (X, S), (tau, phi), (theta, rho).
    """
    prob = emb.base
    A_s = prob.constraint_rows()
    c_s = svec(prob.objective).entries
    cbar_s = svec(emb.Cbar).entries
    m, sv = A_s.shape
    K = m + sv + 2
    M = np.zeros((K, K))
    M[:m, m:m + sv] = A_s
    M[:m, -2] = -prob.rhs
    M[:m, -1] = emb.bbar
    M[m:m + sv, :m] = -A_s.T
    M[m:m + sv, -2] = c_s
    M[m:m + sv, -1] = -cbar_s
    M[m + sv, :m] = prob.rhs
    M[m + sv, m:m + sv] = -c_s
    M[m + sv, -1] = emb.obar
    M[m + sv + 1, :m] = -emb.bbar
    M[m + sv + 1, m:m + sv] = cbar_s
    M[m + sv + 1, -2] = -emb.obar
    return M


def embedding_to_standard(emb: SelfDualProblem) -> EmbeddingImage:
    """Standard-form image of the embedding over the doubled layout."""
    prob = emb.base
    layout = prob.block_sizes
    m = emb.m
    sv = sum(n * (n + 1) // 2 for n in layout)
    K = m + sv + 2
    big_layout = list(layout) + [1] * (m + 2) + list(layout) + [1] * (m + 2)

    M = skew_coefficient_matrix(emb)
    # variable columns in big-svec order [X (sv), y (m), tau, theta];
    # M's order is [y, X, tau, theta]
    perm = np.concatenate([np.arange(m, m + sv), np.arange(m),
                           [m + sv, m + sv + 1]]).astype(int)
    # constraint row j: (M row j on the variable half, -e_j on the slack half)
    rows = np.zeros((K, 2 * K))
    rows[:, :K] = M[:, perm]
    rows[:, K:] = 0.0
    # slack half order is [S (sv), u (m), phi, rho]; M's rows come as
    # [u (m), S (sv), phi, rho]
    row_perm = np.concatenate([np.arange(m, m + sv), np.arange(m),
                               [m + sv, m + sv + 1]]).astype(int)
    rows = rows[row_perm]
    for j in range(K):
        rows[j, K + j] = -1.0

    q = np.zeros(K)
    q[-1] = -(emb.n + m + 2)       # rho-row right-hand side
    q = q[row_perm]

    mats = [smat_array(rows[j], big_layout) for j in range(K)]
    C = SymMat.zeros(big_layout)
    # objective (n+m+2) * theta: theta sits right after the X and y slots
    C.blocks[len(layout) + m + 1][0, 0] = emb.n + m + 2
    big = SdoProblem(mats, q, C, Form.STANDARD)
    return EmbeddingImage(big, emb)
