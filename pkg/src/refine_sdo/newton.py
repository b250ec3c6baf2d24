"""Scaled Newton systems in orthogonal-subspaces form.

The search direction solves the symmetrized complementarity equation

    H_P(DX * S + X * DS) = sigma*mu*I - H_P(X S)

subject to DX lying in the null space of the constraint rows and DS in
their row space.  Writing svec(DX) = Q2 lam and svec(DS) = -A_s' dy
turns this into one square system

    [E Q2 | -F A_s'] [lam; dy] = svec(Rc),

with E = P (x)_s P^{-T} S and F = P X (x)_s P^{-T}.  Any approximate
solution of this system still yields directions that are exactly
feasible, because feasibility is baked into the parameterization; the
solve tolerance only perturbs complementarity.

For the self-dual embedding the same construction applies to the
stacked pair Z = diag(X, y, tau, theta), W = diag(S, u, phi, rho); the
null-space basis comes in closed form from the skew constraint matrix
(slack directions follow variable directions), so no factorization is
needed there.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .embedding import SelfDualPoint, SelfDualProblem, skew_coefficient_matrix
from .errors import DimMismatch, NotPositiveDefinite, RankDeficient, SingularScaling
from .model import PrimalDualPoint, SdoProblem
from .symmat import (
    SymMat, mat_fn, min_eig, psd_tol, smat_array, svec, svec_len, sym_kron,
)


class ScalingChoice(enum.Enum):
    NT = "nt"
    HKM = "hkm"
    AHO = "aho"


def nt_scaling_point(X: SymMat, S: SymMat) -> SymMat:
    """The unique positive definite W with W S W = X.

    Computed from X^1/2 (X^1/2 S X^1/2)^{-1/2} X^1/2 so that S never
    has to be rooted directly; every product is re-symmetrized.
    """
    Xh = mat_fn(X, "sqrt")
    T = SymMat._wrap([0.5 * (B + B.T) for B in
                      (xh @ s @ xh for xh, s in zip(Xh.blocks, S.blocks))])
    Tih = mat_fn(T, "invsqrt")
    W = SymMat._wrap([0.5 * (B + B.T) for B in
                      (xh @ t @ xh for xh, t in zip(Xh.blocks, Tih.blocks))])
    return W


def scaling_pair(X: SymMat, S: SymMat, choice: ScalingChoice) -> tuple[SymMat, SymMat]:
    """(P, P^{-1}) from one shared eigendecomposition per block.

    Sharing the factorization keeps the pair consistent to roundoff,
    which matters deep in refinement rounds where an independently
    inverted P would perturb the assembled system by kappa(P)*eps_mach.
    """
    if min_eig(X) <= psd_tol(X):
        raise NotPositiveDefinite("X must be positive definite for scaling")
    if min_eig(S) <= psd_tol(S):
        raise NotPositiveDefinite("S must be positive definite for scaling")
    if choice is ScalingChoice.AHO:
        I = SymMat.identity(X.block_sizes)
        return I, I.copy()
    base = S if choice is ScalingChoice.HKM else nt_scaling_point(X, S)
    power = 0.5 if choice is ScalingChoice.HKM else -0.5
    gate = psd_tol(base)
    P_blocks, Pi_blocks = [], []
    for B in base.blocks:
        w, Q = np.linalg.eigh(B)
        if w.min() <= gate:
            raise NotPositiveDefinite("scaling base lost definiteness",
                                      min_eigenvalue=float(w.min()))
        P_blocks.append(_sym(((Q * w ** power) @ Q.T)))
        Pi_blocks.append(_sym(((Q * w ** -power) @ Q.T)))
    return SymMat._wrap(P_blocks), SymMat._wrap(Pi_blocks)


def _sym(B):
    return 0.5 * (B + B.T)


def scaling_matrix(X: SymMat, S: SymMat, choice: ScalingChoice) -> SymMat:
    """The scaling P defining the symmetrization H_P for one iterate."""
    return scaling_pair(X, S, choice)[0]


_SCALING_COND_LIMIT = 1e12


def _inv_blocks(P: SymMat) -> list[np.ndarray]:
    out = []
    for B in P.blocks:
        if np.linalg.cond(B) >= _SCALING_COND_LIMIT:
            raise SingularScaling("scaling matrix too ill-conditioned")
        out.append(np.linalg.inv(B))
    return out


def h_p(P: SymMat, M_blocks: list[np.ndarray]) -> SymMat:
    """Symmetrization 0.5 [P M P^{-1} + P^{-T} M' P'] applied blockwise."""
    if len(M_blocks) != len(P.blocks):
        raise DimMismatch("block counts differ")
    Pinv = _inv_blocks(P)
    out = []
    for Pb, Pib, Mb in zip(P.blocks, Pinv, M_blocks):
        A = Pb @ Mb @ Pib
        out.append(0.5 * (A + A.T))
    return SymMat(out)


def nullspace_basis(A_s: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the null space of A_s by full QR.

    A_s is m x sv with full row rank; the returned Q2 has sv - m
    orthonormal columns with A_s Q2 = 0.
    """
    A_s = np.asarray(A_s, dtype=float)
    m, sv = A_s.shape
    if m == 0:
        return np.eye(sv)
    Q, R = scipy.linalg.qr(A_s.T, mode="full")
    diag = np.abs(np.diag(R[:m, :m]))
    if diag.size < m or diag.max() == 0.0 or (diag < 1e-10 * diag.max()).any():
        raise RankDeficient("constraint rows are not linearly independent")
    return Q[:, m:]


@dataclass(eq=False)
class OssSystem:
    """One assembled orthogonal-subspaces system M z = rhs.

    Carries the scaled pair and scaling so the solution can be refined
    against an extended-precision residual of the exact symmetrized
    equations (see :func:`refine_newton_solution`).
    """

    M: np.ndarray
    rhs: np.ndarray
    basis: np.ndarray               # Q2 (standard) or the closed-form V (embedding)
    scaling: ScalingChoice
    mu: float
    sigma: float
    kind: str                       # "standard" | "selfdual"
    A_s: Optional[np.ndarray] = None
    block_sizes: tuple[int, ...] = ()
    m: int = 0
    X_blocks: list = None
    S_blocks: list = None
    P_blocks: list = None
    Pinv_blocks: list = None

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    def pair_scale(self) -> float:
        """||X||_F ||S||_F of the (stacked) pair, the cancellation scale."""
        nx = np.sqrt(sum(np.sum(B * B) for B in self.X_blocks))
        ns = np.sqrt(sum(np.sum(B * B) for B in self.S_blocks))
        return float(nx * ns)


def _scaled_kron_operators(X: SymMat, S: SymMat, P: SymMat,
                           Pinv: Optional[SymMat] = None):
    """(E, F) with E = P (x)_s P^{-T} S and F = P X (x)_s P^{-T}."""
    Pi = _inv_blocks(P) if Pinv is None else Pinv.blocks
    PinvT = [B.T for B in Pi]
    PinvT_S = [pi @ s for pi, s in zip(PinvT, S.blocks)]
    PX = [p @ x for p, x in zip(P.blocks, X.blocks)]
    E = sym_kron(P.blocks, PinvT_S)
    F = sym_kron(PX, PinvT)
    return E, F


def _h_p_with_inverse(P_blocks, Pi_blocks, M_blocks):
    out = []
    for Pb, Pib, Mb in zip(P_blocks, Pi_blocks, M_blocks):
        A = Pb @ Mb @ Pib
        out.append(0.5 * (A + A.T))
    return SymMat._wrap(out)


def assemble_oss_standard(prob: SdoProblem, pt: PrimalDualPoint, P: SymMat,
                          sigma: float, mu: float, Q2: np.ndarray,
                          scaling: ScalingChoice = ScalingChoice.NT,
                          Pinv: Optional[SymMat] = None) -> OssSystem:
    """Assemble the square standard-form system of dimension sv."""
    if Pinv is None:
        Pinv = SymMat(_inv_blocks(P))
    E, F = _scaled_kron_operators(pt.X, pt.S, P, Pinv)
    A_s = prob.constraint_rows()
    M = np.hstack([E @ Q2, -(F @ A_s.T)])
    XS = pt.X.matmul_blocks(pt.S)
    Rc = sigma * mu * SymMat.identity(pt.X.block_sizes) \
        - _h_p_with_inverse(P.blocks, Pinv.blocks, XS)
    return OssSystem(M=M, rhs=svec(Rc).entries, basis=Q2,
                     scaling=scaling, mu=mu, sigma=sigma,
                     kind="standard", A_s=A_s,
                     block_sizes=pt.X.block_sizes, m=prob.m,
                     X_blocks=pt.X.blocks, S_blocks=pt.S.blocks,
                     P_blocks=P.blocks, Pinv_blocks=Pinv.blocks)


def recover_direction_standard(lam: np.ndarray, dy: np.ndarray, sys: OssSystem):
    """(DX, dy, DS) from an (approximate) solution of the system.

    DX = smat(Q2 lam) and DS = -smat(A_s' dy) are exactly in the null
    and row spaces regardless of how inexact (lam, dy) is.
    """
    nullity = sys.basis.shape[1]
    if len(lam) != nullity or len(dy) != sys.m:
        raise DimMismatch("direction components have wrong lengths")
    DX = smat_array(sys.basis @ lam, sys.block_sizes)
    DS = smat_array(-(sys.A_s.T @ dy), sys.block_sizes)
    return DX, np.asarray(dy, dtype=float), DS


def split_oss_solution(z: np.ndarray, sys: OssSystem):
    """Split a standard-form solution vector into (lam, dy)."""
    nullity = sys.basis.shape[1]
    return z[:nullity], z[nullity:]


# -- self-dual embedding -------------------------------------------------------


def stacked_pair(pt: SelfDualPoint) -> tuple[SymMat, SymMat]:
    """Z = diag(X, y, tau, theta) and W = diag(S, u, phi, rho)."""
    Z = SymMat(list(pt.X.blocks)
               + [np.array([[v]]) for v in pt.y]
               + [np.array([[pt.tau]]), np.array([[pt.theta]])])
    W = SymMat(list(pt.S.blocks)
               + [np.array([[v]]) for v in pt.u]
               + [np.array([[pt.phi]]), np.array([[pt.rho]])])
    return Z, W


def embedding_null_basis(emb: SelfDualProblem) -> np.ndarray:
    """Closed-form null-space basis of the embedding constraints.

    Rows are ordered (svec of the W side | svec of the Z side) in the
    stacked layout [blocks, scalars (m), tau|phi, theta|rho]; each
    column fixes a variable direction and carries the matching slack
    direction, so no factorization is required.
    """
    prob = emb.base
    m = emb.m
    sv = sum(svec_len(n) for n in prob.block_sizes)
    K = m + sv + 2
    M = skew_coefficient_matrix(emb)
    # reorder [y, X, tau, theta] / [u, S, phi, rho] -> stacked layout
    perm = np.concatenate([np.arange(m, m + sv), np.arange(m),
                           [m + sv, m + sv + 1]]).astype(int)
    Mp = M[np.ix_(perm, perm)]
    V = np.zeros((2 * K, K))
    V[:K, :] = Mp
    V[K:, :] = np.eye(K)
    return V


def embedding_constraint_matrix(emb: SelfDualProblem) -> np.ndarray:
    """Embedding constraint rows over (W side | Z side) svec columns."""
    prob = emb.base
    m = emb.m
    sv = sum(svec_len(n) for n in prob.block_sizes)
    K = m + sv + 2
    M = skew_coefficient_matrix(emb)
    perm = np.concatenate([np.arange(m, m + sv), np.arange(m),
                           [m + sv, m + sv + 1]]).astype(int)
    Mp = M[np.ix_(perm, perm)]
    return np.hstack([-np.eye(K), Mp])


def assemble_oss_selfdual(emb: SelfDualProblem, pt: SelfDualPoint, sigma: float,
                          mu: float, scaling: ScalingChoice,
                          V: Optional[np.ndarray] = None) -> OssSystem:
    """Square system of dimension sv + m + 2 for one embedding step.

    The scalar complementarities (y u, tau phi, theta rho) are 1x1
    blocks of the stacked pair, where every H_P reduces to the plain
    product, so one blockwise assembly covers all four constraint
    groups of the Newton system.
    """
    Z, W = stacked_pair(pt)
    P, Pinv = scaling_pair(Z, W, scaling)
    E, F = _scaled_kron_operators(Z, W, P, Pinv)
    if V is None:
        V = embedding_null_basis(emb)
    K = V.shape[1]
    M = F @ V[:K, :] + E @ V[K:, :]
    ZW = Z.matmul_blocks(W)
    Rc = sigma * mu * SymMat.identity(Z.block_sizes) \
        - _h_p_with_inverse(P.blocks, Pinv.blocks, ZW)
    return OssSystem(M=M, rhs=svec(Rc).entries, basis=V, scaling=scaling,
                     mu=mu, sigma=sigma, kind="selfdual",
                     block_sizes=emb.base.block_sizes, m=emb.m,
                     X_blocks=Z.blocks, S_blocks=W.blocks,
                     P_blocks=P.blocks, Pinv_blocks=Pinv.blocks)


_LD = np.longdouble


def _svec_ld(blocks):
    from .symmat import _tril_indices_colmajor
    parts = []
    for B in blocks:
        r, c, _ = _tril_indices_colmajor(B.shape[0])
        w = np.where(r == c, _LD(1.0), np.sqrt(_LD(2.0)))
        parts.append(B[r, c] * w)
    return np.concatenate(parts)


def _smat_ld(vec, block_sizes):
    from .symmat import _tril_indices_colmajor
    blocks = []
    off = 0
    for n in block_sizes:
        ln = svec_len(n)
        seg = vec[off:off + ln]
        off += ln
        r, c, _ = _tril_indices_colmajor(n)
        w = np.where(r == c, _LD(1.0), np.sqrt(_LD(2.0)))
        B = np.zeros((n, n), dtype=_LD)
        B[r, c] = seg / w
        B = B + B.T
        B[np.arange(n), np.arange(n)] *= 0.5
        blocks.append(B)
    return blocks


def newton_residual_extended(sys: OssSystem, z: np.ndarray) -> np.ndarray:
    """Residual of the exact symmetrized equations, in extended precision.

    The assembled M and rhs each lose about eps_mach * ||X|| ||S|| to
    cancellation; evaluating sigma*mu*I - H_P(X S) - H_P(DX S + X DS)
    directly in long-double recovers what the double-precision
    assembly destroyed, using the same P (any consistent nonsingular
    scaling defines a valid direction).  Returned in double, ready to
    feed a correction solve.
    """
    if sys.kind == "selfdual":
        K = sys.basis.shape[1]
        d = sys.basis.astype(_LD) @ z.astype(_LD)
        dS_vec, dX_vec = d[:K], d[K:]
        layout = [B.shape[0] for B in sys.X_blocks]
    else:
        nullity = sys.basis.shape[1]
        lam, dy = z[:nullity], z[nullity:]
        dX_vec = sys.basis.astype(_LD) @ lam.astype(_LD)
        dS_vec = -(sys.A_s.T.astype(_LD) @ dy.astype(_LD))
        layout = [B.shape[0] for B in sys.X_blocks]
    dX = _smat_ld(dX_vec, layout)
    dS = _smat_ld(dS_vec, layout)
    out = []
    smu = _LD(sys.sigma) * _LD(sys.mu)
    for Xb, Sb, Pb, Pib, dXb, dSb in zip(
            sys.X_blocks, sys.S_blocks, sys.P_blocks, sys.Pinv_blocks, dX, dS):
        X, S = Xb.astype(_LD), Sb.astype(_LD)
        P, Pi = Pb.astype(_LD), Pib.astype(_LD)
        n = X.shape[0]
        prod = X @ S + dXb @ S + X @ dSb
        H = P @ prod @ Pi
        H = 0.5 * (H + H.T)
        H[np.arange(n), np.arange(n)] -= smu
        out.append(-H)
    return _svec_ld(out).astype(float)


def refine_newton_solution(sys: OssSystem, z: np.ndarray, passes: int = 2,
                           lu=None) -> np.ndarray:
    """Iterative refinement of an OSS solve with extended-precision residuals.

    Feasibility is untouched (corrections flow through the same basis);
    only the complementarity targeting sharpens.  Two passes push the
    effective residual to the long-double floor, far below beta*mu even
    in deep refinement rounds.
    """
    if lu is None:
        lu = scipy.linalg.lu_factor(sys.M)
    for _ in range(passes):
        r = newton_residual_extended(sys, z)
        z = z + scipy.linalg.lu_solve(lu, r)
    return z


def refinement_needed(sys: OssSystem) -> bool:
    """True when assembly cancellation is within 1e8x of the mu scale.

    Off-centering noise compounds over a long round, so refinement has
    to start well before the floor itself reaches the neighborhood
    radius; plain O(1)-scale runs never trigger.
    """
    return np.finfo(float).eps * sys.pair_scale() > 1e-8 * sys.mu


def recover_direction_selfdual(lam: np.ndarray, sys: OssSystem) -> SelfDualPoint:
    """Delta point from a (possibly inexact) embedding solve.

    Any lam gives a direction along which all four linear constraint
    groups are preserved exactly, because the slack half of the basis
    is the skew matrix applied to the variable half.
    """
    V = sys.basis
    K = V.shape[1]
    if len(lam) != K:
        raise DimMismatch("lambda has wrong length")
    d = V @ lam
    dW, dZ = d[:K], d[K:]
    layout = sys.block_sizes
    sv = sum(svec_len(n) for n in layout)
    m = sys.m
    return SelfDualPoint(
        y=dZ[sv:sv + m], X=smat_array(dZ[:sv], layout),
        tau=float(dZ[-2]), theta=float(dZ[-1]),
        u=dW[sv:sv + m], S=smat_array(dW[:sv], layout),
        phi=float(dW[-2]), rho=float(dW[-1]))
