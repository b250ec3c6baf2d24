"""Symmetric-matrix kernel.

Block-diagonal symmetric matrices, the isometric vectorization pair
svec/smat, symmetric Kronecker products, eigendecomposition-based
matrix functions, and condition-number estimation.  Everything here is
pure and operates blockwise, so appending 1x1 blocks (nonnegative
scalar variables) costs nothing.

svec stacks each block's lower triangle column by column with
off-diagonal entries scaled by sqrt(2), which makes the Euclidean inner
product of vectors equal the trace inner product of the matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import DimMismatch, LayoutMismatch, NoConvergence, NotPositiveDefinite, Singular

_SYM_TOL = 1e-14


@lru_cache(maxsize=None)
def _tril_indices_colmajor(n: int):
    """(rows, cols, weights) of the lower triangle in column-major order."""
    rows = np.concatenate([np.arange(c, n) for c in range(n)])
    cols = np.concatenate([np.full(n - c, c, dtype=np.intp) for c in range(n)])
    weights = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return rows, cols, weights


@lru_cache(maxsize=None)
def _svec_basis(n: int) -> np.ndarray:
    """The sv x n^2 matrix mapping vec (column-major) to svec.

    Rows are indexed like svec; U @ vec(M) == svec(M) for symmetric M,
    U @ U.T == I, and U.T @ U is the projector onto symmetric matrices.
    """
    rows, cols, _ = _tril_indices_colmajor(n)
    sv = len(rows)
    U = np.zeros((sv, n * n))
    for k, (i, j) in enumerate(zip(rows, cols)):
        if i == j:
            U[k, i + j * n] = 1.0
        else:
            U[k, i + j * n] = 1.0 / np.sqrt(2.0)
            U[k, j + i * n] = 1.0 / np.sqrt(2.0)
    return U


def svec_len(n: int) -> int:
    return n * (n + 1) // 2


def _symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


@dataclass(eq=False)
class SymMat:
    """Block-diagonal real symmetric matrix.

    Blocks are symmetrized on construction; a block whose asymmetry
    exceeds ``1e-14 * (1 + max|entry|)`` is rejected rather than
    silently repaired.
    """

    blocks: list[np.ndarray]

    def __post_init__(self):
        fixed = []
        for B in self.blocks:
            B = np.asarray(B, dtype=float)
            if B.ndim == 0:
                B = B.reshape(1, 1)
            if B.ndim != 2 or B.shape[0] != B.shape[1]:
                raise DimMismatch(f"block of shape {B.shape} is not square")
            gap = np.abs(B - B.T).max() if B.size else 0.0
            if gap > _SYM_TOL * (1.0 + np.abs(B).max(initial=0.0)):
                raise DimMismatch(f"block asymmetry {gap:.3e} exceeds tolerance")
            fixed.append(_symmetrize(B))
        self.blocks = fixed

    # -- construction helpers ------------------------------------------------

    @classmethod
    def _wrap(cls, blocks: list[np.ndarray]) -> "SymMat":
        # trusted path for blocks that are symmetric by construction;
        # skips the validation pass of the public constructor
        obj = object.__new__(cls)
        obj.blocks = blocks
        return obj

    @staticmethod
    def identity(block_sizes: Sequence[int]) -> "SymMat":
        return SymMat._wrap([np.eye(n) for n in block_sizes])

    @staticmethod
    def zeros(block_sizes: Sequence[int]) -> "SymMat":
        return SymMat._wrap([np.zeros((n, n)) for n in block_sizes])

    @staticmethod
    def from_scalars(values: Sequence[float]) -> "SymMat":
        """One 1x1 block per value."""
        return SymMat([np.array([[float(v)]]) for v in values])

    # -- structure -----------------------------------------------------------

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(B.shape[0] for B in self.blocks)

    @property
    def total_dim(self) -> int:
        return sum(self.block_sizes)

    def same_layout(self, other: "SymMat") -> bool:
        return self.block_sizes == other.block_sizes

    def copy(self) -> "SymMat":
        return SymMat._wrap([B.copy() for B in self.blocks])

    def to_dense(self) -> np.ndarray:
        return scipy.linalg.block_diag(*self.blocks)

    # -- arithmetic ----------------------------------------------------------

    def _check(self, other: "SymMat"):
        if not self.same_layout(other):
            raise DimMismatch(
                f"layouts differ: {self.block_sizes} vs {other.block_sizes}")

    def __add__(self, other: "SymMat") -> "SymMat":
        self._check(other)
        return SymMat._wrap([A + B for A, B in zip(self.blocks, other.blocks)])

    def __sub__(self, other: "SymMat") -> "SymMat":
        self._check(other)
        return SymMat._wrap([A - B for A, B in zip(self.blocks, other.blocks)])

    def __mul__(self, a: float) -> "SymMat":
        return SymMat._wrap([a * B for B in self.blocks])

    __rmul__ = __mul__

    def __neg__(self) -> "SymMat":
        return SymMat._wrap([-B for B in self.blocks])

    def dot(self, other: "SymMat") -> float:
        """Trace inner product."""
        self._check(other)
        return float(sum(np.tensordot(A, B) for A, B in zip(self.blocks, other.blocks)))

    def matmul_blocks(self, other: "SymMat") -> list[np.ndarray]:
        """Blockwise matrix product (generally not symmetric)."""
        self._check(other)
        return [A @ B for A, B in zip(self.blocks, other.blocks)]

    def norm_fro(self) -> float:
        return float(np.sqrt(sum(np.sum(B * B) for B in self.blocks)))

    def trace(self) -> float:
        return float(sum(np.trace(B) for B in self.blocks))

    def diag_scalars(self) -> np.ndarray:
        """Values of 1x1 blocks, in order. Errors if any block is larger."""
        if any(n != 1 for n in self.block_sizes):
            raise DimMismatch("not all blocks are 1x1")
        return np.array([B[0, 0] for B in self.blocks])


@dataclass
class SVec:
    """svec image of a SymMat, tagged with its block layout."""

    entries: np.ndarray
    block_sizes: tuple[int, ...]

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float).ravel()
        self.block_sizes = tuple(int(n) for n in self.block_sizes)
        if len(self.entries) != sum(svec_len(n) for n in self.block_sizes):
            raise LayoutMismatch(
                f"svec length {len(self.entries)} inconsistent with layout {self.block_sizes}")

    @property
    def block_layout(self) -> tuple[int, ...]:
        """Per-block svec lengths."""
        return tuple(svec_len(n) for n in self.block_sizes)

    def dot(self, other: "SVec") -> float:
        if self.block_sizes != other.block_sizes:
            raise LayoutMismatch("svec layouts differ")
        return float(self.entries @ other.entries)


def svec(U: SymMat) -> SVec:
    """Isometric vectorization of a block-diagonal symmetric matrix."""
    parts = []
    for B in U.blocks:
        r, c, w = _tril_indices_colmajor(B.shape[0])
        parts.append(B[r, c] * w)
    return SVec(np.concatenate(parts) if parts else np.zeros(0), U.block_sizes)


def smat(v: SVec) -> SymMat:
    """Inverse of :func:`svec`."""
    blocks = []
    off = 0
    for n in v.block_sizes:
        ln = svec_len(n)
        seg = v.entries[off:off + ln]
        off += ln
        r, c, w = _tril_indices_colmajor(n)
        B = np.zeros((n, n))
        B[r, c] = seg / w
        B = B + B.T
        B[np.arange(n), np.arange(n)] *= 0.5
        blocks.append(B)
    return SymMat._wrap(blocks)


def smat_array(entries: np.ndarray, block_sizes: Sequence[int]) -> SymMat:
    """smat from a raw array plus layout."""
    return smat(SVec(entries, tuple(block_sizes)))


# -- symmetric Kronecker product ----------------------------------------------


def sym_kron_block(G: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Dense symmetric Kronecker product of two n x n blocks.

    Returns the sv x sv matrix whose action on svec(M) is
    0.5 * svec(K M G^T + G M K^T).
    """
    if G.shape != K.shape or G.shape[0] != G.shape[1]:
        raise DimMismatch("sym_kron operands must be square and equal-sized")
    n = G.shape[0]
    if n == 1:
        return np.array([[G[0, 0] * K[0, 0]]])
    U = _svec_basis(n)
    GK = (G[:, None, :, None] * K[None, :, None, :]).reshape(n * n, n * n)
    KG = (K[:, None, :, None] * G[None, :, None, :]).reshape(n * n, n * n)
    return 0.5 * (U @ (GK + KG) @ U.T)


def sym_kron(G: Sequence[np.ndarray], K: Sequence[np.ndarray]) -> np.ndarray:
    """Blockwise symmetric Kronecker product as one dense operator.

    ``G`` and ``K`` are lists of square (not necessarily symmetric)
    blocks sharing one layout; the result acts on the stacked svec
    space and is block-diagonal there.
    """
    if len(G) != len(K):
        raise DimMismatch("block counts differ")
    return scipy.linalg.block_diag(*[sym_kron_block(g, k) for g, k in zip(G, K)])


def sym_kron_apply(G: Sequence[np.ndarray], K: Sequence[np.ndarray], v: SVec) -> SVec:
    """Matrix-free action of the blockwise symmetric Kronecker product."""
    M = smat(v)
    out = []
    for g, k, b in zip(G, K, M.blocks):
        out.append(0.5 * (k @ b @ g.T + g @ b @ k.T))
    return svec(SymMat._wrap(out))


# -- eigendecomposition-based kernels ------------------------------------------


def eig_sym(M: SymMat):
    """Blockwise symmetric eigendecomposition.

    Returns (list of ascending eigenvalue arrays, list of orthonormal
    eigenvector matrices), one pair per block.
    """
    vals, vecs = [], []
    for B in M.blocks:
        try:
            w, Q = np.linalg.eigh(B)
        except np.linalg.LinAlgError as exc:  # iteration cap inside LAPACK
            raise NoConvergence(f"eigendecomposition failed: {exc}") from exc
        vals.append(w)
        vecs.append(Q)
    return vals, vecs


def min_eig(M: SymMat) -> float:
    """Smallest eigenvalue over all blocks."""
    return float(min(np.linalg.eigvalsh(B).min() for B in M.blocks))


def psd_tol(M: SymMat) -> float:
    """Positive-definiteness gate at the eigensolver noise floor.

    Refinement rescales iterates by the inverse gap, so legitimate
    interior matrices carry eigenvalues as small as eps_mach * ||M||
    times a modest factor; the gate must sit at that floor, not at a
    fixed relative threshold, or late refinement rounds get rejected.
    """
    return np.finfo(float).eps * (1.0 + M.norm_fro())


_MAT_FNS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sqrt": np.sqrt,
    "invsqrt": lambda w: 1.0 / np.sqrt(w),
    "inv": lambda w: 1.0 / w,
}


def mat_fn(M: SymMat, fn: str, power: float | None = None) -> SymMat:
    """Apply a spectral function to a positive definite SymMat.

    ``fn`` is one of ``sqrt``, ``invsqrt``, ``inv``, ``power`` (with
    exponent ``power``).
    """
    if fn == "power":
        if power is None:
            raise ValueError("power exponent required")
        f = lambda w: np.power(w, power)  # noqa: E731
    elif fn in _MAT_FNS:
        f = _MAT_FNS[fn]
    else:
        raise ValueError(f"unknown matrix function {fn!r}")
    gate = psd_tol(M)
    out = []
    for B in M.blocks:
        w, Q = np.linalg.eigh(B)
        if w.min() <= gate:
            raise NotPositiveDefinite(
                f"matrix function {fn!r} needs a positive definite input",
                min_eigenvalue=float(w.min()))
        out.append(_symmetrize((Q * f(w)) @ Q.T))
    return SymMat._wrap(out)


# -- condition numbers ---------------------------------------------------------

_SIGMA_FLOOR = 1e-300
_EXACT_SVD_DIM = 2000


def spectral_norm_power(M: np.ndarray, iters: int = 20, seed: int = 7) -> float:
    """Largest singular value by power iteration on M^T M."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(iters):
        w = M.T @ (M @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        s = np.sqrt(nw)
    return float(s)


def cond_estimate(M: np.ndarray, mode: str = "auto") -> float:
    """Two-norm condition number of a dense square matrix.

    ``exact_svd`` computes all singular values; ``power_iter`` runs 30
    power iterations on M^T M for the largest and inverse iteration
    through an LU factorization for the smallest.  ``auto`` picks
    ``exact_svd`` up to dimension 2000.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimMismatch("cond_estimate expects a square matrix")
    if mode == "auto":
        mode = "exact_svd" if M.shape[0] <= _EXACT_SVD_DIM else "power_iter"
    if mode == "exact_svd":
        s = np.linalg.svd(M, compute_uv=False)
        smin = s.min()
        if smin < _SIGMA_FLOOR:
            raise Singular("smallest singular value below floor")
        return float(s.max() / smin)
    if mode != "power_iter":
        raise ValueError(f"unknown mode {mode!r}")
    smax = spectral_norm_power(M, iters=30)
    try:
        lu = scipy.linalg.lu_factor(M)
    except scipy.linalg.LinAlgError as exc:
        raise Singular(str(exc)) from exc
    rng = np.random.default_rng(11)
    v = rng.standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    smin_inv = 0.0
    for _ in range(30):
        # one step of inverse iteration on M^T M
        w = scipy.linalg.lu_solve(lu, v)
        w = scipy.linalg.lu_solve(lu, w, trans=1)
        nw = np.linalg.norm(w)
        if not np.isfinite(nw) or nw == 0.0:
            raise Singular("inverse iteration diverged")
        v = w / nw
        smin_inv = np.sqrt(nw)
    smin = 1.0 / smin_inv
    if smin < _SIGMA_FLOOR:
        raise Singular("smallest singular value below floor")
    return float(smax / smin)
