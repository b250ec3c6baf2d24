"""Short-step feasible interior-point loops with inexact Newton steps.

One iteration targets sigma*mu with sigma = 1 - delta/sqrt(N) and takes
the full unit step; the parameter triple (gamma, delta, beta) must
satisfy the convergence inequalities checked in ``validate_config``,
which in turn guarantee every iterate stays inside the Frobenius
neighborhood N_F(gamma) and that mu shrinks by the factor sigma
exactly whenever the Newton system is solved exactly (the directions
are trace-orthogonal, so the gap update is linear).

Inexact solves are allowed as long as the residual of the assembled
system stays below beta*mu; feasibility is unaffected by construction,
only the complementarity target blurs.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .embedding import (
    SelfDualPoint, SelfDualProblem, constraint_residual_norm, initial_point,
)
from .errors import (
    InvalidParameters, MaxIterations, NeighborhoodEscape, NonConverged,
    NotStrictlyFeasible,
)
from .model import PrimalDualPoint, SdoProblem, neighborhood_distance, residuals
from .newton import (
    OssSystem, ScalingChoice, assemble_oss_selfdual, assemble_oss_standard,
    embedding_null_basis, nullspace_basis, recover_direction_selfdual,
    recover_direction_standard, refine_newton_solution, refinement_needed,
    scaling_pair, split_oss_solution, stacked_pair,
)
from .solvers import newton_tolerance, solve_direct, solve_iterative_normal
from .symmat import cond_estimate, min_eig

log = logging.getLogger("refine_sdo.ifipm")

_DIRECT_DIM_LIMIT = 400
_MAX_STEP_HALVINGS = 30


def _distance_noise(X, S) -> float:
    """Absolute floor below which off-centrality cannot be driven.

    Assembling the scaled system loses roughly eps_mach * ||X|| ||S||
    of complementarity accuracy to cancellation (the scaling matrix
    and the symmetrized product both contract intermediates of that
    size down to size mu), so Newton centering stalls at this level.
    Iterates wandering inside the floor are still exactly feasible
    with a correct gap, which is all the refinement layer consumes; a
    breach beyond the floor is a real invariant violation.  The factor
    is calibrated with ~6x margin against the observed stall level of
    deep eta-scaled refinement rounds.
    """
    return 16384.0 * np.finfo(float).eps * max(1.0, X.norm_fro() * S.norm_fro())


@dataclass
class IpmConfig:
    """Knobs for one interior-point run.

    ``beta = None`` resolves to half the largest admissible value at
    the given dimension.  ``target_eps`` is the absolute gap threshold
    (the loop runs while N*mu exceeds it).
    """

    gamma: float = 0.05
    delta: float = 0.05
    beta: Optional[float] = None
    scaling: ScalingChoice = ScalingChoice.NT
    solver: str = "auto"            # auto | direct | iterative
    max_iterations: Optional[int] = None
    target_eps: float = 1e-2
    track_kappa: bool = False


@dataclass
class ValidatedConfig:
    gamma: float
    delta: float
    beta: float
    sigma: float
    scaling: ScalingChoice
    solver: str
    max_iterations: int
    target_eps: float
    track_kappa: bool
    dim: int


def beta_bounds(gamma: float, delta: float, dim: int) -> tuple[float, float]:
    """Upper bounds on beta from the two convergence inequalities."""
    sigma = 1.0 - delta / math.sqrt(dim)
    b2 = math.sqrt((gamma ** 2 + (1.0 - sigma) ** 2 * dim) / (1.0 - gamma)) / sigma
    b3 = 1.0 - gamma / math.sqrt(dim) \
        - 21.7 * (gamma ** 2 + delta ** 2) / ((2.0 + math.sqrt(2.0)) * sigma * gamma * (1.0 - gamma))
    return b2, b3


def validate_config(cfg: IpmConfig, dim: int, mu0: float = 1.0) -> ValidatedConfig:
    """Resolve defaults and verify the three parameter inequalities."""
    gamma, delta = cfg.gamma, cfg.delta
    if not (0.0 < gamma < 1.0 and 0.0 < delta < 1.0):
        raise InvalidParameters("gamma and delta must lie in (0, 1)")
    if dim < 1:
        raise InvalidParameters("dimension must be positive")
    sigma = 1.0 - delta / math.sqrt(dim)
    if 2.0 * math.sqrt(2.0) * gamma / (1.0 - gamma) > 1.0 + 1e-12:
        raise InvalidParameters(
            f"neighborhood inequality violated: 2*sqrt(2)*gamma/(1-gamma) = "
            f"{2 * math.sqrt(2) * gamma / (1 - gamma):.4f} > 1")
    b2, b3 = beta_bounds(gamma, delta, dim)
    if b3 <= 0.0:
        raise InvalidParameters(
            f"residual inequality has no admissible beta: bound {b3:.4f} <= 0 "
            f"(gamma/delta too large)")
    beta = cfg.beta
    if beta is None:
        beta = 0.5 * min(b2, b3)
    if not (0.0 < beta < 1.0):
        raise InvalidParameters("beta must lie in (0, 1)")
    if beta * sigma > math.sqrt((gamma ** 2 + (1 - sigma) ** 2 * dim) / (1 - gamma)) + 1e-12:
        raise InvalidParameters(
            f"centering inequality violated: beta*sigma = {beta * sigma:.4f} "
            f"> {b2 * sigma:.4f}")
    if beta > b3 + 1e-12:
        raise InvalidParameters(
            f"residual inequality violated: beta = {beta:.4f} > {b3:.4f}")
    if cfg.solver not in ("auto", "direct", "iterative"):
        raise InvalidParameters(f"unknown solver {cfg.solver!r}")
    max_iterations = cfg.max_iterations
    if max_iterations is None:
        horizon = math.log(max(dim * mu0 / cfg.target_eps, math.e))
        max_iterations = 2 * math.ceil(math.sqrt(dim) / delta * horizon) + 20
    return ValidatedConfig(
        gamma=gamma, delta=delta, beta=beta, sigma=sigma, scaling=cfg.scaling,
        solver=cfg.solver, max_iterations=max_iterations,
        target_eps=cfg.target_eps, track_kappa=cfg.track_kappa, dim=dim)


@dataclass
class IpmIteration:
    k: int
    mu: float
    gap: float
    neighborhood_distance: float
    solver_residual: float
    solver_iterations: int
    solver_method: str
    step_length: float
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    kappa: Optional[float] = None
    wall_time: float = 0.0

    def to_dict(self):
        d = {
            "k": self.k, "mu": self.mu, "gap": self.gap,
            "neighborhood_distance": self.neighborhood_distance,
            "solver_residual": self.solver_residual,
            "solver_iterations": self.solver_iterations,
            "solver_method": self.solver_method,
            "step_length": self.step_length,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
        }
        if self.kappa is not None:
            d["kappa"] = self.kappa
        return d


@dataclass
class IterationTrace:
    iterations: list[IpmIteration] = field(default_factory=list)
    final_gap: float = float("nan")
    final_mu: float = float("nan")

    def append(self, row: IpmIteration):
        self.iterations.append(row)

    def __len__(self):
        return len(self.iterations)

    def mus(self) -> np.ndarray:
        return np.array([r.mu for r in self.iterations])


def _solve_system(sys: OssSystem, vcfg: ValidatedConfig):
    """Direct or residual-bounded iterative solve of one assembled system.

    When the assembly's cancellation floor approaches the mu scale
    (deep refinement rounds), the solution is polished against an
    extended-precision residual of the exact symmetrized equations.
    """
    use_direct = vcfg.solver == "direct" or (
        vcfg.solver == "auto" and sys.dim <= _DIRECT_DIM_LIMIT)
    if use_direct:
        rep = solve_direct(sys.M, sys.rhs)
    else:
        # keep the complementarity residual below beta*mu whatever the norm
        tol = min(newton_tolerance(vcfg.beta, sys.mu, sys.M), vcfg.beta * sys.mu)
        try:
            rep = solve_iterative_normal(sys.M, sys.rhs, tol_abs=tol)
        except NonConverged as exc:
            log.warning("iterative solve missed tolerance (%s); retrying direct", exc)
            rep = solve_direct(sys.M, sys.rhs)
    if refinement_needed(sys):
        z = refine_newton_solution(sys, rep.solution)
        rep.solution = z
        rep.residual_norm = float(np.linalg.norm(sys.M @ z - sys.rhs))
    return rep


def _positive_step(min_eig_at) -> float:
    """Largest alpha in {1, 1/2, ...} keeping both cone variables inside.

    A pure roundoff guard: the short-step theory takes alpha = 1, and a
    shrink below 1 is logged as a deviation.
    """
    alpha = 1.0
    for _ in range(_MAX_STEP_HALVINGS):
        if min_eig_at(alpha) > 0.0:
            return alpha
        alpha *= 0.5
    raise NeighborhoodEscape("no positive-definite step length found")


def ipm_solve_standard(prob: SdoProblem, start: PrimalDualPoint, cfg: IpmConfig,
                       Q2: Optional[np.ndarray] = None):
    """Run the feasible short-step loop on a standard-form problem.

    ``start`` must be strictly feasible and inside N_F(gamma); pass a
    precomputed null-space basis ``Q2`` to amortize the factorization
    across repeated solves that share constraint rows.
    """
    gap0 = start.X.dot(start.S)
    vcfg = validate_config(cfg, prob.complementarity_dim,
                           mu0=max(gap0 / prob.complementarity_dim, 1e-300))
    primal, dual, gap, mu = residuals(prob, start)
    scale = prob.data_scale()
    if np.abs(primal).max(initial=0.0) > 1e-8 * scale or dual.norm_fro() > 1e-8 * scale:
        raise NotStrictlyFeasible("start violates the linear constraints")
    if min_eig(start.X) <= 0.0 or min_eig(start.S) <= 0.0:
        raise NotStrictlyFeasible("start is not in the interior of the cone")
    dist, mu = neighborhood_distance(start, prob)
    if dist > vcfg.gamma * mu * (1.0 + 1e-9) + _distance_noise(start.X, start.S):
        raise NotStrictlyFeasible(
            f"start lies outside N_F({vcfg.gamma}): distance {dist:.3e} vs "
            f"{vcfg.gamma * mu:.3e}")
    if Q2 is None:
        Q2 = nullspace_basis(prob.constraint_rows())

    pt = start.copy()
    trace = IterationTrace()
    k = 0
    while gap > vcfg.target_eps:
        if k >= vcfg.max_iterations:
            raise MaxIterations(f"gap {gap:.3e} after {k} iterations")
        t0 = time.perf_counter()
        P, Pinv = scaling_pair(pt.X, pt.S, vcfg.scaling)
        sys = assemble_oss_standard(prob, pt, P, vcfg.sigma, mu, Q2,
                                    scaling=vcfg.scaling, Pinv=Pinv)
        rep = _solve_system(sys, vcfg)
        lam, dy = split_oss_solution(rep.solution, sys)
        DX, dy, DS = recover_direction_standard(lam, dy, sys)

        def eig_at(alpha, pt=pt, DX=DX, DS=DS):
            return min(min_eig(pt.X + alpha * DX), min_eig(pt.S + alpha * DS))

        alpha = _positive_step(eig_at)
        if alpha < 1.0:
            log.warning("step length reduced to %g to preserve definiteness", alpha)
        pt = PrimalDualPoint(pt.X + alpha * DX, pt.y + alpha * dy,
                             pt.S + alpha * DS, pt.u)
        primal, dual, gap, mu = residuals(prob, pt)
        dist, _ = neighborhood_distance(pt, prob, mu=mu)
        if dist > vcfg.gamma * mu * (1.0 + 1e-7) + _distance_noise(pt.X, pt.S):
            raise NeighborhoodEscape(
                f"iterate {k + 1} left N_F({vcfg.gamma}): distance {dist:.3e} "
                f"vs {vcfg.gamma * mu:.3e}")
        kappa = cond_estimate(sys.M) if vcfg.track_kappa else None
        trace.append(IpmIteration(
            k=k + 1, mu=mu, gap=gap, neighborhood_distance=dist,
            solver_residual=rep.residual_norm, solver_iterations=rep.iterations,
            solver_method=rep.method, step_length=alpha,
            primal_residual=float(np.abs(primal).max(initial=0.0)),
            dual_residual=dual.norm_fro(), kappa=kappa,
            wall_time=time.perf_counter() - t0))
        k += 1
    trace.final_gap = gap
    trace.final_mu = gap / prob.complementarity_dim
    return pt, trace


def ipm_solve_selfdual(emb: SelfDualProblem, cfg: IpmConfig,
                       start: Optional[SelfDualPoint] = None,
                       V: Optional[np.ndarray] = None):
    """Run the short-step loop on the self-dual embedding.

    No start is needed: the embedding ships its own perfectly centered
    interior point.  The null-space basis is closed-form, so there is
    no preprocessing factorization either.
    """
    pt = initial_point(emb) if start is None else start.copy()
    N = emb.complementarity_dim
    gap = pt.gap()
    vcfg = validate_config(cfg, N, mu0=max(gap / N, 1e-300))
    if V is None:
        V = embedding_null_basis(emb)
    if start is not None:
        Z0, W0 = stacked_pair(pt)
        dist0, mu0 = neighborhood_distance(PrimalDualPoint(Z0, np.zeros(0), W0),
                                           mu=gap / N)
        if dist0 > vcfg.gamma * mu0 * (1.0 + 1e-9) + _distance_noise(Z0, W0):
            raise NotStrictlyFeasible(
                f"start lies outside N_F({vcfg.gamma}) of the embedding")

    trace = IterationTrace()
    k = 0
    mu = gap / N
    while gap > vcfg.target_eps:
        if k >= vcfg.max_iterations:
            raise MaxIterations(f"embedding gap {gap:.3e} after {k} iterations")
        t0 = time.perf_counter()
        sys = assemble_oss_selfdual(emb, pt, vcfg.sigma, mu, vcfg.scaling, V=V)
        rep = _solve_system(sys, vcfg)
        delta = recover_direction_selfdual(rep.solution, sys)

        def eig_at(alpha, pt=pt, delta=delta):
            nxt = pt.add(delta, alpha)
            slack_min = min(nxt.tau, nxt.theta, nxt.phi, nxt.rho,
                            nxt.y.min(initial=np.inf), nxt.u.min(initial=np.inf))
            return min(min_eig(nxt.X), min_eig(nxt.S), slack_min)

        alpha = _positive_step(eig_at)
        if alpha < 1.0:
            log.warning("step length reduced to %g to preserve definiteness", alpha)
        pt = pt.add(delta, alpha)
        gap = pt.gap()
        mu = gap / N
        Z, W = stacked_pair(pt)
        big = PrimalDualPoint(Z, np.zeros(0), W)
        dist, _ = neighborhood_distance(big, mu=mu)
        if dist > vcfg.gamma * mu * (1.0 + 1e-7) + _distance_noise(Z, W):
            raise NeighborhoodEscape(
                f"embedding iterate {k + 1} left N_F({vcfg.gamma}): "
                f"distance {dist:.3e} vs {vcfg.gamma * mu:.3e}")
        kappa = cond_estimate(sys.M) if vcfg.track_kappa else None
        trace.append(IpmIteration(
            k=k + 1, mu=mu, gap=gap, neighborhood_distance=dist,
            solver_residual=rep.residual_norm, solver_iterations=rep.iterations,
            solver_method=rep.method, step_length=alpha,
            primal_residual=constraint_residual_norm(emb, pt),
            dual_residual=0.0, kappa=kappa,
            wall_time=time.perf_counter() - t0))
        k += 1
    trace.final_gap = gap
    trace.final_mu = mu
    return pt, trace
