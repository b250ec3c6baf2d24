"""Iterative-refinement outer loops.

A limited-precision oracle is called once per outer iteration on a
*refining problem*: the original constraints with the right-hand side
and objective rescaled by eta = 1/gap around the current anchor point.
Mapping the oracle's answer back divides its fixed error by eta, so
the duality gap obeys

    gap_{k+1} <= eps_oracle * gap_k^2

and machine precision is reached in O(log log) outer iterations.  Two
further variants accept oracles whose answers are slightly infeasible:
one that recomputes the dual slack from scratch each round (suited to
oracles with an exact dual slack) and one that refines the dual slack
incrementally (suited to interior oracles with residuals on both
sides).  Both drive the combined error measure down linearly in the
number of outer rounds while the gap still shrinks quadratically.

In scaled variables the refining problem is again a standard-form
problem with data (A, eta*b, eta*S), so oracles never see shifted
cones; the anchor scaled by eta is a ready-made interior warm start.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import MaxIterations, NotStrictlyFeasible, OracleFailure
from .model import Form, PrimalDualPoint, SdoProblem, residuals
from .symmat import SymMat, min_eig

log = logging.getLogger("refine_sdo.refine")


class Variant(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE_NI = "infeasible-ni"
    INFEASIBLE_II = "infeasible-ii"


class WarmStart(enum.Enum):
    REF_POINT = "ref-point"
    CURRENT_POINT = "current-point"


@dataclass(eq=False)
class RefiningProblem:
    """One scaled refining problem around an anchor point."""

    variant: Variant
    base: SdoProblem
    anchor: PrimalDualPoint
    eta: float
    rhs_shift: np.ndarray          # eta * (b_i - A_i.anchor) terms; zero if feasible
    objective: SymMat              # scaled objective of the shifted problem
    standard_image: SdoProblem     # equivalent plain standard-form problem
    objective_constant: float      # constant dropped from the image objective

    @property
    def image_rhs(self) -> np.ndarray:
        return self.standard_image.rhs


def _image_problem(base: SdoProblem, eta: float, objective: SymMat) -> SdoProblem:
    """Standard-form image (A, eta*b, objective), reusing cached rows."""
    img = SdoProblem(base.constraint_mats, eta * base.rhs, objective, Form.STANDARD)
    img._A_s = base.constraint_rows()
    return img


def build_refining_feasible(prob: SdoProblem, pt: PrimalDualPoint, eta: float):
    """Refining problem around a strictly feasible anchor.

    In shifted variables the constraints read A_i.Xbar = 0 with the
    cone shifted to Xbar >= -eta X; adding eta X back gives the image
    (A, eta*b, eta*S) whose complementarity gap equals the shifted
    problem's.  Returns (refining problem, its standard image).
    """
    primal, dual, _, _ = residuals(prob, pt)
    scale = prob.data_scale()
    if np.abs(primal).max(initial=0.0) > 1e-8 * scale or dual.norm_fro() > 1e-8 * scale:
        raise NotStrictlyFeasible("anchor violates the linear constraints")
    if min_eig(pt.X) <= 0.0 or min_eig(pt.S) <= 0.0:
        raise NotStrictlyFeasible("anchor is not interior")
    if eta < 1.0:
        raise ValueError("eta must be at least 1")
    objective = eta * pt.S
    image = _image_problem(prob, eta, objective)
    ref = RefiningProblem(
        variant=Variant.FEASIBLE, base=prob, anchor=pt.copy(), eta=eta,
        rhs_shift=np.zeros(prob.m), objective=objective,
        standard_image=image,
        objective_constant=-eta ** 2 * pt.S.dot(pt.X))
    return ref, image


def warm_start(choice: WarmStart, pt: PrimalDualPoint,
               interior_ref: Optional[PrimalDualPoint], eta: float,
               image: SdoProblem) -> PrimalDualPoint:
    """Interior start for a refining image.

    CURRENT_POINT uses (eta X, 0, eta S); REF_POINT uses a stored
    interior solution of the base problem as (eta Xref,
    eta (yref - y), eta Sref).  Either way the start is verified to be
    strictly feasible for the image before it is returned.
    """
    if choice is WarmStart.CURRENT_POINT:
        cand = PrimalDualPoint(eta * pt.X, np.zeros(image.m), eta * pt.S)
    else:
        if interior_ref is None:
            raise ValueError("REF_POINT warm start needs an interior reference")
        cand = PrimalDualPoint(eta * interior_ref.X,
                               eta * (interior_ref.y - pt.y),
                               eta * interior_ref.S)
    primal, dual, _, _ = residuals(image, cand)
    scale = image.data_scale()
    if np.abs(primal).max(initial=0.0) > 1e-8 * scale or dual.norm_fro() > 1e-8 * scale:
        raise NotStrictlyFeasible("warm start is infeasible for the refining problem")
    if min_eig(cand.X) <= 0.0 or min_eig(cand.S) <= 0.0:
        raise NotStrictlyFeasible("warm start is not interior")
    return cand


@dataclass
class IrIteration:
    k: int
    gap: float
    eta: float
    residual: Optional[float]       # combined error measure, infeasible variants
    oracle_iterations: int
    oracle_mu0: float
    kappa: Optional[float] = None
    wall_time: float = 0.0

    def to_dict(self):
        d = {"k": self.k, "gap": self.gap, "eta": self.eta,
             "oracle_iterations": self.oracle_iterations,
             "oracle_mu0": self.oracle_mu0}
        if self.residual is not None:
            d["residual"] = self.residual
        if self.kappa is not None:
            d["kappa"] = self.kappa
        return d


@dataclass
class IrTrace:
    variant: str = "feasible"
    iterations: list[IrIteration] = field(default_factory=list)
    final_gap: float = float("nan")
    oracle_traces: list = field(default_factory=list)

    def append(self, row: IrIteration):
        self.iterations.append(row)

    def __len__(self):
        return len(self.iterations)

    def gaps(self) -> np.ndarray:
        return np.array([r.gap for r in self.iterations])


Oracle = Callable[[SdoProblem, Optional[PrimalDualPoint], float], tuple]


def _call_oracle(oracle: Oracle, fallback: Optional[Oracle], image: SdoProblem,
                 start: Optional[PrimalDualPoint], eps: float):
    pt, trace = oracle(image, start, eps)
    gap = pt.X.dot(pt.S)
    if gap > eps * (1.0 + 1e-9):
        if fallback is not None:
            log.warning("oracle gap %.3e exceeds %.3e; retrying with fallback",
                        gap, eps)
            pt, trace = fallback(image, start, eps)
            gap = pt.X.dot(pt.S)
        if gap > eps * (1.0 + 1e-9):
            raise OracleFailure(f"oracle returned gap {gap:.3e} > {eps:.3e}")
    return pt, trace


def _outer_cap_feasible(eps_oracle: float, eps_final: float) -> int:
    doublings = math.log(math.log(eps_final) / math.log(eps_oracle), 2.0)
    return max(1, math.ceil(doublings)) + 3


def ir_feasible(prob: SdoProblem, start: PrimalDualPoint, eps_oracle: float,
                eps_final: float, oracle: Oracle,
                oracle_fallback: Optional[Oracle] = None,
                interior_ref: Optional[PrimalDualPoint] = None,
                warm: WarmStart = WarmStart.CURRENT_POINT):
    """Quadratically convergent refinement over a feasible oracle.

    ``oracle(problem, start, eps)`` must return an interior feasible
    point of ``problem`` with gap at most eps, plus its trace.  The
    dual slack is recomputed from C and y after every outer round.
    """
    if not (0.0 < eps_final < eps_oracle < 1.0):
        raise ValueError("need 0 < eps_final < eps_oracle < 1")
    trace = IrTrace(variant=Variant.FEASIBLE.value)
    cap = _outer_cap_feasible(eps_oracle, eps_final)

    t0 = time.perf_counter()
    pt, otrace = _call_oracle(oracle, oracle_fallback, prob, start, eps_oracle)
    gap = pt.X.dot(pt.S)
    trace.oracle_traces.append(otrace)
    trace.append(IrIteration(
        k=1, gap=gap, eta=1.0, residual=None,
        oracle_iterations=len(otrace), oracle_mu0=start.mu(prob),
        wall_time=time.perf_counter() - t0))

    k = 1
    while gap > eps_final:
        if k >= cap:
            raise MaxIterations(
                f"gap {gap:.3e} after {k} outer iterations (cap {cap})")
        t0 = time.perf_counter()
        eta = 1.0 / gap
        # a non-terminal round is solved to (0.9x) the oracle precision,
        # which drives the quadratic contraction; the terminal round is
        # only taken as deep as the final target requires, since in
        # scaled variables every extra decade costs accuracy against
        # the eps_mach * ||X|| ||S|| complementarity floor
        eps_call = eta ** 2 * max(0.81 * eps_final,
                                  0.9 * eps_oracle * gap * gap)
        ref, image = build_refining_feasible(prob, pt, eta)
        ws = warm_start(warm, pt, interior_ref, eta, image)
        mu0 = ws.mu(image)
        hat, otrace = _call_oracle(oracle, oracle_fallback, image, ws, eps_call)
        # map back: X <- Xhat/eta, y <- y + yhat/eta, S <- C - sum y A
        X = (1.0 / eta) * hat.X
        y = pt.y + hat.y / eta
        S = prob.objective.copy()
        for yi, Ai in zip(y, prob.constraint_mats):
            S = S - yi * Ai
        pt = PrimalDualPoint(X, y, S)
        gap = pt.X.dot(pt.S)
        k += 1
        trace.oracle_traces.append(otrace)
        trace.append(IrIteration(
            k=k, gap=gap, eta=eta, residual=None,
            oracle_iterations=len(otrace), oracle_mu0=mu0,
            wall_time=time.perf_counter() - t0))
    trace.final_gap = gap
    return pt, trace


# -- infeasible variants ---------------------------------------------------------


def primal_defect(prob: SdoProblem, pt: PrimalDualPoint) -> np.ndarray:
    """bbar_i = b_i - A_i.X for the current anchor."""
    return np.array([bi - Ai.dot(pt.X)
                     for Ai, bi in zip(prob.constraint_mats, prob.rhs)])


def dual_defect(prob: SdoProblem, pt: PrimalDualPoint) -> SymMat:
    """Cbar = C - sum_i y_i A_i - S for the current anchor."""
    Cbar = prob.objective.copy()
    for yi, Ai in zip(pt.y, prob.constraint_mats):
        Cbar = Cbar - yi * Ai
    return Cbar - pt.S


def residual_in(prob: SdoProblem, pt: PrimalDualPoint) -> float:
    """Combined error for the non-interior oracle variant."""
    bbar = primal_defect(prob, pt)
    return max(float(np.abs(bbar).max(initial=0.0)),
               pt.X.dot(pt.S),
               max(-min_eig(pt.X), 0.0),
               max(-min_eig(pt.S), 0.0))


def residual_ii(prob: SdoProblem, pt: PrimalDualPoint) -> float:
    """Combined error for the interior oracle variant."""
    bbar = primal_defect(prob, pt)
    return max(float(np.abs(bbar).max(initial=0.0)),
               pt.X.dot(pt.S),
               dual_defect(prob, pt).norm_fro())


def build_refining_in(prob: SdoProblem, pt: PrimalDualPoint, eta: float):
    """Refining problem around a possibly infeasible, non-interior anchor.

    Constraints carry the scaled primal defect; in shifted variables
    the image right-hand side collapses back to eta*b, so the image is
    (A, eta*b, eta*S) exactly as in the feasible variant.
    """
    bbar = primal_defect(prob, pt)
    objective = eta * pt.S
    image = _image_problem(prob, eta, objective)
    return RefiningProblem(
        variant=Variant.INFEASIBLE_NI, base=prob, anchor=pt.copy(), eta=eta,
        rhs_shift=eta * bbar, objective=objective, standard_image=image,
        objective_constant=-eta ** 2 * pt.S.dot(pt.X))


def build_refining_ii(prob: SdoProblem, pt: PrimalDualPoint, eta: float):
    """Refining problem that also absorbs the dual defect.

    The shifted objective is eta*(Cbar + S) = eta*(C - sum y_i A_i);
    the dual refining solution updates S incrementally rather than by
    recomputation.
    """
    bbar = primal_defect(prob, pt)
    Cbar = dual_defect(prob, pt)
    objective = eta * (Cbar + pt.S)
    image = _image_problem(prob, eta, objective)
    return RefiningProblem(
        variant=Variant.INFEASIBLE_II, base=prob, anchor=pt.copy(), eta=eta,
        rhs_shift=eta * bbar, objective=objective, standard_image=image,
        objective_constant=-eta ** 2 * (Cbar + pt.S).dot(pt.X))


def _outer_cap_infeasible(eps_oracle: float, eps_final: float, rho: float) -> int:
    theta = min(rho, 1.0 / eps_oracle)
    return max(1, math.ceil(math.log(eps_oracle / eps_final) / math.log(theta))) + 3


def _ir_infeasible(prob, eps_oracle, eps_final, rho, oracle, oracle_fallback,
                   start, variant: Variant):
    if rho <= 1.0:
        raise ValueError("rho must exceed 1")
    if not (0.0 < eps_final < eps_oracle < 1.0):
        raise ValueError("need 0 < eps_final < eps_oracle < 1")
    resid_fn = residual_in if variant is Variant.INFEASIBLE_NI else residual_ii
    build_fn = build_refining_in if variant is Variant.INFEASIBLE_NI else build_refining_ii
    trace = IrTrace(variant=variant.value)
    cap = _outer_cap_infeasible(eps_oracle, eps_final, rho)

    t0 = time.perf_counter()
    pt, otrace = _call_oracle(oracle, oracle_fallback, prob, start, eps_oracle)
    eta = 1.0
    r = resid_fn(prob, pt)
    trace.oracle_traces.append(otrace)
    trace.append(IrIteration(
        k=1, gap=pt.X.dot(pt.S), eta=eta, residual=r,
        oracle_iterations=len(otrace),
        oracle_mu0=start.mu(prob) if start is not None else float("nan"),
        wall_time=time.perf_counter() - t0))

    k = 1
    while r > eps_final:
        if k >= cap:
            raise MaxIterations(
                f"residual {r:.3e} after {k} outer iterations (cap {cap})")
        t0 = time.perf_counter()
        eta = min(1.0 / r, rho * eta)
        ref = build_fn(prob, pt, eta)
        image = ref.standard_image
        ws = PrimalDualPoint(eta * pt.X, np.zeros(prob.m), eta * pt.S)
        mu0 = ws.X.dot(ws.S) / image.complementarity_dim
        hat, otrace = _call_oracle(oracle, oracle_fallback, image, ws, eps_oracle)
        X = (1.0 / eta) * hat.X
        y = pt.y + hat.y / eta
        if variant is Variant.INFEASIBLE_NI:
            S = prob.objective.copy()
            for yi, Ai in zip(y, prob.constraint_mats):
                S = S - yi * Ai
        else:
            S = (1.0 / eta) * hat.S
        pt = PrimalDualPoint(X, y, S)
        r = resid_fn(prob, pt)
        k += 1
        trace.oracle_traces.append(otrace)
        trace.append(IrIteration(
            k=k, gap=pt.X.dot(pt.S), eta=eta, residual=r,
            oracle_iterations=len(otrace), oracle_mu0=mu0,
            wall_time=time.perf_counter() - t0))
    trace.final_gap = pt.X.dot(pt.S)
    return pt, trace


def ir_infeasible_ni(prob: SdoProblem, eps_oracle: float, eps_final: float,
                     rho: float, oracle: Oracle,
                     oracle_fallback: Optional[Oracle] = None,
                     start: Optional[PrimalDualPoint] = None):
    """Refinement over an oracle with bounded infeasibility and negativity.

    The dual slack is recomputed from C and y each round, so the
    oracle's dual constraint must hold exactly.
    """
    return _ir_infeasible(prob, eps_oracle, eps_final, rho, oracle,
                          oracle_fallback, start, Variant.INFEASIBLE_NI)


def ir_infeasible_ii(prob: SdoProblem, eps_oracle: float, eps_final: float,
                     rho: float, oracle: Oracle,
                     oracle_fallback: Optional[Oracle] = None,
                     start: Optional[PrimalDualPoint] = None):
    """Refinement over an interior oracle with residuals on both sides.

    S is refined incrementally from the oracle's dual slack, so dual
    infeasibility shrinks with eta as well.
    """
    return _ir_infeasible(prob, eps_oracle, eps_final, rho, oracle,
                          oracle_fallback, start, Variant.INFEASIBLE_II)
