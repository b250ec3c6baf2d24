"""End-to-end solve pipelines and oracle factories.

The default route needs no user-supplied starting point: the problem
is embedded in its self-dual model once, the short-step loop brings
the embedding gap down to the oracle precision, and the refinement
loop then squares the gap per outer round *on the embedding itself*
(rewritten as one standard-form problem, whose constraint rows never
change across refining problems, so the null-space basis is factored
once).  Refining the embedding rather than an extracted point keeps
every anchor exactly feasible; extraction happens only at the end,
leaving both the gap and the constraint residuals of the returned pair
at the target precision.

The infeasible refinement variants are wired to a start-free oracle
that embeds each refining problem afresh.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .embedding import (
    ImprovingRay, Optimal, build_embedding, embedding_to_standard,
    extract_solution,
)
from .errors import OracleFailure
from .ifipm import IpmConfig, IterationTrace, ipm_solve_selfdual, ipm_solve_standard
from .model import (
    Form, PrimalDualPoint, SdoProblem, canonical_to_standard, residuals,
    standard_to_canonical,
)
from .newton import embedding_null_basis, nullspace_basis
from .refine import IrTrace, Variant, ir_feasible, ir_infeasible_ii, ir_infeasible_ni
log = logging.getLogger("refine_sdo.driver")


def make_ipm_oracle(base_cfg: IpmConfig, solver: Optional[str] = None):
    """Feasible-IPM oracle with a null-space-basis cache.

    Refining problems share constraint matrices with their base
    problem, so the QR factorization is reused across outer rounds.
    """
    cfg = base_cfg if solver is None else replace(base_cfg, solver=solver)
    cache: dict[tuple, np.ndarray] = {}

    def oracle(problem: SdoProblem, start: PrimalDualPoint, eps: float):
        key = tuple(id(A) for A in problem.constraint_mats)
        Q2 = cache.get(key)
        if Q2 is None:
            Q2 = nullspace_basis(problem.constraint_rows())
            cache[key] = Q2
        run_cfg = replace(cfg, target_eps=eps)
        return ipm_solve_standard(problem, start, run_cfg, Q2=Q2)

    return oracle


def make_embedding_oracle(base_cfg: IpmConfig):
    """Start-free oracle: embed, solve, extract.

    Returns interior points for a standard-form problem whose
    constraint violation and gap are both at the oracle precision
    (an infeasible-interior grade answer; suitable for the refinement
    variants that tolerate residuals).
    """

    def oracle(problem: SdoProblem, start, eps: float):
        from .refine import dual_defect, primal_defect
        # refining images carry the gap-inverse scale in their data; the
        # embedding needs O(1) geometry or tau collapses, so normalize
        # first and carry the scales back through the extraction
        s_b = max(1.0, float(np.abs(problem.rhs).max(initial=0.0)))
        s_c = max(1.0, problem.objective.norm_fro())
        normalized = SdoProblem(problem.constraint_mats, problem.rhs / s_b,
                                (1.0 / s_c) * problem.objective, Form.STANDARD)
        normalized._A_s = problem.constraint_rows()
        canon, _, _ = standard_to_canonical(normalized)
        emb = build_embedding(canon)
        # refining problems are solvable by construction, so tau is a
        # pure back-scaling here, no trichotomy needed.  Extraction
        # divides the gap by tau^2, which is unknown until a first
        # solve has run; tighten until the extracted pair itself meets
        # the requested precision in original units
        target = eps / (s_b * s_c)
        quality = math.inf
        for _ in range(4):
            run_cfg = replace(base_cfg, target_eps=target)
            pt_emb, trace = ipm_solve_selfdual(emb, run_cfg)
            if pt_emb.tau <= 0.0:
                raise OracleFailure("embedding tau collapsed on a refining problem")
            inv = 1.0 / pt_emb.tau
            ysplit = inv * pt_emb.y
            yn = ysplit[0::2] - ysplit[1::2]
            pt = PrimalDualPoint((s_b * inv) * pt_emb.X, s_c * yn,
                                 (s_c * inv) * pt_emb.S)
            quality = max(pt.X.dot(pt.S),
                          float(np.abs(primal_defect(problem, pt)).max(initial=0.0)),
                          dual_defect(problem, pt).norm_fro())
            if quality <= eps:
                return pt, trace
            target *= min(0.25, 0.5 * eps / quality)
        raise OracleFailure(
            f"embedding oracle could not reach precision {eps:.3e} "
            f"(got {quality:.3e})")

    return oracle


@dataclass
class SolveResult:
    status: str                      # optimal | improving_ray | no_complementary_pair
    point: Optional[PrimalDualPoint]
    gap: float
    primal_residual: float
    dual_residual: float
    objective_primal: float
    objective_dual: float
    tau: float
    theta: float
    ipm_trace: IterationTrace
    ir_trace: Optional[IrTrace]
    embedding_gap: float
    outer_rounds: int


def _extracted_quality(prob: SdoProblem, pt: PrimalDualPoint):
    primal, dual, gap, _ = residuals(prob, pt)
    return (float(np.abs(primal).max(initial=0.0)), dual.norm_fro(), gap)


def solve_canonical(prob: SdoProblem, eps_oracle: float = 1e-2,
                    eps_final: float = 1e-8,
                    ipm_cfg: Optional[IpmConfig] = None,
                    refine_embedding: bool = True) -> SolveResult:
    """Full pipeline for a canonical-form problem.

    Embeds once, runs the short-step loop to ``eps_oracle``, refines
    the embedding to ``eps_final`` (squaring the gap each round), and
    classifies the answer through the (tau, phi) trichotomy.
    """
    if prob.form is not Form.CANONICAL:
        raise ValueError("solve_canonical expects a canonical-form problem")
    cfg = ipm_cfg if ipm_cfg is not None else IpmConfig()
    emb = build_embedding(prob)
    V = embedding_null_basis(emb)
    # the stacked pair doubles when the embedding is rewritten in
    # standard form, widening the neighborhood distance by sqrt(2);
    # running the first stage slightly deeper keeps the handoff inside
    stage1 = replace(cfg, gamma=cfg.gamma / math.sqrt(2.0), beta=None,
                     target_eps=eps_oracle)
    pt_emb, ipm_trace = ipm_solve_selfdual(emb, stage1, V=V)

    ir_trace = None
    outer_rounds = 0
    out = extract_solution(pt_emb, tol=math.sqrt(eps_final))
    if refine_embedding and eps_final < pt_emb.gap():
        image = embedding_to_standard(emb)
        oracle = make_ipm_oracle(replace(cfg, beta=None))
        fallback = make_ipm_oracle(replace(cfg, beta=None), solver="direct")
        start = image.to_point(pt_emb)
        ir_trace = IrTrace(variant=Variant.FEASIBLE.value)
        # the embedding gap doubles in the standard-form image, and
        # extraction divides precision by tau^2; tighten until the
        # extracted pair itself meets the target
        eps_target = 2.0 * eps_final
        for _ in range(3):
            big_final, tr = ir_feasible(
                image.problem, start, eps_oracle, eps_target, oracle,
                oracle_fallback=fallback)
            ir_trace.iterations.extend(tr.iterations)
            ir_trace.oracle_traces.extend(tr.oracle_traces)
            ir_trace.final_gap = tr.final_gap
            pt_emb = image.from_point(big_final)
            out = extract_solution(pt_emb, tol=math.sqrt(eps_final))
            if not isinstance(out, Optimal):
                break
            pt = PrimalDualPoint(out.X, out.y, out.S, out.u)
            p_res, d_res, gap = _extracted_quality(prob, pt)
            quality = max(gap, p_res, d_res) / prob.data_scale()
            if quality <= eps_final:
                break
            eps_target *= max(1e-4, min(0.25, 0.25 * eps_final / quality))
            start = big_final
        outer_rounds = len(ir_trace)

    emb_gap = pt_emb.gap()
    if isinstance(out, Optimal):
        pt = PrimalDualPoint(out.X, out.y, out.S, out.u)
        p_res, d_res, gap = _extracted_quality(prob, pt)
        return SolveResult(
            status="optimal", point=pt, gap=gap,
            primal_residual=p_res, dual_residual=d_res,
            objective_primal=prob.objective.dot(pt.X),
            objective_dual=float(prob.rhs @ pt.y),
            tau=pt_emb.tau, theta=pt_emb.theta,
            ipm_trace=ipm_trace, ir_trace=ir_trace,
            embedding_gap=emb_gap, outer_rounds=outer_rounds)
    status = "improving_ray" if isinstance(out, ImprovingRay) else "no_complementary_pair"
    return SolveResult(
        status=status, point=None, gap=float("nan"),
        primal_residual=float("nan"), dual_residual=float("nan"),
        objective_primal=float("nan"), objective_dual=float("nan"),
        tau=pt_emb.tau, theta=pt_emb.theta,
        ipm_trace=ipm_trace, ir_trace=ir_trace,
        embedding_gap=emb_gap, outer_rounds=outer_rounds)


def solve_with_infeasible_refinement(prob: SdoProblem, variant: Variant,
                                     eps_oracle: float = 1e-2,
                                     eps_final: float = 1e-8, rho: float = 10.0,
                                     ipm_cfg: Optional[IpmConfig] = None):
    """Refinement with a start-free embedding oracle on the standard image.

    Used for the refinement variants that tolerate oracle
    infeasibility; each refining problem is embedded afresh (its
    null-space basis is closed form, so there is no factorization
    cost per round).
    """
    cfg = ipm_cfg if ipm_cfg is not None else IpmConfig()
    if prob.form is Form.CANONICAL:
        std, _, _ = canonical_to_standard(prob)
    else:
        std = prob
    oracle = make_embedding_oracle(cfg)
    if variant is Variant.INFEASIBLE_NI:
        return ir_infeasible_ni(std, eps_oracle, eps_final, rho, oracle)
    return ir_infeasible_ii(std, eps_oracle, eps_final, rho, oracle)
