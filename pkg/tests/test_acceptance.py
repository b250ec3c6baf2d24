"""Acceptance suite.

Each test exercises one acceptance criterion end to end at its stated
tolerance and prints one PASS line when it holds; a failed assertion
marks the criterion failed.  Run with ``pytest tests/test_acceptance.py
-v -s`` to see the per-criterion lines.
"""

import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from refine_sdo.driver import make_ipm_oracle
from refine_sdo.embedding import (
    build_embedding, constraint_residual_norm, initial_point,
)
from refine_sdo.ifipm import IpmConfig, ipm_solve_standard, validate_config
from refine_sdo.model import (
    Form, PrimalDualPoint, SdoProblem, neighborhood_distance,
)
from refine_sdo.newton import (
    ScalingChoice, assemble_oss_selfdual, assemble_oss_standard, nullspace_basis,
    recover_direction_selfdual, recover_direction_standard, scaling_pair,
    split_oss_solution,
)
from refine_sdo.refine import (
    ir_feasible, ir_infeasible_ii, ir_infeasible_ni, primal_defect, residual_in,
)
from refine_sdo.solvers import MatrixOperator, solve_direct, solve_iterative_normal
from refine_sdo.symmat import (
    SymMat, cond_estimate, min_eig, smat, svec, sym_kron_block,
)

from conftest import random_canonical_problem, random_pd, random_standard_problem, random_sym
from test_newton import dense_full_newton

REPO = Path(__file__).resolve().parent.parent
TINY = REPO / "data" / "tiny.dat-s"

EPS_ORACLE = 1e-2
EPS_FINAL = 1e-12


def _report(num, text):
    print(f"\n[criterion {num:2d}] PASS  {text}")


@pytest.fixture(scope="module")
def quadratic_runs():
    """Shared refinement runs for criteria 1 and 2 (20 instances)."""
    rng = np.random.default_rng(701)
    oracle = make_ipm_oracle(IpmConfig())
    fallback = make_ipm_oracle(IpmConfig(), solver="direct")
    runs = []
    t0 = time.perf_counter()
    for i in range(20):
        n = 3 + (i % 8)          # 3..10
        m = 2 + (i % 7)          # 2..8
        prob, start = random_standard_problem(rng, n, m)
        pt, trace = ir_feasible(prob, start, EPS_ORACLE, EPS_FINAL, oracle, fallback)
        runs.append((prob, pt, trace))
    elapsed = time.perf_counter() - t0
    return runs, elapsed


def test_criterion_01_quadratic_gap_reduction(quadratic_runs):
    runs, elapsed = quadratic_runs
    for prob, pt, trace in runs:
        gaps = trace.gaps()
        assert gaps[0] <= EPS_ORACLE
        for a, b in zip(gaps[:-1], gaps[1:]):
            assert b <= EPS_ORACLE * a * a + 1e-12, (a, b)
    assert elapsed < 30.0, f"runtime {elapsed:.1f}s exceeds 30s"
    _report(1, f"gap_(k+1) <= 1e-2 gap_k^2 + 1e-12 on 20 instances "
               f"({elapsed:.1f}s total)")


def test_criterion_02_double_log_outer_count(quadratic_runs):
    runs, _ = quadratic_runs
    for prob, pt, trace in runs:
        assert trace.final_gap <= EPS_FINAL
        assert len(trace) <= 3, f"{len(trace)} oracle calls"
    _report(2, "eps_final = 1e-12 reached within 3 refinement rounds on all 20")


def test_criterion_03_exact_linear_mu_decrease():
    # centered toy: A1 = I2, b = 2, C = I2, start (I, 0, I)
    prob = SdoProblem([SymMat.identity([2])], np.array([2.0]),
                      SymMat.identity([2]), Form.STANDARD)
    start = PrimalDualPoint(SymMat.identity([2]), np.zeros(1), SymMat.identity([2]))
    eps = 1e-6
    cfg = IpmConfig(target_eps=eps, solver="direct")
    pt, trace = ipm_solve_standard(prob, start, cfg)
    vcfg = validate_config(cfg, prob.n)
    mus = np.concatenate([[1.0], trace.mus()])
    ratios = mus[1:] / mus[:-1]
    worst = np.abs(ratios - vcfg.sigma).max() / vcfg.sigma
    assert worst <= 1e-9, worst
    bound = math.ceil(math.sqrt(prob.n) / vcfg.delta
                      * math.log(prob.n * 1.0 / eps))
    assert len(trace) <= bound
    _report(3, f"mu ratio = 1 - delta/sqrt(N) to {worst:.1e} rel; "
               f"{len(trace)} iterations <= bound {bound}")


def test_criterion_04_feasibility_retention_inexact():
    rng = np.random.default_rng(702)
    worst = 0.0
    for i in range(10):
        n = 3 + (i % 4)
        m = 2 + (i % 3)
        prob, start = random_standard_problem(rng, n, m)
        cfg = IpmConfig(target_eps=1e-3, solver="iterative")
        pt, trace = ipm_solve_standard(prob, start, cfg)
        scale = prob.data_scale()
        for row in trace.iterations:
            assert row.primal_residual <= 1e-9 * scale
            assert row.dual_residual <= 1e-9 * scale
            worst = max(worst, row.primal_residual / scale,
                        row.dual_residual / scale)
    _report(4, f"primal/dual residuals <= 1e-9 * scale at every iteration "
               f"of 10 inexact-solver runs (worst {worst:.1e})")


def test_criterion_05_orthogonality():
    rng = np.random.default_rng(703)
    for _ in range(50):
        n = int(rng.integers(2, 5))
        m = int(rng.integers(1, 4))
        prob, pt = random_standard_problem(rng, n, m)
        Q2 = nullspace_basis(prob.constraint_rows())
        P, Pi = scaling_pair(pt.X, pt.S, ScalingChoice.NT)
        sysm = assemble_oss_standard(prob, pt, P, 0.5, pt.mu(prob), Q2, Pinv=Pi)
        z = np.linalg.solve(sysm.M, sysm.rhs)
        lam, dy = split_oss_solution(z, sysm)
        DX, dy, DS = recover_direction_standard(lam, dy, sysm)
        scale = max(1e-300, DX.norm_fro() * DS.norm_fro())
        assert abs(DX.dot(DS)) <= 1e-10 * scale
    for _ in range(50):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(1, 4))
        emb = build_embedding(random_canonical_problem(rng, n, m))
        pt = initial_point(emb)
        pt.y = pt.y * np.exp(rng.uniform(-0.3, 0.3, emb.m))
        pt.u = pt.u * np.exp(rng.uniform(-0.3, 0.3, emb.m))
        sysm = assemble_oss_selfdual(emb, pt, 0.5, pt.mu(), ScalingChoice.NT)
        lam = np.linalg.solve(sysm.M, sysm.rhs)
        d = recover_direction_selfdual(lam, sysm)
        four = d.X.dot(d.S) + float(d.y @ d.u) + d.tau * d.phi + d.theta * d.rho
        scale = max(1e-300,
                    d.X.norm_fro() ** 2 + float(d.y @ d.y) + d.tau ** 2 + d.theta ** 2)
        assert abs(four) <= 1e-10 * scale
    _report(5, "exact-solve orthogonality <= 1e-10 * scale on 50 standard "
               "and 50 embedding systems")


def test_criterion_06_oss_equals_full_newton():
    rng = np.random.default_rng(704)
    for i in range(20):
        n = 3 if i % 2 == 0 else 4
        m = int(rng.integers(1, 4))
        prob, pt = random_standard_problem(rng, n, m)
        mu = pt.mu(prob)
        Q2 = nullspace_basis(prob.constraint_rows())
        for choice in ScalingChoice:
            P, Pi = scaling_pair(pt.X, pt.S, choice)
            sysm = assemble_oss_standard(prob, pt, P, 0.5, mu, Q2,
                                         scaling=choice, Pinv=Pi)
            z = np.linalg.solve(sysm.M, sysm.rhs)
            lam, dy = split_oss_solution(z, sysm)
            DX, dy, DS = recover_direction_standard(lam, dy, sysm)
            fx, fy, fs = dense_full_newton(prob, pt, P, 0.5, mu)
            scale = max(np.linalg.norm(fx), np.linalg.norm(fy),
                        np.linalg.norm(fs), 1e-12)
            assert np.abs(svec(DX).entries - fx).max() <= 1e-7 * scale
            assert np.abs(dy - fy).max() <= 1e-7 * scale
            assert np.abs(svec(DS).entries - fs).max() <= 1e-7 * scale
    _report(6, "directions match the dense symmetrized system to 1e-7 "
               "on 20 instances x 3 scalings")


def test_criterion_07_embedding_start():
    rng = np.random.default_rng(705)
    for _ in range(20):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, 6))
        emb = build_embedding(random_canonical_problem(rng, n, m))
        pt = initial_point(emb)
        assert constraint_residual_norm(emb, pt) <= 1e-12
        assert pt.mu() == 1.0
    _report(7, "trivial start has zero residuals and mu = 1 exactly "
               "on 20 random embeddings")


def _c8_instance():
    """Fixed instance whose optimal pair shares a kernel direction.

    X* = diag(1,0,0) and S* = diag(0,0,1.5) both vanish along e2, so
    the central path closes that coordinate at the sqrt(mu) rate and
    the Newton-system conditioning grows like 1/sqrt(mu): fast enough
    to measure, slow enough that stopping at mu = eps/N caps it within
    two orders of the mu = 1 level.
    """
    A1 = np.zeros((3, 3)); A1[0, 0] = 1.0
    A2 = np.zeros((3, 3)); A2[0, 2] = A2[2, 0] = 1.0; A2[1, 1] = 1.0
    C = np.zeros((3, 3)); C[2, 2] = 1.5
    prob = SdoProblem([SymMat([A1]), SymMat([A2])], np.array([1.0, 0.0]),
                      SymMat([C]), Form.STANDARD)
    X0 = np.array([[1.0, 0.0, -0.1], [0.0, 0.2, 0.0], [-0.1, 0.0, 1.0]])
    y0 = np.array([-1.5, -0.75])
    S0 = C - y0[0] * A1 - y0[1] * A2
    start = PrimalDualPoint(SymMat([X0]), y0, SymMat([S0]))
    # center the start with pure centering steps (sigma = 1)
    Q2 = nullspace_basis(prob.constraint_rows())
    for _ in range(60):
        mu = start.mu(prob)
        P, Pi = scaling_pair(start.X, start.S, ScalingChoice.NT)
        sysm = assemble_oss_standard(prob, start, P, 1.0, mu, Q2, Pinv=Pi)
        z = np.linalg.solve(sysm.M, sysm.rhs)
        lam, dy = split_oss_solution(z, sysm)
        DX, dy, DS = recover_direction_standard(lam, dy, sysm)
        alpha = 1.0
        while min(min_eig(start.X + alpha * DX),
                  min_eig(start.S + alpha * DS)) <= 0.0:
            alpha *= 0.5
        start = PrimalDualPoint(start.X + alpha * DX, start.y + alpha * dy,
                                start.S + alpha * DS)
        dist, mu = neighborhood_distance(start, prob)
        if dist <= 1e-4 * mu:
            break
    return prob, start, Q2


def test_criterion_08_condition_number_trend():
    prob, start, Q2 = _c8_instance()
    cfg = IpmConfig(scaling=ScalingChoice.AHO, track_kappa=True, target_eps=2e-3)
    mu0 = start.mu(prob)
    # kappa at mu = 1: the centered start sits at mu0 ~ 1 by construction
    assert 0.9 <= mu0 <= 1.1
    P, Pi = scaling_pair(start.X, start.S, ScalingChoice.AHO)
    sys0 = assemble_oss_standard(prob, start, P, 1.0, mu0, Q2,
                                 scaling=ScalingChoice.AHO, Pinv=Pi)
    kappa_1 = cond_estimate(sys0.M)
    pt, trace = ipm_solve_standard(prob, start, cfg, Q2=Q2)
    mus = trace.mus()
    kappas = np.array([r.kappa for r in trace.iterations])
    picks = [kappas[np.argmin(np.abs(np.log(mus / t)))] for t in (1e-1, 1e-2, 1e-3)]
    assert picks[0] < picks[1] < picks[2], picks
    r1, r2 = picks[1] / picks[0], picks[2] / picks[1]
    assert 3.0 <= r1 <= 30.0 and 3.0 <= r2 <= 30.0, (r1, r2)

    # refinement hand-off: the oracle stops the interior-point stage at
    # mu = eps/N instead of driving mu (and with it cond(M)) further
    oracle = make_ipm_oracle(IpmConfig(scaling=ScalingChoice.AHO, track_kappa=True))
    fallback = make_ipm_oracle(
        IpmConfig(scaling=ScalingChoice.AHO, track_kappa=True), solver="direct")
    prob2, start2, _ = _c8_instance()
    final, ir_trace = ir_feasible(prob2, start2, EPS_ORACLE, 1e-8, oracle, fallback)
    handoff = ir_trace.oracle_traces[0].iterations[-1].kappa
    assert handoff <= 100.0 * kappa_1, (handoff, kappa_1)
    _report(8, f"cond(M) decade ratios ({r1:.1f}, {r2:.1f}) in [3, 30]; "
               f"hand-off cond {handoff:.0f} <= 100 x cond(mu=1) = {100 * kappa_1:.0f}")


def test_criterion_09_infeasible_refinement_rates():
    rng = np.random.default_rng(706)
    rho = 10.0
    theta = min(rho, 1.0 / EPS_ORACLE)
    oracle = make_ipm_oracle(IpmConfig())
    fallback = make_ipm_oracle(IpmConfig(), solver="direct")
    for i in range(3):
        prob, start = random_standard_problem(rng, 3 + i, 2 + i)
        pt, trace = ir_infeasible_ni(prob, EPS_ORACLE, 1e-8, rho, oracle,
                                     fallback, start=start)
        # at most ceil(log(1e6)/log(1e2)) = 3 rounds beyond the initial solve
        assert len(trace) - 1 <= 3, len(trace)
        assert residual_in(prob, pt) <= 1e-8
        assert min_eig(pt.X) >= -1e-8 and min_eig(pt.S) >= -1e-8
        assert np.abs(primal_defect(prob, pt)).max() <= 1e-8
        assert pt.X.dot(pt.S) <= 1e-8
        for j, row in enumerate(trace.iterations[1:], start=1):
            assert row.eta >= theta ** j * (1.0 - 1e-12)
        pt2, trace2 = ir_infeasible_ii(prob, EPS_ORACLE, 1e-8, rho, oracle,
                                       fallback, start=start)
        for j, row in enumerate(trace2.iterations[1:], start=1):
            assert row.eta >= theta ** j * (1.0 - 1e-12)
    _report(9, "PD_1e-8 reached in <= 3 refinement rounds; "
               "eta_k >= min(rho, 1/eps)^k in both infeasible variants")


def test_criterion_10_kernel_identities():
    rng = np.random.default_rng(707)
    t0 = time.perf_counter()
    for _ in range(100):
        n = int(rng.integers(2, 6))
        U = SymMat([random_sym(rng, n)])
        V = SymMat([random_sym(rng, n)])
        # roundtrip
        assert (smat(svec(U)) - U).norm_fro() <= 1e-13 * (1.0 + U.norm_fro())
        # isometry
        ip = svec(U).dot(svec(V))
        assert abs(ip - U.dot(V)) <= 1e-12 * max(1.0, abs(ip))
    for _ in range(100):
        n = int(rng.integers(2, 5))
        G = rng.normal(size=(n, n))
        K = rng.normal(size=(n, n))
        M = random_sym(rng, n)
        lhs = sym_kron_block(G, K) @ svec(SymMat([M])).entries
        R = 0.5 * (K @ M @ G.T + G @ M @ K.T)
        rhs = svec(SymMat([0.5 * (R + R.T)])).entries
        assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(rhs).max())
    from refine_sdo.newton import h_p, nt_scaling_point
    for _ in range(100):
        n = int(rng.integers(2, 5))
        M = rng.normal(size=(n, n))
        out = h_p(SymMat.identity([n]), [M])
        assert np.abs(out.blocks[0] - 0.5 * (M + M.T)).max() <= 1e-14 * (1 + np.abs(M).max())
    for _ in range(100):
        n = int(rng.integers(2, 5))
        X = SymMat([random_pd(rng, n, cond=50.0)])
        S = SymMat([random_pd(rng, n, cond=50.0)])
        W = nt_scaling_point(X, S)
        WSW = SymMat([W.blocks[0] @ S.blocks[0] @ W.blocks[0]])
        assert (WSW - X).norm_fro() <= 1e-8 * X.norm_fro()
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    _report(10, f"roundtrip/isometry/kron action/H_I/scaling-point suites, "
                f"100 cases each ({elapsed:.2f}s)")


def test_criterion_11_iterative_vs_direct():
    rng = np.random.default_rng(708)
    dim = 24
    for i in range(20):
        kappa = 10.0 ** rng.uniform(1.0, 4.0)
        Q1 = np.linalg.qr(rng.normal(size=(dim, dim)))[0]
        Q2 = np.linalg.qr(rng.normal(size=(dim, dim)))[0]
        s = np.geomspace(1.0, kappa, dim)
        M = (Q1 * s) @ Q2
        v = rng.normal(size=dim)
        tol = 1e-8 * np.linalg.norm(v)
        max_iter = max(dim, math.ceil(2.0 * kappa * math.log(1.0 / 1e-8)))
        op = MatrixOperator(M)
        it = solve_iterative_normal(op, v, tol_abs=tol, max_iter=max_iter)
        dr = solve_direct(M, v)
        scale = max(1.0, np.linalg.norm(dr.solution))
        assert np.linalg.norm(it.solution - dr.solution) <= 1e-6 * kappa * scale
        # matrix-free contract: only M / M' products, within the budget
        assert it.matvec_count == op.count
        assert it.matvec_count <= 2 * max_iter + 1
        assert it.matvec_count == 2 * it.iterations + 1
    _report(11, "iterative and direct solutions agree to 1e-6*kappa on 20 "
                "systems; product count = 2k+1 <= 2*max_iter+1")


def test_criterion_12_end_to_end_cli(tmp_path):
    logs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        proc = subprocess.run(
            [sys.executable, "-m", "refine_sdo.cli", "solve", str(TINY),
             "--no-timing", "--trace-out", str(out)],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        logs.append(out.read_bytes())
    assert logs[0] == logs[1], "runs differ byte-for-byte"
    log = json.loads(logs[0])
    assert log["result"]["status"] == "optimal"
    assert log["result"]["gap"] <= 1e-8 * (1.0 + 1.0 + 1.0)
    _report(12, f"CLI solve: exit 0, gap {log['result']['gap']:.2e} <= 1e-8 "
                f"* scale, byte-identical reruns")
