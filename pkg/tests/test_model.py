import numpy as np
import pytest

from refine_sdo.errors import DimMismatch, NotPositiveDefinite, RankDeficient
from refine_sdo.model import (
    Form, PrimalDualPoint, SdoProblem, canonical_to_standard, in_neighborhood,
    neighborhood_distance, residuals, standard_to_canonical,
)
from refine_sdo.symmat import SymMat

from conftest import random_canonical_problem, random_standard_problem, random_sym


def toy_problem():
    # n = 2, m = 1, A1 = I, b = 2, C = I; (I, 0, I) is feasible and centered
    A = [SymMat.identity([2])]
    prob = SdoProblem(A, np.array([2.0]), SymMat.identity([2]), Form.STANDARD)
    pt = PrimalDualPoint(SymMat.identity([2]), np.zeros(1), SymMat.identity([2]))
    return prob, pt


def test_residuals_feasible_point():
    prob, pt = toy_problem()
    primal, dual, gap, mu = residuals(prob, pt)
    assert np.abs(primal).max() == 0.0
    assert dual.norm_fro() == 0.0
    assert gap == pytest.approx(2.0)
    assert mu == pytest.approx(1.0)


def test_residuals_linearity(rng):
    prob, pt = random_standard_problem(rng, 4, 3)
    primal0, _, _, _ = residuals(prob, pt)
    delta = SymMat([random_sym(rng, 4, scale=0.1)])
    pt2 = PrimalDualPoint(pt.X + delta, pt.y, pt.S)
    primal1, _, _, _ = residuals(prob, pt2)
    expect = np.array([-Ai.dot(delta) for Ai in prob.constraint_mats])
    assert np.abs((primal1 - primal0) - expect).max() <= 1e-12


def test_residuals_dim_mismatch():
    prob, pt = toy_problem()
    bad = PrimalDualPoint(SymMat.identity([3]), np.zeros(1), SymMat.identity([3]))
    with pytest.raises(DimMismatch):
        residuals(prob, bad)


def test_rank_check():
    A = [SymMat.identity([2]), SymMat([np.eye(2) * 2.0])]
    with pytest.raises(RankDeficient):
        SdoProblem(A, np.array([1.0, 2.0]), SymMat.identity([2]), Form.STANDARD)


def test_neighborhood_centered_and_monotone():
    _, pt = toy_problem()
    dist, mu = neighborhood_distance(pt)
    assert dist == pytest.approx(0.0, abs=1e-15)
    assert mu == pytest.approx(1.0)
    assert in_neighborhood(pt, 1e-9)          # gamma ~ 0 boundary still true
    assert in_neighborhood(pt, 0.5)           # monotone in gamma


def test_neighborhood_engineered_false():
    # X = I makes X^1/2 S X^1/2 = S; push one eigenvalue past gamma*mu
    gamma = 0.2
    X = SymMat.identity([2])
    s = np.array([1.4, 0.6])                  # mu = 1, distance = sqrt(0.32)
    S = SymMat([np.diag(s)])
    pt = PrimalDualPoint(X, np.zeros(0), S)
    dist, mu = neighborhood_distance(pt)
    assert dist == pytest.approx(np.sqrt(0.32))
    assert not in_neighborhood(pt, gamma)
    assert in_neighborhood(pt, 0.6)


def test_neighborhood_requires_pd():
    pt = PrimalDualPoint(SymMat([np.diag([1.0, -1.0])]), np.zeros(0), SymMat.identity([2]))
    with pytest.raises(NotPositiveDefinite):
        in_neighborhood(pt, 0.1)


def test_standard_to_canonical_doubles(rng):
    prob, pt = random_standard_problem(rng, 3, 2)
    canon, map_pt, unmap_pt = standard_to_canonical(prob)
    assert canon.form is Form.CANONICAL
    assert canon.m == 2 * prob.m
    cpt = map_pt(pt)
    primal, dual, gap, _ = residuals(canon, cpt)
    assert np.abs(primal).max() <= 1e-12
    assert dual.norm_fro() <= 1e-12
    # u = 0 on feasible points, so the mapped gap equals the original
    assert gap == pytest.approx(pt.X.dot(pt.S))
    back = unmap_pt(cpt)
    assert np.allclose(back.y, pt.y)
    assert (back.X - pt.X).norm_fro() == 0.0


def test_canonical_to_standard_roundtrip(rng):
    canon = random_canonical_problem(rng, 3, 2)
    std, map_pt, unmap_pt = canonical_to_standard(canon)
    assert std.form is Form.STANDARD
    assert std.n == canon.n + canon.m
    X = SymMat([np.eye(3)])
    S = SymMat([np.eye(3) * 0.5])
    y = np.array([0.3, 0.7])
    u = np.array([1.2, 0.4])
    cpt = PrimalDualPoint(X, y, S, u)
    spt = map_pt(cpt)
    # gap preserved exactly: X.S + y'u = Xbig.Sbig
    assert spt.gap() == pytest.approx(cpt.gap())
    back = unmap_pt(spt)
    assert np.allclose(back.u, u)
    assert np.allclose(back.y, y)
    assert (back.X - X).norm_fro() == 0.0
    # residual transfer: canonical residuals equal standard-image residuals
    p_c, d_c, _, _ = residuals(canon, cpt)
    p_s, d_s, _, _ = residuals(std, spt)
    assert np.abs(p_c - p_s).max() <= 1e-12
    assert abs(d_c.norm_fro() - d_s.norm_fro()) <= 1e-12


def test_mu_denominator_canonical(rng):
    canon = random_canonical_problem(rng, 3, 2)
    assert canon.complementarity_dim == 5
    X = SymMat.identity([3])
    pt = PrimalDualPoint(X, np.ones(2), X.copy(), np.ones(2))
    _, _, gap, mu = residuals(canon, pt)
    assert gap == pytest.approx(3.0 + 2.0)
    assert mu == pytest.approx(1.0)
