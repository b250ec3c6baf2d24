import numpy as np
import pytest

from refine_sdo.model import Form, PrimalDualPoint, SdoProblem
from refine_sdo.symmat import SymMat


def random_sym(rng, n, scale=1.0):
    M = rng.normal(size=(n, n)) * scale
    return 0.5 * (M + M.T)


def random_pd(rng, n, cond=10.0):
    Q = np.linalg.qr(rng.normal(size=(n, n)))[0]
    w = np.exp(rng.uniform(0.0, np.log(cond), size=n))
    return (Q * w) @ Q.T


def random_standard_problem(rng, n, m, centered_mu=1.0):
    """Random standard-form instance with a perfectly centered start.

    X0 = D (diagonal PD), S0 = mu * D^{-1}, y0 random; b and C are
    back-solved so (X0, y0, S0) is strictly feasible and centered.
    """
    A = [SymMat([random_sym(rng, n)]) for _ in range(m)]
    d = np.exp(rng.uniform(-0.5, 0.5, size=n))
    X0 = SymMat([np.diag(d)])
    S0 = SymMat([np.diag(centered_mu / d)])
    y0 = rng.normal(size=m) * 0.3
    b = np.array([Ai.dot(X0) for Ai in A])
    C = S0.copy()
    for yi, Ai in zip(y0, A):
        C = C + yi * Ai
    prob = SdoProblem(A, b, C, Form.STANDARD)
    return prob, PrimalDualPoint(X0, y0, S0)


def random_canonical_problem(rng, n, m):
    """Random canonical-form instance (surplus convention)."""
    A = [SymMat([random_sym(rng, n)]) for _ in range(m)]
    C = SymMat([random_sym(rng, n)])
    b = rng.normal(size=m)
    return SdoProblem(A, b, C, Form.CANONICAL)


@pytest.fixture
def rng():
    return np.random.default_rng(20240311)
