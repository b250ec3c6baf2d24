"""High-precision semidefinite optimization.

An interior-point oracle run at fixed low precision is wrapped in an
iterative-refinement outer loop that squares the duality gap per outer
iteration, so machine-precision solutions cost only a handful of
low-precision solves.  Newton directions are taken from an orthogonal
subspaces reformulation, which keeps iterates exactly feasible no
matter how inexactly the linear systems are solved.
"""

from .symmat import SVec, SymMat, smat, svec, sym_kron, eig_sym, mat_fn, min_eig, cond_estimate
from .model import Form, PrimalDualPoint, SdoProblem, residuals, in_neighborhood
from .embedding import SelfDualPoint, SelfDualProblem, build_embedding, initial_point, extract_solution

__all__ = [
    "SVec", "SymMat", "smat", "svec", "sym_kron", "eig_sym", "mat_fn",
    "min_eig", "cond_estimate",
    "Form", "PrimalDualPoint", "SdoProblem", "residuals", "in_neighborhood",
    "SelfDualPoint", "SelfDualProblem", "build_embedding", "initial_point",
    "extract_solution",
]

__version__ = "0.1.0"
