"""Uniform LP/SDP solving with solver-independent certificates."""

from .certificate import Verification, min_eig, register_verifier, verify_certificate
from .lp import solve_lp
from .model import Expr, HExpr, Model, block
from .problems import Certificate, LinearProgram, PsdBlock, SemidefiniteProgram, SolveResult
from .sdp import solve_sdp

__all__ = [
    "Certificate",
    "Expr",
    "HExpr",
    "LinearProgram",
    "Model",
    "PsdBlock",
    "SemidefiniteProgram",
    "SolveResult",
    "Verification",
    "block",
    "min_eig",
    "register_verifier",
    "solve_lp",
    "solve_sdp",
    "verify_certificate",
]
