"""Desk-scale reference problems wired into the theorem checkers."""

from .common import AppResult
from .mollify import MollifierProblem, run_mollifier
from .pde import PdeProblem, run_pde
from .penalty import PenaltyProblem, run_penalty
from .sieve import SieveProblem, run_sieve

__all__ = [
    "AppResult",
    "MollifierProblem", "run_mollifier",
    "PdeProblem", "run_pde",
    "PenaltyProblem", "run_penalty",
    "SieveProblem", "run_sieve",
]
