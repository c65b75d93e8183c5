"""Deterministic convex-subproblem oracle.

Public surface:

- :class:`FeasibleSet` and its pieces (:class:`Box`, :class:`NormBall`,
  :class:`Halfspaces`, :class:`EpigraphLink`, :class:`ConvexHull`)
- :class:`SolverConfig`, :class:`SolveResult`
- :func:`solve_convex` / :func:`solve_convex_terms` -- minimize a weighted
  sum of atoms over a feasible set, deterministically
- :func:`lower_to_lp_or_qp` -- expose the standard-form lowering
- :func:`ensure_nonempty` -- phase-1 feasibility check

The reference engines are an in-repo dense revised simplex (LP), a primal
active-set method (QP), an outer-approximation loop for convex nonlinear
rows, and a projected-subgradient fallback.  An external solver can be
plugged in through the ``engine`` hook of :class:`SolverConfig`; everything
in the test-suite runs on the reference engines alone.
"""

from .sets import Box, NormBall, Halfspaces, EpigraphLink, ConvexHull, FeasibleSet
from .model import Model, ModelBuilder
from .solve import (
    SolverConfig,
    SolveResult,
    WeightedSubproblem,
    ensure_nonempty,
    lower_to_lp_or_qp,
    solve_convex,
    solve_convex_terms,
    solve_model,
)

__all__ = [
    "Box",
    "NormBall",
    "Halfspaces",
    "EpigraphLink",
    "ConvexHull",
    "FeasibleSet",
    "Model",
    "ModelBuilder",
    "SolverConfig",
    "SolveResult",
    "WeightedSubproblem",
    "ensure_nonempty",
    "lower_to_lp_or_qp",
    "solve_convex",
    "solve_convex_terms",
    "solve_model",
]
