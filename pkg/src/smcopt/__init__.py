"""smcopt: local and global solvers for sums of pointwise minima of convex
functions.

Modules
-------
funcs      convex-atom algebra, deterministic subgradients, simplex utilities
subsolve   deterministic convex-subproblem oracle (LP / QP / OA / fallback)
smc        problem model, active sets, exact enumeration
local      alternating-minimization family and the DC baseline
micp       big-M bounds, mixed-integer models, branch and bound, certification
problems   instance generators and dataset builders
cli        command-line harness
"""

from . import funcs, local, micp, problems, smc, subsolve
from .funcs import (
    Affine,
    Const,
    ConvexAtom,
    MaxAffine,
    NormAffine,
    Quadratic,
    Sum,
    greedy_vertex,
    project_simplex,
    softmin,
)
from .smc import SmcProblem, Selection, enumerate_global, objective
from .subsolve import FeasibleSet, SolverConfig, WeightedSubproblem, solve_convex

__version__ = "0.1.0"

__all__ = [
    "Affine",
    "Const",
    "ConvexAtom",
    "FeasibleSet",
    "MaxAffine",
    "NormAffine",
    "Quadratic",
    "Selection",
    "SmcProblem",
    "SolverConfig",
    "Sum",
    "WeightedSubproblem",
    "enumerate_global",
    "funcs",
    "greedy_vertex",
    "local",
    "micp",
    "objective",
    "problems",
    "project_simplex",
    "smc",
    "softmin",
    "solve_convex",
    "subsolve",
]
