"""Problem model: objective, active sets, selections, and exact enumeration.

An :class:`SmcProblem` is  min over X of  hbar(x) + (1/N) sum_s min_l h_l^s(x)
with every h and hbar a convex atom.  Component indices are 0-based
throughout the package.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceeded, DimensionMismatch
from .funcs import ConvexAtom, atom_from_dict
from .subsolve import (
    FeasibleSet,
    SolverConfig,
    SolveResult,
    WeightedSubproblem,
    ensure_nonempty,
    solve_convex,
)
from .subsolve.solve import DEFAULT_CONFIG

ACTIVE_SLACK = 1e-12
ENUM_CAP_DEFAULT = 100000


@dataclass(frozen=True)
class SmcProblem:
    """Sum of pointwise minima of convex atoms over a feasible set."""

    hbar: ConvexAtom
    terms: tuple
    X: FeasibleSet
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        terms = tuple(tuple(comps) for comps in self.terms)
        if len(terms) < 1 or any(len(comps) < 1 for comps in terms):
            raise ValueError("need N >= 1 terms with n_s >= 1 components each")
        d = self.X.d
        if self.hbar.dim != d:
            raise DimensionMismatch("hbar dimension vs feasible set")
        for comps in terms:
            for atom in comps:
                if atom.dim != d:
                    raise DimensionMismatch("component dimension vs feasible set")
        object.__setattr__(self, "terms", terms)
        ensure_nonempty(self.X)

    @property
    def d(self):
        return self.X.d

    @property
    def N(self):
        return len(self.terms)

    @property
    def sizes(self):
        return tuple(len(comps) for comps in self.terms)

    @property
    def n_pieces(self):
        out = 1
        for n_s in self.sizes:
            out *= n_s
        return out

    def to_json(self) -> str:
        doc = {
            "format": "smc-problem/1",
            "name": self.name,
            "hbar": self.hbar.to_dict(),
            "terms": [[a.to_dict() for a in comps] for comps in self.terms],
            "X": self.X.to_dict(),
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SmcProblem":
        doc = json.loads(text)
        if doc.get("format") != "smc-problem/1":
            raise ValueError("unknown problem document format")
        return cls(
            hbar=atom_from_dict(doc["hbar"]),
            terms=tuple(tuple(atom_from_dict(a) for a in comps)
                        for comps in doc["terms"]),
            X=FeasibleSet.from_dict(doc["X"]),
            name=doc.get("name", ""),
        )


@dataclass(frozen=True)
class Selection:
    """One component index per term (0-based)."""

    sigma: tuple

    def __post_init__(self):
        object.__setattr__(self, "sigma", tuple(int(v) for v in self.sigma))

    def validate(self, problem: SmcProblem):
        if len(self.sigma) != problem.N:
            raise DimensionMismatch("selection length vs number of terms")
        for s, l in enumerate(self.sigma):
            if not 0 <= l < problem.sizes[s]:
                raise DimensionMismatch(f"selection index out of range at term {s}")
        return self


def component_values(problem: SmcProblem, x, s: int) -> np.ndarray:
    """Vector of the s-th term's component values at x."""
    return np.array([atom.value(x) for atom in problem.terms[s]])


def objective(problem: SmcProblem, x) -> float:
    """hbar(x) + (1/N) sum_s min_l h_l^s(x)."""
    total = problem.hbar.value(x)
    for s in range(problem.N):
        total += component_values(problem, x, s).min() / problem.N
    return float(total)


def piece_objective(problem: SmcProblem, sigma: Selection, x) -> float:
    """Objective of the convex piece selected by sigma."""
    sigma.validate(problem)
    total = problem.hbar.value(x)
    for s, l in enumerate(sigma.sigma):
        total += problem.terms[s][l].value(x) / problem.N
    return float(total)


def active_set(problem: SmcProblem, x, s: int, rho: float) -> tuple:
    """Indices within a rho-relative margin of the term's minimum at x.

    The margin is rho * (max - min) plus an absolute slack of 1e-12, so a
    term whose components all coincide reports every index active.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    vals = component_values(problem, x, s)
    h_min = float(vals.min())
    h_max = float(vals.max())
    margin = rho * (h_max - h_min) + ACTIVE_SLACK
    return tuple(int(i) for i in np.nonzero(vals - h_min <= margin)[0])


def degeneracy(problem: SmcProblem, x, rho: float):
    """Degeneracy set {s : |A_rho^s(x)| >= 2} and factor prod_s |A_rho^s(x)|."""
    deg = []
    factor = 1
    for s in range(problem.N):
        size = len(active_set(problem, x, s, rho))
        factor *= size
        if size >= 2:
            deg.append(s)
    return tuple(deg), factor


def vertex_weights(problem: SmcProblem, sigma: Selection) -> tuple:
    """Simplex-vertex weights encoding a selection."""
    sigma.validate(problem)
    out = []
    for s, l in enumerate(sigma.sigma):
        q = np.zeros(problem.sizes[s])
        q[l] = 1.0
        out.append(q)
    return tuple(out)


def piece_value(problem: SmcProblem, sigma: Selection,
                cfg: SolverConfig = DEFAULT_CONFIG):
    """Exact minimum of the sigma-piece: returns (value, x)."""
    sp = WeightedSubproblem(problem, vertex_weights(problem, sigma))
    res = solve_convex(sp, cfg)
    return res.value, res.x


def enumerate_global(problem: SmcProblem, cfg: SolverConfig = DEFAULT_CONFIG,
                     cap: int = ENUM_CAP_DEFAULT):
    """Exact global minimum by scanning every selection.

    Ties are broken toward the lexicographically smallest selection (the
    scan order is lexicographic and updates are strict improvements).
    Raises CapExceeded when the number of pieces exceeds ``cap``.
    """
    if problem.n_pieces > cap:
        raise CapExceeded(
            f"{problem.n_pieces} pieces exceed the enumeration cap {cap}")
    from .subsolve.solve import OracleSolver
    oracle = OracleSolver(problem, cfg)
    best = None
    for raw in itertools.product(*(range(n) for n in problem.sizes)):
        sigma = Selection(raw)
        res = oracle.solve_weights(vertex_weights(problem, sigma))
        if best is None or res.value < best[0]:
            best = (res.value, res.x, sigma)
    return best


def solve_selection(problem: SmcProblem, sigma: Selection,
                    cfg: SolverConfig = DEFAULT_CONFIG) -> SolveResult:
    """Solver result for a selection's piece (value and minimizer)."""
    sp = WeightedSubproblem(problem, vertex_weights(problem, sigma))
    return solve_convex(sp, cfg)
