"""Deterministic dispatch: weighted atom objectives -> LP / QP / OA / fallback.

``solve_convex_terms`` is the single entry point used everywhere else in the
package.  Repeated calls with identical inputs take identical code paths and
return bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from ..errors import Infeasible, IterationLimit, Unbounded, UnsupportedAtom
from .model import EQ, LE, Model, ModelBuilder
from .qp import solve_qp_active_set
from .sets import FeasibleSet
from .simplex import WarmLp, solve_bounded_lp
from .subgrad import solve_subgradient

OA_MAX_ROUNDS = 400


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and engine selection for the convex-subproblem oracle."""

    tol_abs: float = 1e-9
    tol_rel: float = 1e-9
    max_iters: int = 200000
    method: str = "auto"  # auto | lp | qp | subgradient-fallback
    engine: Callable | None = None  # optional external model solver

    def __post_init__(self):
        if self.tol_abs <= 0 or self.tol_rel <= 0:
            raise ValueError("tolerances must be positive")
        if self.method not in ("auto", "lp", "qp", "subgradient-fallback"):
            raise ValueError(f"unknown method {self.method!r}")


DEFAULT_CONFIG = SolverConfig()


class SolveResult(NamedTuple):
    x: np.ndarray
    value: float
    status: str  # optimal | iteration_limit


@dataclass(frozen=True)
class WeightedSubproblem:
    """The weighted objective hbar + (1/N) sum_s sum_l q_l^s h_l^s over X.

    ``problem`` is any object exposing ``hbar``, ``terms`` (list of lists of
    atoms), ``N`` and ``X``; ``weights`` is one simplex vector per term.
    """

    problem: object
    weights: tuple

    def __post_init__(self):
        weights = tuple(np.asarray(q, dtype=float) for q in self.weights)
        if len(weights) != self.problem.N:
            raise ValueError("need one weight vector per term")
        for q, comps in zip(weights, self.problem.terms):
            if q.shape != (len(comps),):
                raise ValueError("weight vector length must match components")
        object.__setattr__(self, "weights", weights)

    def objective_terms(self):
        terms = [(1.0, self.problem.hbar)]
        inv_n = 1.0 / self.problem.N
        for q, comps in zip(self.weights, self.problem.terms):
            for ql, atom in zip(q, comps):
                if ql != 0.0:
                    terms.append((inv_n * float(ql), atom))
        return terms


def build_model(terms, X: FeasibleSet, strict=False) -> Model:
    """Lower a weighted-atom objective over X to standard form."""
    builder = ModelBuilder()
    builder.declare_x(X.d)
    for weight, atom in terms:
        if strict:
            # force the strict epigraph route to surface UnsupportedAtom
            from ..funcs import Quadratic, Sum
            if isinstance(atom, Quadratic):
                builder.add_objective_atom(weight, atom)
            elif isinstance(atom, Sum):
                _strict_sum(builder, weight, atom)
            else:
                idx, coef, const = builder.epigraph_expr(
                    atom, builder.x_idx, strict=True)
                if idx.size:
                    builder.add_cost(idx, weight * coef)
                builder.add_const(weight * const)
        else:
            builder.add_objective_atom(weight, atom)
    builder.add_feasible_set(X)
    return builder.build()


def _strict_sum(builder, weight, atom):
    from ..funcs import Quadratic, Sum
    for w, sub in atom.terms:
        if isinstance(sub, Quadratic):
            builder.add_objective_atom(weight * w, sub)
        elif isinstance(sub, Sum):
            _strict_sum(builder, weight * w, sub)
        else:
            idx, coef, const = builder.epigraph_expr(
                sub, builder.x_idx, strict=True)
            if idx.size:
                builder.add_cost(idx, weight * w * coef)
            builder.add_const(weight * w * const)


def lower_to_lp_or_qp(sp: WeightedSubproblem) -> Model:
    """Standard-form model of a weighted subproblem (exact LP/QP lowering).

    Raises UnsupportedAtom when an atom has no exact polyhedral/quadratic
    lowering; callers then use the subgradient fallback.
    """
    return build_model(sp.objective_terms(), sp.problem.X, strict=True)


# ---------------------------------------------------------------------------
# model solving
# ---------------------------------------------------------------------------

def _lp_arrays(model: Model, extra_rows=None):
    """Rows + slacks -> equality standard form for the simplex."""
    G, g, senses = model.G, model.g, list(model.senses)
    if extra_rows:
        Ge, ge = extra_rows
        G = np.vstack([G, Ge]) if G.size else np.asarray(Ge, dtype=float)
        g = np.concatenate([g, ge])
        senses += [LE] * len(ge)
    m = G.shape[0]
    n = model.nvar
    A = np.hstack([G, np.eye(m)]) if m else np.zeros((0, n))
    slack_lo = np.zeros(m)
    slack_hi = np.array([np.inf if s == LE else 0.0 for s in senses])
    lo = np.concatenate([model.lo, slack_lo])
    hi = np.concatenate([model.hi, slack_hi])
    slack_cols = np.arange(n, n + m)
    return A, g, lo, hi, m, slack_cols


def _solve_linear(model: Model, cfg: SolverConfig, extra_rows=None,
                  cost=None) -> SolveResult:
    A, b, lo, hi, m, slack_cols = _lp_arrays(model, extra_rows)
    c = model.c if cost is None else cost
    c_full = np.concatenate([c, np.zeros(m)])
    res = solve_bounded_lp(c_full, A, b, lo, hi, max_iters=cfg.max_iters,
                           slack_cols=slack_cols)
    if res.status == "infeasible":
        raise Infeasible("phase-1 residual above tolerance")
    if res.status == "unbounded":
        raise Unbounded("LP objective unbounded below")
    z = res.x[:model.nvar]
    value = float(c @ z) + model.k
    status = "optimal" if res.status == "optimal" else "iteration_limit"
    if status == "iteration_limit":
        raise IterationLimit("simplex hit its iteration cap", x=z, value=value)
    return SolveResult(z, value, status)


def _solve_quadratic(model: Model, cfg: SolverConfig, extra_rows=None) -> SolveResult:
    # feasible start from a zero-cost LP
    feas = _solve_linear(model, cfg, extra_rows, cost=np.zeros(model.nvar))
    z0 = feas.x
    # assemble rows: equalities first, then inequalities, then finite bounds
    G, g, senses = model.G, model.g, list(model.senses)
    if extra_rows:
        Ge, ge = extra_rows
        G = np.vstack([G, Ge]) if G.size else np.asarray(Ge, dtype=float)
        g = np.concatenate([g, ge])
        senses += [LE] * len(ge)
    eq_mask = np.array([s == EQ for s in senses], dtype=bool)
    rows_eq = G[eq_mask] if G.size else np.zeros((0, model.nvar))
    rhs_eq = g[eq_mask] if g.size else np.zeros(0)
    rows_le = [G[i] for i in range(G.shape[0]) if not eq_mask[i]]
    rhs_le = [g[i] for i in range(G.shape[0]) if not eq_mask[i]]
    for j in range(model.nvar):
        if np.isfinite(model.hi[j]):
            e = np.zeros(model.nvar)
            e[j] = 1.0
            rows_le.append(e)
            rhs_le.append(model.hi[j])
        if np.isfinite(model.lo[j]):
            e = np.zeros(model.nvar)
            e[j] = -1.0
            rows_le.append(e)
            rhs_le.append(-model.lo[j])
    G_all = np.vstack([rows_eq] + [np.array(rows_le)]) if rows_le else rows_eq
    g_all = np.concatenate([rhs_eq, np.array(rhs_le)]) if rhs_le else rhs_eq
    P = model.P if model.P is not None else np.zeros((model.nvar, model.nvar))
    res = solve_qp_active_set(P, model.c, G_all, g_all, z0,
                              n_eq=rows_eq.shape[0])
    return SolveResult(res.x, res.value + model.k, res.status)


def solve_model(model: Model, cfg: SolverConfig = DEFAULT_CONFIG) -> SolveResult:
    """Solve a standard-form model with the appropriate reference engine."""
    if cfg.engine is not None:
        return cfg.engine(model)
    if not model.nonlinear:
        if model.P is None:
            return _solve_linear(model, cfg)
        return _solve_quadratic(model, cfg)

    # outer approximation on the nonlinear rows
    cuts_G: list = []
    cuts_g: list = []
    feas_tol = cfg.tol_abs
    res = None
    # seed one cut per row at a finite reference point so epigraph
    # variables are bounded from the first master solve on
    z0 = np.zeros(model.nvar)
    finite = np.isfinite(model.lo) & np.isfinite(model.hi)
    z0[finite] = 0.5 * (model.lo[finite] + model.hi[finite])
    z0 = np.clip(z0, model.lo, model.hi)
    for row in model.nonlinear:
        idx, coef, rhs = row.cut(z0)
        dense = np.zeros(model.nvar)
        np.add.at(dense, idx, coef)
        cuts_G.append(dense)
        cuts_g.append(rhs)
    for _ in range(OA_MAX_ROUNDS):
        extra = (np.array(cuts_G), np.array(cuts_g)) if cuts_G else None
        if model.P is None:
            res = _solve_linear(model, cfg, extra)
        else:
            res = _solve_quadratic(model, cfg, extra)
        z = res.x
        worst = 0.0
        added = 0
        for row in model.nonlinear:
            v = row.violation(z)
            worst = max(worst, v)
            if v > feas_tol:
                idx, coef, rhs = row.cut(z)
                dense = np.zeros(model.nvar)
                np.add.at(dense, idx, coef)
                cuts_G.append(dense)
                cuts_g.append(rhs)
                added += 1
        if added == 0 and worst <= feas_tol:
            return res
    raise IterationLimit("outer approximation did not converge",
                         x=res.x, value=res.value)


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def solve_convex_terms(terms, X: FeasibleSet,
                       cfg: SolverConfig = DEFAULT_CONFIG) -> SolveResult:
    """Minimize sum_i w_i * atom_i(x) over X, deterministically."""
    if cfg.method == "subgradient-fallback":
        return _fallback(terms, X, cfg)
    try:
        model = build_model(terms, X, strict=False)
        if cfg.method == "lp" and (model.P is not None or model.nonlinear):
            raise UnsupportedAtom("objective is not purely polyhedral; "
                                  "the forced LP engine cannot solve it")
        if cfg.method == "qp" and model.nonlinear:
            raise UnsupportedAtom("nonlinear rows are outside the forced "
                                  "QP engine's reach")
        res = solve_model(model, cfg)
        return SolveResult(res.x[model.x_idx].copy(), res.value, res.status)
    except UnsupportedAtom:
        if cfg.method in ("lp", "qp"):
            raise
        return _fallback(terms, X, cfg)


def solve_convex(sp: WeightedSubproblem,
                 cfg: SolverConfig = DEFAULT_CONFIG) -> SolveResult:
    """The deterministic oracle: minimize the weighted objective over X."""
    return solve_convex_terms(sp.objective_terms(), sp.problem.X, cfg)


def _fallback(terms, X, cfg):
    def value_fn(x):
        return float(sum(w * atom.value(x) for w, atom in terms))

    def subgrad_fn(x):
        g = np.zeros(X.d)
        for w, atom in terms:
            if w != 0.0:
                g += w * atom.subgradient(x)
        return g

    x, val, status = solve_subgradient(value_fn, subgrad_fn, X,
                                       max_iters=min(cfg.max_iters, 100000),
                                       tol=cfg.tol_abs)
    return SolveResult(x, val, "optimal" if status == "optimal" else
                       "iteration_limit")


class OracleSolver:
    """Stateful oracle for repeated weighted solves on one fixed problem.

    For purely polyhedral instances the lowered constraint structure never
    changes across weight updates, so one warm simplex carries the basis
    from solve to solve; anything else falls back to the cold path.  Use one
    instance per sequential run (it holds scratch state); the cold
    ``solve_convex`` stays the pure, stateless contract.
    """

    def __init__(self, problem, cfg: SolverConfig = DEFAULT_CONFIG):
        self.problem = problem
        self.cfg = cfg
        self._warm = None
        self._hooks = None
        if cfg.engine is None and cfg.method == "auto":
            try:
                self._prepare()
            except UnsupportedAtom:
                self._warm = None

    def _prepare(self):
        problem = self.problem
        builder = ModelBuilder()
        x_idx = builder.declare_x(problem.X.d)
        builder.add_objective_atom(1.0, problem.hbar)
        hooks = []
        for comps in problem.terms:
            term_hooks = []
            for atom in comps:
                term_hooks.append(builder.epigraph_expr(atom, x_idx,
                                                        strict=True))
            hooks.append(term_hooks)
        builder.add_feasible_set(problem.X)
        model = builder.build()
        if model.P is not None or model.nonlinear:
            raise UnsupportedAtom("warm path needs a purely polyhedral model")
        A, b, lo, hi, m, slack_cols = _lp_arrays(model)
        self._model = model
        self._nrows = m
        self._warm = WarmLp(A, b, lo, hi, slack_cols=slack_cols,
                            max_iters=self.cfg.max_iters)
        self._hooks = hooks

    def solve_weights(self, weights, extra_affine=None,
                      extra_const: float = 0.0) -> SolveResult:
        """Minimize hbar + (1/N) sum_{s,l} w_l^s h_l^s (+ extra affine in x).

        ``weights`` holds one nonnegative vector per term (not necessarily
        on the simplex; the DC baseline passes all-ones).
        """
        problem = self.problem
        inv_n = 1.0 / problem.N
        if self._warm is None:
            terms = [(1.0, problem.hbar)]
            for q, comps in zip(weights, problem.terms):
                for ql, atom in zip(q, comps):
                    if ql != 0.0:
                        terms.append((inv_n * float(ql), atom))
            if extra_affine is not None:
                from ..funcs import Affine
                terms.append((1.0, Affine(np.asarray(extra_affine, float),
                                          extra_const)))
            return solve_convex_terms(terms, problem.X, self.cfg)

        model = self._model
        c = model.c.copy()
        k = model.k + extra_const
        for q, term_hooks in zip(weights, self._hooks):
            for ql, (idx, coef, const) in zip(q, term_hooks):
                w = inv_n * float(ql)
                if w != 0.0:
                    if idx.size:
                        c[idx] += w * coef
                    k += w * const
        if extra_affine is not None:
            c[model.x_idx] += np.asarray(extra_affine, dtype=float)
        res = self._warm.solve(np.concatenate([c, np.zeros(self._nrows)]))
        if res.status == "infeasible":
            raise Infeasible("feasible set is empty")
        if res.status == "unbounded":
            raise Unbounded("weighted objective unbounded below")
        if res.status == "iteration_limit":
            raise IterationLimit("simplex hit its iteration cap",
                                 x=res.x[model.x_idx],
                                 value=float(model.c @ res.x[:model.nvar]) + k)
        z = res.x[:model.nvar]
        value = float(c[:model.nvar] @ z) + k
        return SolveResult(z[model.x_idx].copy(), value, "optimal")


def ensure_nonempty(X: FeasibleSet, tol=1e-8) -> None:
    """Phase-1 feasibility check; raises Infeasible on an empty set."""
    builder = ModelBuilder()
    builder.declare_x(X.d)
    builder.add_feasible_set(X)
    model = builder.build()
    if model.nonlinear:
        # relax nonlinear rows with a single slack and minimize it
        b2 = ModelBuilder()
        b2.declare_x(X.d)
        b2.add_feasible_set(X)
        s = b2.add_vars(1, lo=0.0, name="relax")
        model = b2.build()
        for row in model.nonlinear:
            row.w_idx = np.append(row.w_idx, s[0])
            row.w_coef = np.append(row.w_coef, 1.0)
        model.c = np.zeros(model.nvar)
        model.c[s[0]] = 1.0
        res = solve_model(model, DEFAULT_CONFIG)
        if res.value > tol:
            raise Infeasible("feasible set is empty (relaxed slack positive)")
        return
    _solve_linear(model, DEFAULT_CONFIG, cost=np.zeros(model.nvar))
