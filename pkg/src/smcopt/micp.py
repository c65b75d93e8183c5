"""Big-M machinery: cross-component bounds, mixed-integer models, a
deterministic branch-and-bound, and the certify-or-improve loop.

A bound matrix entry M[l+, l] dominates h_{l+} - h_l over a region wherever
component l attains the term's minimum; with such bounds each pointwise
minimum gets an exact binary epigraph encoding.  The parametric model scales
the bounds by C in [0, 1]: C = 0 collapses to the convex sum-of-maximums
upper envelope and C = 1 recovers the original objective exactly.
"""

from __future__ import annotations

import heapq
import itertools
import json
import time
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    CapExceeded,
    Infeasible,
    MissingBounds,
    ShapeMismatch,
    Unbounded,
)
from .funcs import Affine, Const, ConvexAtom, MaxAffine, NormAffine, Quadratic, Sum
from .smc import SmcProblem, active_set, component_values, objective
from .subsolve import FeasibleSet, ModelBuilder, SolverConfig, solve_convex_terms
from .subsolve.model import EQ
from .subsolve.qp import solve_ball_qp
from .subsolve.sets import NormBall
from .subsolve.solve import DEFAULT_CONFIG, solve_model

INTEGRALITY_TOL = 1e-7
PRUNE_TOL = 1e-12
CERT_TOL = 1e-9
DELTA_GLOB_DEFAULT = 5e-7
RHO_DEFAULT = 1e-12
ENUM_FACTOR_CAP = 256
VERTEX_ENUM_LIMIT = 22


# ---------------------------------------------------------------------------
# bound containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SBounds:
    """Per-term matrices of big-M constants.

    Stored entries are finite and nonnegative with a zero diagonal; a column
    flagged in ``forbidden`` marks a component that is nowhere active on the
    region, removing it as a selectable index (the -infinity convention) --
    structurally, never arithmetically.
    """

    values: tuple
    forbidden: tuple

    def __post_init__(self):
        vals = tuple(np.asarray(v, dtype=float) for v in self.values)
        forb = tuple(np.asarray(f, dtype=bool) for f in self.forbidden)
        for v, f in zip(vals, forb):
            n = v.shape[0]
            if v.shape != (n, n) or f.shape != (n,):
                raise ShapeMismatch("bound matrices must be square per term")
            if not np.isfinite(v).all() or (v < 0).any():
                raise ValueError("stored bounds must be finite and >= 0")
            if np.abs(np.diag(v)).max(initial=0.0) > 0:
                raise ValueError("bound diagonals must be zero")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "forbidden", forb)

    @classmethod
    def from_raw(cls, raw_values, forbidden_cols=None) -> "SBounds":
        """Clamp raw bound matrices to >= 0 and zero the diagonals."""
        vals = []
        forb = []
        for s, raw in enumerate(raw_values):
            m = np.maximum(np.asarray(raw, dtype=float), 0.0)
            np.fill_diagonal(m, 0.0)
            vals.append(m)
            if forbidden_cols is None:
                forb.append(np.zeros(m.shape[0], dtype=bool))
            else:
                forb.append(np.asarray(forbidden_cols[s], dtype=bool))
        return cls(tuple(vals), tuple(forb))

    @property
    def N(self):
        return len(self.values)

    def allowed(self, s) -> tuple:
        return tuple(int(l) for l in np.nonzero(~self.forbidden[s])[0])

    def mark_forbidden(self, s, l) -> "SBounds":
        forb = [f.copy() for f in self.forbidden]
        forb[s][l] = True
        if not (~forb[s]).any():
            raise ValueError("cannot forbid every column of a term")
        return SBounds(self.values, tuple(forb))

    def restrict(self, keep_per_term) -> "SBounds":
        """Slice every term to the given index subsets (local models)."""
        vals = []
        forb = []
        for s, keep in enumerate(keep_per_term):
            keep = np.asarray(keep, dtype=int)
            vals.append(self.values[s][np.ix_(keep, keep)])
            forb.append(self.forbidden[s][keep])
        return SBounds(tuple(vals), tuple(forb))

    def to_json(self) -> str:
        doc = {"format": "sbounds/1",
               "terms": [{"M": v.tolist(), "forbidden": f.tolist()}
                         for v, f in zip(self.values, self.forbidden)]}
        return json.dumps(doc, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# generic bound calculators (raw values; assemble with SBounds.from_raw)
# ---------------------------------------------------------------------------

def sbounds_smooth(problem: SmcProblem, s, l_plus, l, L, D, x_bar,
                   cfg: SolverConfig = DEFAULT_CONFIG) -> float:
    """Bound from an L-smooth upper model of h_{l+} around x_bar.

    Maximizes the tangent model plus (L/2) D^2 minus h_l over X, which is a
    convex minimization after negation.  Requires X bounded (diameter D).
    """
    if l_plus == l:
        return 0.0
    h_plus = problem.terms[s][l_plus]
    h_low = problem.terms[s][l]
    x_bar = np.asarray(x_bar, dtype=float)
    g = h_plus.subgradient(x_bar)
    res = solve_convex_terms(
        [(1.0, h_low), (1.0, Affine(-g, 0.0))], problem.X, cfg)
    return (h_plus.value(x_bar) - float(g @ x_bar) + 0.5 * L * D * D
            - res.value)


def sbounds_maxaffine(problem: SmcProblem, s, l_plus, l,
                      cfg: SolverConfig = DEFAULT_CONFIG) -> float:
    """Bound for a max-affine h_{l+}: one convex solve per affine row."""
    if l_plus == l:
        return 0.0
    h_plus = problem.terms[s][l_plus]
    h_low = problem.terms[s][l]
    if isinstance(h_plus, Affine):
        rows = [(h_plus.a, h_plus.b)]
    elif isinstance(h_plus, Const):
        rows = [(np.zeros(problem.d), h_plus.value_)]
    elif isinstance(h_plus, MaxAffine):
        rows = [(h_plus.A[i], h_plus.b[i]) for i in range(h_plus.A.shape[0])]
    else:
        raise ShapeMismatch("h_{l+} must be affine or max-affine")
    best = -np.inf
    for a, b in rows:
        res = solve_convex_terms(
            [(1.0, h_low), (1.0, Affine(-np.asarray(a, dtype=float), 0.0))],
            problem.X, cfg)
        best = max(best, float(b) - res.value)
    return best


def _quad_parts(atom: ConvexAtom, d):
    if isinstance(atom, Quadratic):
        return atom.P, atom.a, atom.b
    if isinstance(atom, Affine):
        return np.zeros((d, d)), atom.a, atom.b
    if isinstance(atom, Const):
        return np.zeros((d, d)), np.zeros(d), atom.value_
    raise ShapeMismatch("need quadratic/affine/constant atoms for this rule")


def sbounds_trs(problem: SmcProblem, s, l_plus, l,
                cfg: SolverConfig = DEFAULT_CONFIG) -> float:
    """Trust-region style bound: quadratic difference over a Euclidean ball.

    With V the difference Hessian and lam the smallest eigenvalue of -V, the
    shifted problem  min -(difference) + min{lam/2, 0} (R^2 - ||u||^2)  is a
    convex ball-constrained QP solved exactly by dual bisection.
    """
    if l_plus == l:
        return 0.0
    d = problem.d
    P1, a1, b1 = _quad_parts(problem.terms[s][l_plus], d)
    P0, a0, b0 = _quad_parts(problem.terms[s][l], d)
    V = P1 - P0
    v_bar = a1 - a0
    gamma = b1 - b0
    ball = None
    for piece in problem.X.pieces:
        if isinstance(piece, NormBall) and piece.p == 2.0 \
                and piece.idx.size == d and not piece.center.any():
            ball = piece
            break
    if ball is None:
        raise ShapeMismatch("this rule needs X inside a centered 2-norm ball")
    lam = float(np.linalg.eigvalsh(-V)[0])
    mu = min(lam / 2.0, 0.0)
    x, qval = solve_ball_qp(-V - 2.0 * mu * np.eye(d), -v_bar, ball.radius)
    minimum = qval - gamma + mu * ball.radius ** 2
    return -minimum


def sbounds_crude(upper_h_plus: float, lower_h_l: float) -> float:
    """Range bound: an upper bound of h_{l+} minus a lower bound of h_l."""
    if not (np.isfinite(upper_h_plus) and np.isfinite(lower_h_l)):
        raise Unbounded("crude bound needs finite range estimates")
    return float(upper_h_plus) - float(lower_h_l)


# -- safe interval ranges over a box, for the crude rule -------------------

def _affine_range(a, b, lo, hi):
    low = float(b)
    high = float(b)
    for ai, li, hi_i in zip(a, lo, hi):
        if ai == 0.0:
            continue
        cand = sorted([ai * li, ai * hi_i])
        low += cand[0]
        high += cand[1]
    return low, high


def crude_range(atom: ConvexAtom, lo, hi):
    """Safe (lower, upper) bounds of an atom over the box [lo, hi].

    Upper bounds of convex atoms are exact where cheap (affine, max-affine,
    vertex scans for small quadratics); lower bounds may be loose but are
    always valid.  Infinite box entries propagate to infinite bounds.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if isinstance(atom, Const):
        return atom.value_, atom.value_
    if isinstance(atom, Affine):
        return _affine_range(atom.a, atom.b, lo, hi)
    if isinstance(atom, MaxAffine):
        rows = [_affine_range(atom.A[i], atom.b[i], lo, hi)
                for i in range(atom.A.shape[0])]
        return max(r[0] for r in rows), max(r[1] for r in rows)
    if isinstance(atom, NormAffine):
        mags_hi = []
        mags_lo = []
        for i in range(atom.A.shape[0]):
            rl, rh = _affine_range(atom.A[i], atom.c[i], lo, hi)
            mags_hi.append(max(abs(rl), abs(rh)))
            mags_lo.append(max(0.0, rl, -rh))
        mags_hi = np.array(mags_hi)
        mags_lo = np.array(mags_lo)
        if atom.p == 1.0:
            return atom.w * mags_lo.sum(), atom.w * mags_hi.sum()
        if atom.p == 2.0:
            return (atom.w * float(np.linalg.norm(mags_lo)),
                    atom.w * float(np.linalg.norm(mags_hi)))
        return (atom.w * float(mags_lo.max(initial=0.0)),
                atom.w * float(mags_hi.max(initial=0.0)))
    if isinstance(atom, Quadratic):
        d = atom.dim
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            return -np.inf, np.inf
        if d > VERTEX_ENUM_LIMIT:
            return -np.inf, np.inf
        high = -np.inf
        for corner in itertools.product(*zip(lo, hi)):
            high = max(high, atom.value(np.array(corner)))
        # global unconstrained minimum is a valid lower bound for the box
        sol, *_ = np.linalg.lstsq(atom.P, -atom.a, rcond=None)
        if np.allclose(atom.P @ sol, -atom.a, atol=1e-8):
            low = atom.b + 0.5 * float(atom.a @ sol)
        else:
            low = -np.inf
        return low, high
    if isinstance(atom, Sum):
        low = 0.0
        high = 0.0
        for w, sub in atom.terms:
            sl, sh = crude_range(sub, lo, hi)
            low += w * sl
            high += w * sh
        return low, high
    raise ShapeMismatch(f"no range rule for {type(atom).__name__}")


def auto_sbounds(problem: SmcProblem) -> SBounds:
    """Crude bounds from interval ranges over the problem's bounding box."""
    lo, hi = problem.X.bounding_box()
    raw = []
    for comps in problem.terms:
        n_s = len(comps)
        ranges = [crude_range(atom, lo, hi) for atom in comps]
        m = np.zeros((n_s, n_s))
        for lp in range(n_s):
            for l in range(n_s):
                if lp != l:
                    m[lp, l] = sbounds_crude(ranges[lp][1], ranges[l][0])
        if not np.isfinite(m).all():
            raise Unbounded("bounding box too loose for crude bounds; "
                            "supply bounds explicitly")
        raw.append(m)
    return SBounds.from_raw(raw)


# ---------------------------------------------------------------------------
# parametric value function and global model
# ---------------------------------------------------------------------------

def value_function(problem: SmcProblem, bounds: SBounds, C: float, x) -> float:
    """Pointwise value of the parametric model at fixed x.

    Per term: min over allowed l of max_{l+} (h_{l+}(x) - C M[l+, l]).
    At C = 1 with valid bounds this equals the true objective; at C = 0 it
    is the convex sum-of-maximums envelope.
    """
    if not 0.0 <= C <= 1.0:
        raise ValueError("C must lie in [0, 1]")
    _check_bounds(problem, bounds)
    total = problem.hbar.value(x)
    for s in range(problem.N):
        hv = component_values(problem, x, s)
        best = np.inf
        for l in bounds.allowed(s):
            best = min(best, float((hv - C * bounds.values[s][:, l]).max()))
        total += best / problem.N
    return float(total)


def _check_bounds(problem: SmcProblem, bounds: SBounds):
    if bounds is None:
        raise MissingBounds("this model needs big-M bounds")
    if bounds.N != problem.N:
        raise MissingBounds("bounds cover the wrong number of terms")
    for s in range(problem.N):
        if bounds.values[s].shape[0] != problem.sizes[s]:
            raise MissingBounds(f"bounds for term {s} have the wrong size")
        if not bounds.allowed(s):
            raise MissingBounds(f"term {s} has no selectable component")


@dataclass(frozen=True)
class ModelAdditions:
    """Extra valid/symmetry constraints for the binary model.

    ``t_rows``: rows over the (s, l) binary grid, each as (coefs, rhs, sense)
    with ``coefs`` a dict mapping (s, l) -> coefficient.
    """

    t_rows: tuple = ()

    def __add__(self, other):
        return ModelAdditions(self.t_rows + other.t_rows)


@dataclass(frozen=True)
class BigMModel:
    """Binary epigraph model of a problem with bounds, at parameter C."""

    problem: SmcProblem
    bounds: SBounds
    C: float
    additions: ModelAdditions = ModelAdditions()

    def __post_init__(self):
        if not 0.0 <= self.C <= 1.0:
            raise ValueError("C must lie in [0, 1]")
        _check_bounds(self.problem, self.bounds)

    @property
    def binary_count(self):
        return sum(len(self.bounds.allowed(s)) for s in range(self.problem.N))

    @property
    def coupling_row_count(self):
        return sum(self.problem.sizes)

    @property
    def simplex_row_count(self):
        return self.problem.N

    def with_additions(self, additions: ModelAdditions) -> "BigMModel":
        return replace(self, additions=self.additions + additions)

    def stats_csv(self) -> str:
        """Model statistics in a one-row CSV (binaries and row counts)."""
        return ("binaries,coupling_rows,simplex_rows,extra_rows\n"
                f"{self.binary_count},{self.coupling_row_count},"
                f"{self.simplex_row_count},{len(self.additions.t_rows)}\n")


def build_global_model(problem: SmcProblem, bounds: SBounds, C: float) -> BigMModel:
    """The parametric binary model over the full feasible set."""
    return BigMModel(problem, bounds, float(C))


# ---------------------------------------------------------------------------
# branch and bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Budget:
    time_limit: float | None = None
    node_cap: int | None = None


@dataclass
class NodeRecord:
    node_id: int
    parent_id: int
    bound: float
    integral_value: float | None


@dataclass
class MicpResult:
    status: str  # optimal | feasible | infeasible
    value: float
    x: np.ndarray | None
    assignment: tuple | None  # chosen component per term
    nodes: int
    log: list


def _relaxation(model: BigMModel, avail, chosen, cfg):
    """Solve the convex relaxation of a node; returns (value, x, tvals)."""
    problem = model.problem
    builder = ModelBuilder()
    x_idx = builder.declare_x(problem.d)
    builder.add_feasible_set(problem.X)
    eta = builder.add_vars(problem.N, name="eta")
    builder.add_objective_atom(1.0, problem.hbar)
    builder.add_cost(eta, np.full(problem.N, 1.0 / problem.N))
    t_index = {}
    for s in range(problem.N):
        cols = avail[s]
        if chosen[s] is None:
            t = builder.add_vars(len(cols), lo=0.0, hi=1.0, name=f"t{s}_")
            for pos, l in enumerate(cols):
                t_index[(s, l)] = t[pos]
            builder.add_row(t, np.ones(len(cols)), 1.0, EQ)
        for lp, atom in enumerate(problem.terms[s]):
            if chosen[s] is not None:
                r = model.C * model.bounds.values[s][lp, chosen[s]]
                builder.add_atom_row(atom, x_idx, np.array([eta[s]]),
                                     np.ones(1), r)
            else:
                coefs = np.concatenate(
                    [np.ones(1),
                     model.C * model.bounds.values[s][lp, list(cols)]])
                idxs = np.concatenate(
                    [np.array([eta[s]]),
                     np.array([t_index[(s, l)] for l in cols])])
                builder.add_atom_row(atom, x_idx, idxs.astype(int), coefs, 0.0)
    for coefs, rhs, sense in model.additions.t_rows:
        idx = []
        cf = []
        shift = 0.0
        for (s, l), coef in sorted(coefs.items()):
            if chosen[s] is not None:
                if chosen[s] == l:
                    shift += coef
            elif l in avail[s]:
                idx.append(t_index[(s, l)])
                cf.append(coef)
            # fixed-to-zero binaries contribute nothing
        builder.add_row(np.array(idx, dtype=int), np.array(cf),
                        rhs - shift, sense)
    m = builder.build()
    res = solve_model(m, cfg)
    tvals = {key: float(res.x[j]) for key, j in t_index.items()}
    return res.value, res.x[m.x_idx].copy(), tvals


def solve_micp(model: BigMModel, budget: Budget = Budget(),
               cfg: SolverConfig = DEFAULT_CONFIG) -> MicpResult:
    """Best-first branch and bound over the binary selections.

    Nodes are ordered by (relaxation bound, creation index); branching fixes
    the most loaded fractional binary of the first undecided term.  With an
    exhausted tree the incumbent is optimal; hitting the budget downgrades
    the status to feasible.
    """
    problem = model.problem
    t_start = time.perf_counter()
    root_avail = tuple(model.bounds.allowed(s) for s in range(problem.N))
    root_chosen = tuple(cols[0] if len(cols) == 1 else None
                        for cols in root_avail)

    counter = itertools.count()
    log: list = []
    heap = []
    nodes_done = 0
    incumbent = (np.inf, None, None)  # value, x, assignment

    def push(avail, chosen, parent_id):
        nonlocal nodes_done
        nid = next(counter)
        nodes_done += 1
        try:
            val, x, tvals = _relaxation(model, avail, chosen, cfg)
        except Infeasible:
            log.append(NodeRecord(nid, parent_id, np.inf, None))
            return
        log.append(NodeRecord(nid, parent_id, val, None))
        heapq.heappush(heap, (val, nid, avail, chosen, x, tvals))

    push(root_avail, root_chosen, -1)
    status = "optimal"
    while heap:
        if budget.node_cap is not None and nodes_done > budget.node_cap:
            status = "feasible"
            break
        if budget.time_limit is not None \
                and time.perf_counter() - t_start > budget.time_limit:
            status = "feasible"
            break
        val, nid, avail, chosen, x, tvals = heapq.heappop(heap)
        if val >= incumbent[0] - PRUNE_TOL:
            continue
        frac = None
        for s in range(problem.N):
            if chosen[s] is not None:
                continue
            ts = np.array([tvals[(s, l)] for l in avail[s]])
            if np.abs(ts - np.round(ts)).max() > INTEGRALITY_TOL:
                pick = int(np.argmax(ts))
                frac = (s, avail[s][pick])
                break
        if frac is None:
            # integral relaxation: candidate incumbent
            assignment = []
            for s in range(problem.N):
                if chosen[s] is not None:
                    assignment.append(chosen[s])
                else:
                    ts = np.array([tvals[(s, l)] for l in avail[s]])
                    assignment.append(avail[s][int(np.argmax(ts))])
            if val < incumbent[0]:
                incumbent = (val, x, tuple(assignment))
            for rec in log:
                if rec.node_id == nid:
                    rec.integral_value = val
            continue
        s, l = frac
        down_avail = list(avail)
        down_avail[s] = tuple(c for c in avail[s] if c != l)
        down_chosen = list(chosen)
        if len(down_avail[s]) == 1:
            down_chosen[s] = down_avail[s][0]
        up_avail = list(avail)
        up_avail[s] = (l,)
        up_chosen = list(chosen)
        up_chosen[s] = l
        push(tuple(up_avail), tuple(up_chosen), nid)
        push(tuple(down_avail), tuple(down_chosen), nid)

    if incumbent[1] is None:
        if status == "optimal":
            return MicpResult("infeasible", np.inf, None, None, nodes_done, log)
        return MicpResult("feasible", np.inf, None, None, nodes_done, log)
    return MicpResult(status, incumbent[0], incumbent[1], incumbent[2],
                      nodes_done, log)


# ---------------------------------------------------------------------------
# local models and certification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LocalModel:
    """Reduced binary model around an anchor point.

    Only terms with at least two rho-active components keep binaries; every
    other term contributes its single active component directly.  The
    neighbourhood S is the model's feasible region, exactly as supplied.
    """

    anchor: np.ndarray
    rho: float
    S: FeasibleSet
    active_sets: tuple
    degenerate_terms: tuple
    model: BigMModel

    @property
    def binary_count(self):
        return sum(len(self.active_sets[s]) for s in self.degenerate_terms)

    @property
    def degeneracy_factor(self):
        out = 1
        for acts in self.active_sets:
            out *= len(acts)
        return out

    @property
    def feasible_assignments(self):
        return self.degeneracy_factor


def build_local_model(problem: SmcProblem, x_hat, rho: float, S: FeasibleSet,
                      local_bounds: SBounds) -> LocalModel:
    """Restrict the binary model to the rho-active components at x_hat."""
    _check_bounds(problem, local_bounds)
    x_hat = np.asarray(x_hat, dtype=float)
    acts = tuple(active_set(problem, x_hat, s, rho) for s in range(problem.N))
    reduced_terms = tuple(tuple(problem.terms[s][l] for l in acts[s])
                          for s in range(problem.N))
    reduced = SmcProblem(problem.hbar, reduced_terms, S,
                         name=problem.name + ":local")
    bounds = local_bounds.restrict(acts)
    deg = tuple(s for s in range(problem.N) if len(acts[s]) >= 2)
    return LocalModel(anchor=x_hat, rho=rho, S=S, active_sets=acts,
                      degenerate_terms=deg,
                      model=BigMModel(reduced, bounds, 1.0))


def local_enumeration(problem: SmcProblem, x_hat, rho: float, S: FeasibleSet,
                      cfg: SolverConfig = DEFAULT_CONFIG,
                      cap: int = ENUM_FACTOR_CAP):
    """Exact minimum of the reduced local objective by scanning active
    selections; returns (value, x)."""
    x_hat = np.asarray(x_hat, dtype=float)
    acts = [active_set(problem, x_hat, s, rho) for s in range(problem.N)]
    factor = 1
    for a in acts:
        factor *= len(a)
    if factor > cap:
        raise CapExceeded(f"degeneracy factor {factor} above the cap {cap}")
    inv_n = 1.0 / problem.N
    best = None
    for sigma in itertools.product(*acts):
        terms = [(1.0, problem.hbar)]
        terms += [(inv_n, problem.terms[s][l]) for s, l in enumerate(sigma)]
        res = solve_convex_terms(terms, S, cfg)
        if best is None or res.value < best[0]:
            best = (res.value, res.x)
    return best


@dataclass(frozen=True)
class CertifyOutcome:
    kind: str  # certified | improved | inconclusive
    value_at_anchor: float
    local_optimum: float | None = None
    x_new: np.ndarray | None = None
    value_new: float | None = None

    @property
    def certified(self):
        return self.kind == "certified"

    def to_json(self) -> str:
        doc = {"kind": self.kind, "value_at_anchor": self.value_at_anchor,
               "local_optimum": self.local_optimum,
               "value_new": self.value_new,
               "x_new": None if self.x_new is None else self.x_new.tolist()}
        return json.dumps(doc, indent=2, sort_keys=True)


def certify_or_improve(problem: SmcProblem, x_hat, rho: float = RHO_DEFAULT,
                       S: FeasibleSet | None = None,
                       delta_glob: float = DELTA_GLOB_DEFAULT,
                       budget: Budget = Budget(time_limit=120.0),
                       local_bounds: SBounds | None = None,
                       enum_cap: int = ENUM_FACTOR_CAP,
                       cfg: SolverConfig = DEFAULT_CONFIG) -> CertifyOutcome:
    """Either certify local optimality of x_hat on S or improve on it.

    Solves the reduced local model over S: enumeration when the degeneracy
    factor is small, branch and bound otherwise (then ``local_bounds`` must
    be supplied and valid on S).  Certification means the reduced optimum
    matches the anchor value (to 1e-9) with an exhausted search; improvement
    means a point at least ``delta_glob`` better was found.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    if S is None:
        raise ValueError("supply the neighbourhood S explicitly")
    f_hat = objective(problem, x_hat)
    acts = [active_set(problem, x_hat, s, rho) for s in range(problem.N)]
    factor = 1
    for a in acts:
        factor *= len(a)

    if factor <= enum_cap:
        f_star, x_star = local_enumeration(problem, x_hat, rho, S, cfg,
                                           cap=enum_cap)
        exhausted = True
    else:
        lm = build_local_model(problem, x_hat, rho, S, local_bounds)
        res = solve_micp(lm.model, budget, cfg)
        if res.status == "infeasible" or res.x is None:
            return CertifyOutcome("inconclusive", f_hat)
        f_star, x_star = res.value, res.x
        exhausted = res.status == "optimal"

    if exhausted and f_star >= f_hat - CERT_TOL:
        return CertifyOutcome("certified", f_hat, local_optimum=f_star)
    f_new = objective(problem, x_star)
    if f_new <= f_hat - delta_glob:
        return CertifyOutcome("improved", f_hat, local_optimum=f_star,
                              x_new=x_star, value_new=f_new)
    return CertifyOutcome("inconclusive", f_hat, local_optimum=f_star)
