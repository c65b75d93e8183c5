"""Instance library: worst-case generators, 1-d/2-d toys, and the two
data-driven builders (piecewise-linear L1 regression and restricted facility
location) with their closed-form neighbourhood bounds.

Dataset CSV schemas (demo files live under ``datasets/`` in the repo):

- regression: header row; one numeric column named ``target``; every other
  column is a numeric feature (pass-through, no categorical handling);
- facility location: header row with columns ``lat``, ``lng``,
  ``population``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import BadDims, DimensionMismatch
from .funcs import Affine, Const, MaxAffine, NormAffine, Quadratic, Sum
from .micp import ModelAdditions, SBounds
from .smc import SmcProblem
from .subsolve import Box, ConvexHull, EpigraphLink, FeasibleSet, Halfspaces

R_FLOOR = 1e-9


# ---------------------------------------------------------------------------
# worst-case generator
# ---------------------------------------------------------------------------

def fully_active(N: int, n, d: int, hbar=None, box=None) -> SmcProblem:
    """Instance whose every selection is uniquely active on its own cell.

    Component l (1-based) of term s is  l * x_s + l (l - 1) / 2, so the open
    interval (-l, -l + 1) in coordinate s activates exactly component l.
    Requires d >= N; the default box covers all the interesting cells.
    """
    n = [int(v) for v in n]
    if len(n) != N or d < N or any(v < 1 for v in n):
        raise BadDims("need len(n) == N, d >= N and every n_s >= 1")
    if box is None:
        lo = np.full(d, -float(max(n)) - 1.0)
        hi = np.full(d, 1.0)
        box = (lo, hi)
    X = FeasibleSet.box(*box)
    if hbar is None:
        hbar = Const(0.0, d)
    terms = []
    for s in range(N):
        comps = []
        for l0 in range(n[s]):
            lval = l0 + 1
            a = np.zeros(d)
            a[s] = lval
            comps.append(Affine(a, lval * (lval - 1) / 2.0))
        terms.append(tuple(comps))
    return SmcProblem(hbar, tuple(terms), X, name=f"fully_active_{N}x{tuple(n)}")


# ---------------------------------------------------------------------------
# toy instances
# ---------------------------------------------------------------------------

def _quad1(p2, a1, b0):
    """Univariate quadratic p2 x^2 + a1 x + b0 as an atom."""
    return Quadratic(np.array([[2.0 * p2]]), np.array([float(a1)]), float(b0))


def toy_library() -> dict:
    """Named small instances used across tests and demos."""
    lib = {}

    # 2-d, two terms: quadratic bowls clipped by a constant, plus a
    # quadratic/absolute-value pair; global optimum at (-5/2, 0)
    q11 = Quadratic(np.array([[2.0, 0.0], [0.0, 2.0 / 3.0]]),
                    np.array([-6.0, 2.0]), 12.0)
    q12 = Quadratic(np.array([[2.0, 0.0], [0.0, 1.0 / 3.0]]),
                    np.array([6.0, 0.0]), 9.0)
    q21 = Quadratic(np.array([[8.0, -4.0], [-4.0, 2.0]]),
                    np.array([-4.0, 2.0]), 1.0)
    abs_x1p2 = NormAffine(1, np.array([[1.0, 0.0]]), np.array([2.0]))
    lib["quad_clips_2d"] = SmcProblem(
        Const(0.0, 2),
        ((q11, q12, Const(15.0, 2)), (q21, abs_x1p2)),
        FeasibleSet.box([-10.0, -10.0], [10.0, 10.0]),
        name="quad_clips_2d")

    # 1-d, two clipped parabolas; F vanishes at 0, 1/2 and 1, and several
    # distinct selections are simultaneously optimal
    lib["two_clip_1d"] = SmcProblem(
        Const(-0.25, 1),
        ((_quad1(1, -2, 1), Const(0.5, 1)),
         (_quad1(1, 0, 0), Const(0.5, 1))),
        FeasibleSet.box([-10.0], [10.0]),
        name="two_clip_1d")

    # 1-d, |x| + min of three pieces; a critical point at 0 still carries
    # positive weight-update gain, and the global value is -33/16 at -2
    lib["abs_min_three"] = SmcProblem(
        NormAffine(1, np.array([[1.0]]), np.array([0.0])),
        ((Affine(np.array([1.0]), -0.125),
          _quad1(1, 0, 0),
          Affine(np.array([2.0]), -0.0625)),),
        FeasibleSet.box([-2.0], [2.0]),
        name="abs_min_three")

    # 1-d, two terms of shifted parabolas with a spurious valley that traps
    # plain alternating minimization
    term1 = (_quad1(1, -3, -2), _quad1(1, 0, 2), _quad1(1, 1, -2),
             _quad1(1, 4, 2))
    term2 = (_quad1(0.5, 2, -2), _quad1(1, 4, 2), _quad1(1, 0, -1))
    lib["valley_escape"] = SmcProblem(
        Const(0.0, 1), (term1, term2),
        FeasibleSet.box([-5.0], [5.0]),
        name="valley_escape")

    return lib


# ---------------------------------------------------------------------------
# piecewise-linear L1 regression
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlrSpec:
    """Dataset plus model sizes for the max-affine difference regressor."""

    gamma: np.ndarray  # (N,) targets
    beta: np.ndarray   # (N, p) features
    B1: int
    B2: int
    L: float = 100.0

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 2 or gamma.shape != (beta.shape[0],):
            raise DimensionMismatch("need gamma (N,) and beta (N, p)")
        if self.B1 < 1 or self.B2 < 1 or gamma.shape[0] < 1:
            raise BadDims("need N >= 1 and B1, B2 >= 1")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "beta", beta)

    @property
    def N(self):
        return self.gamma.shape[0]

    @property
    def p(self):
        return self.beta.shape[1]

    @property
    def d(self):
        return self.p * (self.B1 + self.B2)

    @property
    def n_bar(self):
        return self.B1 * self.B2

    def group1_index(self, l: int) -> int:
        """First-group block of component l (0-based everywhere)."""
        return l // self.B2

    def group2_index(self, l: int) -> int:
        return l % self.B2

    def block1(self, e1: int) -> slice:
        return slice(e1 * self.p, (e1 + 1) * self.p)

    def block2(self, e2: int) -> slice:
        return slice((self.B1 + e2) * self.p, (self.B1 + e2 + 1) * self.p)


def plr_feature_expand(raw) -> np.ndarray:
    """Append all second-order interactions: p -> p (3 + p) / 2 features."""
    raw = np.asarray(raw, dtype=float)
    parts = [raw]
    for i in range(raw.shape[-1]):
        parts.append(raw[..., i:i + 1] * raw[..., i:])
    return np.concatenate(parts, axis=-1)


def plr_predict(spec: PlrSpec, x, beta_row) -> float:
    """Model output: max over group-1 blocks minus max over group-2 blocks."""
    x = np.asarray(x, dtype=float)
    g1 = max(float(beta_row @ x[spec.block1(e1)]) for e1 in range(spec.B1))
    g2 = max(float(beta_row @ x[spec.block2(e2)]) for e2 in range(spec.B2))
    return g1 - g2


def plr_direct_loss(spec: PlrSpec, x) -> float:
    """Mean absolute prediction error, evaluated straight off the dataset."""
    return float(np.mean([abs(spec.gamma[s] - plr_predict(spec, x, spec.beta[s]))
                          for s in range(spec.N)]))


def plr_build(spec: PlrSpec) -> SmcProblem:
    """Exact reformulation of the mean-absolute-deviation fit.

    The convex part collects, per sample, the positive parts of both signed
    residual branches; each term's components are the negated sums of one
    block from each group, so the pointwise minimum restores the two inner
    maxima.  ``plr_direct_loss`` and the built objective agree everywhere.
    """
    d = spec.d
    hbar_terms = []
    for s in range(spec.N):
        beta = spec.beta[s]
        gamma = float(spec.gamma[s])
        # max{gamma + group2 max, group1 max}
        rows_a = np.zeros((spec.B2 + spec.B1, d))
        rows_b = np.zeros(spec.B2 + spec.B1)
        for e2 in range(spec.B2):
            rows_a[e2, spec.block2(e2)] = beta
            rows_b[e2] = gamma
        for e1 in range(spec.B1):
            rows_a[spec.B2 + e1, spec.block1(e1)] = beta
        hbar_terms.append((1.0 / spec.N, MaxAffine(rows_a, rows_b)))
        # max{-gamma + group1 max, group2 max}
        rows_a = np.zeros((spec.B1 + spec.B2, d))
        rows_b = np.zeros(spec.B1 + spec.B2)
        for e1 in range(spec.B1):
            rows_a[e1, spec.block1(e1)] = beta
            rows_b[e1] = -gamma
        for e2 in range(spec.B2):
            rows_a[spec.B1 + e2, spec.block2(e2)] = beta
        hbar_terms.append((1.0 / spec.N, MaxAffine(rows_a, rows_b)))
    hbar = Sum(tuple(hbar_terms))

    terms = []
    for s in range(spec.N):
        beta = spec.beta[s]
        comps = []
        for l in range(spec.n_bar):
            a = np.zeros(d)
            a[spec.block1(spec.group1_index(l))] = -beta
            a[spec.block2(spec.group2_index(l))] = -beta
            comps.append(Affine(a, 0.0))
        terms.append(tuple(comps))

    X = FeasibleSet.box(np.full(d, -spec.L), np.full(d, spec.L))
    return SmcProblem(hbar, tuple(terms), X, name="plr")


def plr_local_sbounds(spec: PlrSpec, x_hat, R: float, dual_norms) -> SBounds:
    """Closed-form bounds on a product of R-balls around x_hat.

    M[l+, l] is the value gap at the anchor plus 2 R ||beta||_* for every
    block index (group 1 and group 2) where the two components differ.
    ``dual_norms`` supplies ||beta^(s)||_* for the ball norm in use.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    x_hat = np.asarray(x_hat, dtype=float)
    dual_norms = np.asarray(dual_norms, dtype=float)
    if dual_norms.shape != (spec.N,):
        raise DimensionMismatch("need one dual norm per sample")
    problem = plr_build(spec)
    raw = []
    for s in range(spec.N):
        n = spec.n_bar
        vals = np.array([problem.terms[s][l].value(x_hat) for l in range(n)])
        m = np.zeros((n, n))
        for lp in range(n):
            for l in range(n):
                if lp == l:
                    continue
                differ = (int(spec.group1_index(lp) != spec.group1_index(l))
                          + int(spec.group2_index(lp) != spec.group2_index(l)))
                m[lp, l] = vals[lp] - vals[l] + 2.0 * differ * R * dual_norms[s]
        raw.append(m)
    return SBounds.from_raw(raw)


def plr_synthetic(N: int, p: int, B1: int, B2: int, L: float = 100.0,
                  seed: int = 0, noise: float = 0.05) -> PlrSpec:
    """Random dataset whose targets come from a planted max-affine model."""
    rng = np.random.default_rng(seed)
    beta = rng.normal(0.0, 1.0, (N, p))
    w1 = rng.normal(0.0, 1.0, (B1, p))
    w2 = rng.normal(0.0, 1.0, (B2, p))
    gamma = np.array([
        float((beta[s] @ w1.T).max() - (beta[s] @ w2.T).max())
        for s in range(N)])
    gamma += noise * rng.normal(0.0, 1.0, N)
    return PlrSpec(gamma, beta, B1, B2, L)


def load_regression_csv(path) -> tuple:
    """Read (gamma, beta_raw) from a CSV with a ``target`` column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "target" not in reader.fieldnames:
            raise ValueError("regression CSV needs a 'target' column")
        feats = [c for c in reader.fieldnames if c != "target"]
        gam, rows = [], []
        for rec in reader:
            gam.append(float(rec["target"]))
            rows.append([float(rec[c]) for c in feats])
    return np.array(gam), np.array(rows)


# ---------------------------------------------------------------------------
# restricted facility location
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RflSpec:
    """Cities with populations; B stores within 1-norm radius R of a hub."""

    population: np.ndarray  # (N,)
    beta: np.ndarray        # (N, 2) coordinates
    B: int
    R_ref: float = 1.0
    Lam: float = 0.0

    def __post_init__(self):
        pop = np.asarray(self.population, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 2 or beta.shape[1] != 2 or pop.shape != (beta.shape[0],):
            raise DimensionMismatch("need population (N,) and beta (N, 2)")
        if (pop < 1).any():
            raise ValueError("populations must be >= 1")
        if self.B < 1:
            raise BadDims("need at least one store")
        object.__setattr__(self, "population", pop)
        object.__setattr__(self, "beta", beta)

    @property
    def N(self):
        return self.population.shape[0]

    @property
    def d(self):
        # decision vector (R, hub, store_1, ..., store_B)
        return 1 + 2 * (self.B + 1)

    @property
    def total_population(self):
        return float(self.population.sum())

    def store_coords(self, l: int) -> slice:
        return slice(3 + 2 * l, 5 + 2 * l)

    hub_coords = slice(1, 3)


def rfl_build(spec: RflSpec) -> SmcProblem:
    """Population-weighted 1-norm assignment cost plus a radius penalty.

    Components are scaled by N P^(s) / sum(P) so the problem's built-in 1/N
    averaging reproduces the population-weighted mean exactly.  The radius
    coordinate is kept strictly positive via a tiny floor, and the coupling
    ``||hub - store_l||_1 <= R`` enters through epigraph links.
    """
    d = spec.d
    if spec.Lam == 0.0:
        hbar = Const(0.0, d)
    else:
        rows_a = np.zeros((2, d))
        rows_a[0, 0] = spec.Lam
        rows_b = np.array([-spec.Lam * spec.R_ref, 0.0])
        hbar = MaxAffine(rows_a, rows_b)

    pbar = spec.total_population
    terms = []
    for s in range(spec.N):
        w = spec.N * float(spec.population[s]) / pbar
        comps = []
        for l in range(spec.B):
            A = np.zeros((2, d))
            A[0, 3 + 2 * l] = -1.0
            A[1, 4 + 2 * l] = -1.0
            comps.append(NormAffine(1, A, spec.beta[s].copy(), w))
        terms.append(tuple(comps))

    lo = np.full(d, -np.inf)
    hi = np.full(d, np.inf)
    lo[0] = R_FLOOR
    pieces = [Box(lo, hi)]
    for l in range(spec.B):
        A = np.zeros((2, d))
        A[0, 1] = 1.0
        A[0, 3 + 2 * l] = -1.0
        A[1, 2] = 1.0
        A[1, 4 + 2 * l] = -1.0
        pieces.append(EpigraphLink(0, NormAffine(1, A, np.zeros(2))))
    X = FeasibleSet(d, tuple(pieces))
    return SmcProblem(hbar, tuple(terms), X, name="rfl")


def rfl_direct_objective(spec: RflSpec, z) -> float:
    """The location objective computed straight from its formula."""
    z = np.asarray(z, dtype=float)
    total = spec.Lam * max(z[0] - spec.R_ref, 0.0)
    pbar = spec.total_population
    for s in range(spec.N):
        dists = [float(np.abs(spec.beta[s] - z[spec.store_coords(l)]).sum())
                 for l in range(spec.B)]
        total += float(spec.population[s]) / pbar * min(dists)
    return float(total)


def _sign(v):
    return np.where(np.asarray(v) >= 0.0, 1.0, -1.0)


def rfl_local_sbounds(spec: RflSpec, x_hat, R_inf: float) -> SBounds:
    """Closed-form bounds on the box product of inf-norm balls of radius
    R_inf around the anchor's coordinates (radius coordinate included)."""
    if R_inf <= 0:
        raise ValueError("R_inf must be positive")
    x_hat = np.asarray(x_hat, dtype=float)
    pbar = spec.total_population
    raw = []
    for s in range(spec.N):
        w = spec.N * float(spec.population[s]) / pbar
        beta = spec.beta[s]
        m = np.zeros((spec.B, spec.B))
        for lp in range(spec.B):
            r_plus = beta - x_hat[spec.store_coords(lp)]
            hi = float(np.abs(r_plus + R_inf * _sign(r_plus)).sum())
            for l in range(spec.B):
                if lp == l:
                    continue
                r_low = beta - x_hat[spec.store_coords(l)]
                shrink = np.minimum(R_inf * np.ones(2), np.abs(r_low))
                lo = float(np.abs(r_low - shrink * _sign(r_low)).sum())
                m[lp, l] = w * (hi - lo)
        raw.append(m)
    return SBounds.from_raw(raw)


def rfl_neighbourhood(spec: RflSpec, x_hat, R_inf: float) -> FeasibleSet:
    """The box neighbourhood matching ``rfl_local_sbounds``, intersected
    with the problem's feasible set."""
    x_hat = np.asarray(x_hat, dtype=float)
    problem_X = rfl_build(spec).X
    return problem_X.intersect(Box(x_hat - R_inf, x_hat + R_inf))


def rfl_synthetic(N: int, B: int, seed: int = 0, Lam: float = 0.0,
                  R_ref: float = 1.0) -> RflSpec:
    """Random cities on a small map with integer populations."""
    rng = np.random.default_rng(seed)
    beta = rng.uniform(-2.0, 2.0, (N, 2))
    pop = rng.integers(1, 1000, N).astype(float)
    return RflSpec(pop, beta, B, R_ref, Lam)


def load_cities_csv(path) -> tuple:
    """Read (population, beta) from a CSV with lat, lng, population columns."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"lat", "lng", "population"}
        if reader.fieldnames is None or not needed <= set(reader.fieldnames):
            raise ValueError("cities CSV needs lat, lng, population columns")
        pop, coords = [], []
        for rec in reader:
            pop.append(float(rec["population"]))
            coords.append([float(rec["lat"]), float(rec["lng"])])
    return np.array(pop), np.array(coords)


# ---------------------------------------------------------------------------
# valid and symmetry-breaking constraints for store placement
# ---------------------------------------------------------------------------

def clustering_constraints(spec: RflSpec, kind: str, delta_bar: float = 0.0):
    """Problem-knowledge constraints for the store-placement family.

    - ``hull``: each store stays in the convex hull of the city coordinates
      (feasible-set pieces with auxiliary combination weights);
    - ``order``: coordinate-sum ordering with separation ``delta_bar``
      between successive stores (a Halfspaces piece);
    - ``coverage``: every store serves at least one city (rows over the
      binary grid, or a check on weight matrices for the bi-convex route).
    """
    if kind == "hull":
        return [ConvexHull(spec.beta.copy(), spec.d,
                           np.arange(3 + 2 * l, 5 + 2 * l))
                for l in range(spec.B)]
    if kind == "order":
        rows = []
        rhs = []
        for l1 in range(spec.B):
            for l2 in range(l1 + 1, spec.B):
                row = np.zeros(spec.d)
                row[spec.store_coords(l1)] = -1.0
                row[spec.store_coords(l2)] = 1.0
                rows.append(row)
                rhs.append(-float(delta_bar))
        if not rows:
            return [Halfspaces(np.zeros((0, spec.d)), np.zeros(0))]
        return [Halfspaces(np.array(rows), np.array(rhs))]
    if kind == "coverage":
        t_rows = []
        for l in range(spec.B):
            coefs = {(s, l): -1.0 for s in range(spec.N)}
            t_rows.append((coefs, -1.0, "<="))
        return ModelAdditions(tuple(t_rows))
    raise ValueError(f"unknown constraint kind {kind!r}")


def coverage_weights_ok(Q, B: int, tol: float = 1e-9) -> bool:
    """Check sum_s q_l^(s) >= 1 for every store index l."""
    totals = np.zeros(B)
    for q in Q:
        totals += np.asarray(q, dtype=float)
    return bool((totals >= 1.0 - tol).all())
