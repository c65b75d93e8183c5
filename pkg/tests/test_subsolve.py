import numpy as np
import pytest

from smcopt.errors import Infeasible, Unbounded, UnsupportedAtom
from smcopt.funcs import Affine, Const, MaxAffine, NormAffine, Quadratic
from smcopt.subsolve import (
    Box,
    ConvexHull,
    EpigraphLink,
    FeasibleSet,
    Halfspaces,
    NormBall,
    SolverConfig,
    WeightedSubproblem,
    ensure_nonempty,
    lower_to_lp_or_qp,
    solve_convex,
    solve_convex_terms,
)
from smcopt.subsolve.qp import solve_ball_qp
from smcopt.subsolve.simplex import solve_bounded_lp
from smcopt.subsolve.subgrad import project_feasible, solve_subgradient


def box1(lo, hi):
    return FeasibleSet.box([lo], [hi])


ABS = NormAffine(1, np.array([[1.0]]), np.array([0.0]))
XSQ = Quadratic(np.array([[2.0]]), np.array([0.0]), 0.0)


class TestSolveExamples:
    def test_quadratic_on_interval(self):
        res = solve_convex_terms([(1.0, XSQ)], box1(-2, 2))
        assert res.value == pytest.approx(0.0, abs=1e-12)
        assert res.x[0] == pytest.approx(0.0, abs=1e-9)

    def test_abs_plus_square(self):
        res = solve_convex_terms([(1.0, ABS), (1.0, XSQ)], box1(-2, 2))
        assert res.value == pytest.approx(0.0, abs=1e-12)
        assert res.x[0] == pytest.approx(0.0, abs=1e-9)

    def test_two_shifted_squares_free(self):
        half_shift = Quadratic(np.array([[2.0]]), np.array([-2.0]), 1.0)
        res = solve_convex_terms([(0.5, half_shift), (0.5, XSQ)],
                                 FeasibleSet.whole_space(1))
        assert res.value == pytest.approx(0.25, abs=1e-12)
        assert res.x[0] == pytest.approx(0.5, abs=1e-9)


class _TinyProblem:
    """Duck-typed problem carrier for WeightedSubproblem tests."""

    def __init__(self, hbar, terms, X):
        self.hbar = hbar
        self.terms = terms
        self.X = X
        self.N = len(terms)


def test_weighted_subproblem_objective(rng):
    prob = _TinyProblem(Const(0.0, 1), [[ABS, XSQ]], box1(-2, 2))
    sp = WeightedSubproblem(prob, (np.array([0.25, 0.75]),))
    res = solve_convex(sp)
    # 0.25 |x| + 0.75 x^2 minimized at 0
    assert res.value == pytest.approx(0.0, abs=1e-12)
    # oracle contract: no sampled feasible point beats the returned value
    for _ in range(100):
        y = rng.uniform(-2, 2, 1)
        fy = 0.25 * ABS.value(y) + 0.75 * XSQ.value(y)
        assert fy >= res.value - 1e-6


class TestLowering:
    def test_maxaffine_rows_and_aux(self):
        prob = _TinyProblem(MaxAffine(np.array([[1.0], [-1.0]]),
                                      np.zeros(2)),
                            [[Const(0.0, 1)]], box1(-1, 1))
        model = lower_to_lp_or_qp(WeightedSubproblem(prob, (np.ones(1),)))
        assert model.nvar == 2  # x plus one epigraph variable
        assert model.G.shape[0] == 2

    def test_l1_norm_aux_count(self):
        A = np.array([[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]])
        atom = NormAffine(1, A, np.array([1.0, -2.0, 0.0]))
        prob = _TinyProblem(atom, [[Const(0.0, 2)]],
                            FeasibleSet.box([-1, -1], [1, 1]))
        model = lower_to_lp_or_qp(WeightedSubproblem(prob, (np.ones(1),)))
        assert model.nvar == 2 + 3   # one t per residual row
        assert model.G.shape[0] == 6  # +-(Ax + c) <= t

    def test_norm2_unsupported_strictly(self):
        atom = NormAffine(2, np.eye(2), np.zeros(2))
        prob = _TinyProblem(atom, [[Const(0.0, 2)]],
                            FeasibleSet.box([-1, -1], [1, 1]))
        with pytest.raises(UnsupportedAtom):
            lower_to_lp_or_qp(WeightedSubproblem(prob, (np.ones(1),)))

    def test_dump_is_text(self):
        prob = _TinyProblem(ABS, [[Const(0.0, 1)]], box1(-1, 1))
        model = lower_to_lp_or_qp(WeightedSubproblem(prob, (np.ones(1),)))
        assert "row 0" in model.dump()


def _random_polyhedral_terms(rng, d):
    terms = []
    for _ in range(int(rng.integers(1, 4))):
        kind = rng.choice(["abs", "max", "affine"])
        if kind == "abs":
            m = int(rng.integers(1, 3))
            terms.append((float(rng.uniform(0.2, 2.0)),
                          NormAffine(1, rng.normal(size=(m, d)),
                                     rng.normal(size=m))))
        elif kind == "max":
            m = int(rng.integers(2, 4))
            terms.append((float(rng.uniform(0.2, 2.0)),
                          MaxAffine(rng.normal(size=(m, d)),
                                    rng.normal(size=m))))
        else:
            terms.append((1.0, Affine(rng.normal(size=d), rng.normal())))
    return terms


def test_lowered_lp_matches_subgradient_fallback(rng):
    # cross-solver oracle: LP route vs projected subgradient on 50 instances
    for _ in range(50):
        d = int(rng.integers(1, 4))
        X = FeasibleSet.box(np.full(d, -2.0), np.full(d, 2.0))
        terms = _random_polyhedral_terms(rng, d)
        lp = solve_convex_terms(terms, X)

        def value_fn(x, terms=terms):
            return float(sum(w * a.value(x) for w, a in terms))

        def subgrad_fn(x, terms=terms, d=d):
            g = np.zeros(d)
            for w, a in terms:
                g += w * a.subgradient(x)
            return g

        _, f_best, status = solve_subgradient(
            value_fn, subgrad_fn, X, lower_bound=lp.value, max_iters=20000,
            tol=1e-8)
        assert abs(f_best - lp.value) <= 1e-6


def test_lp_against_scipy(rng):
    # mixed bound types, zero rows, degenerate tight rows, possible
    # unboundedness: statuses and optimal values must agree with HiGHS
    scipy_opt = pytest.importorskip("scipy.optimize")
    for _ in range(80):
        n = int(rng.integers(2, 12))
        m = int(rng.integers(1, 10))
        c = rng.normal(size=n)
        G = rng.normal(size=(m, n))
        if rng.uniform() < 0.3:
            G[int(rng.integers(m))] = 0.0
        x_feas = rng.uniform(-1, 1, n)
        slack = rng.uniform(0.0, 1.0, m)
        slack[rng.uniform(size=m) < 0.3] = 0.0
        g = G @ x_feas + slack
        lo = np.where(rng.uniform(size=n) < 0.25, -np.inf, -2.0)
        hi = np.where(rng.uniform(size=n) < 0.25, np.inf, 2.0)
        lo = np.minimum(lo, x_feas)
        hi = np.maximum(hi, x_feas)
        A = np.hstack([G, np.eye(m)])
        res = solve_bounded_lp(np.concatenate([c, np.zeros(m)]), A, g,
                               np.concatenate([lo, np.zeros(m)]),
                               np.concatenate([hi, np.full(m, np.inf)]))
        ref = scipy_opt.linprog(c, A_ub=G, b_ub=g, bounds=list(zip(lo, hi)),
                                method="highs")
        if ref.status == 3:
            assert res.status == "unbounded"
        elif ref.status == 0:
            assert res.status == "optimal"
            assert res.value == pytest.approx(ref.fun, abs=1e-6,
                                              rel=1e-6)


def test_lp_equality_rows_against_scipy(rng):
    scipy_opt = pytest.importorskip("scipy.optimize")
    for _ in range(40):
        n = int(rng.integers(2, 8))
        m = int(rng.integers(1, 4))
        c = rng.normal(size=n)
        E = rng.normal(size=(m, n))
        x_feas = rng.uniform(-1, 1, n)
        e = E @ x_feas
        lo = np.full(n, -3.0)
        hi = np.full(n, 3.0)
        A = np.hstack([E, np.eye(m)])
        res = solve_bounded_lp(np.concatenate([c, np.zeros(m)]), A, e,
                               np.concatenate([lo, np.zeros(m)]),
                               np.concatenate([hi, np.zeros(m)]))
        ref = scipy_opt.linprog(c, A_eq=E, b_eq=e, bounds=list(zip(lo, hi)),
                                method="highs")
        assert res.status == "optimal" and ref.status == 0
        assert res.value == pytest.approx(ref.fun, abs=1e-6, rel=1e-6)


def test_qp_against_cvxopt(rng):
    cvxopt = pytest.importorskip("cvxopt")
    from cvxopt import matrix, solvers
    solvers.options["show_progress"] = False
    solvers.options["abstol"] = 1e-10
    solvers.options["reltol"] = 1e-10
    for _ in range(25):
        n = int(rng.integers(1, 5))
        R = rng.normal(size=(n, n))
        P = R @ R.T + 1e-8 * np.eye(n)
        a = rng.normal(size=n)
        lo = np.full(n, -2.0)
        hi = np.full(n, 2.0)
        terms = [(1.0, Quadratic(P, a, 0.0))]
        mine = solve_convex_terms(terms, FeasibleSet.box(lo, hi))
        G = np.vstack([np.eye(n), -np.eye(n)])
        h = np.concatenate([hi, -lo])
        ref = solvers.qp(matrix(P), matrix(a), matrix(G), matrix(h))
        ref_val = float(ref["primal objective"])
        assert mine.value == pytest.approx(ref_val, abs=1e-6)


def test_optimality_certificate(rng):
    # for the returned x*, no sampled feasible point does better
    for _ in range(10):
        d = 3
        X = FeasibleSet.box(np.full(d, -2.0), np.full(d, 2.0))
        terms = _random_polyhedral_terms(rng, d)
        R = rng.normal(size=(d, d))
        terms.append((1.0, Quadratic(R @ R.T, rng.normal(size=d), 0.0)))
        res = solve_convex_terms(terms, X)

        def value_fn(x):
            return float(sum(w * a.value(x) for w, a in terms))

        assert value_fn(res.x) == pytest.approx(res.value, abs=1e-7)
        for _ in range(100):
            y = rng.uniform(-2, 2, d)
            assert value_fn(y) >= res.value - 1e-6


def test_determinism_bitwise(rng):
    d = 3
    X = FeasibleSet.box(np.full(d, -2.0), np.full(d, 2.0))
    terms = _random_polyhedral_terms(rng, d)
    a = solve_convex_terms(terms, X)
    b = solve_convex_terms(terms, X)
    assert a.x.tobytes() == b.x.tobytes()
    assert a.value == b.value


class TestFeasibleSets:
    def test_infeasible_detected(self):
        X = FeasibleSet(1, (Box(np.array([0.0]), np.array([1.0])),
                            Halfspaces(np.array([[1.0]]), np.array([-1.0]))))
        with pytest.raises(Infeasible):
            ensure_nonempty(X)

    def test_nonempty_passes(self):
        ensure_nonempty(box1(-1, 1))

    def test_norm_ball_l1_lowering(self):
        X = FeasibleSet(2, (NormBall(1, np.zeros(2), 1.0, 2),))
        res = solve_convex_terms([(1.0, Affine(np.array([-1.0, -1.0]), 0.0))],
                                 X)
        assert res.value == pytest.approx(-1.0, abs=1e-9)

    def test_epigraph_link(self):
        # minimize t subject to |x - 3| <= t
        link = EpigraphLink(1, NormAffine(1, np.array([[1.0, 0.0]]),
                                          np.array([-3.0])))
        X = FeasibleSet(2, (Box(np.array([-10.0, -10.0]),
                                np.array([10.0, 10.0])), link))
        res = solve_convex_terms([(1.0, Affine(np.array([0.0, 1.0]), 0.0))], X)
        assert res.value == pytest.approx(0.0, abs=1e-9)
        assert res.x[0] == pytest.approx(3.0, abs=1e-9)

    def test_convex_hull_membership(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        X = FeasibleSet(2, (ConvexHull(pts, 2),))
        res = solve_convex_terms(
            [(1.0, Affine(np.array([-1.0, -1.0]), 0.0))], X)
        # max x1 + x2 over the triangle is 1
        assert res.value == pytest.approx(-1.0, abs=1e-9)

    def test_unbounded_raises(self):
        with pytest.raises(Unbounded):
            solve_convex_terms([(1.0, Affine(np.array([1.0]), 0.0))],
                               FeasibleSet.whole_space(1))

    def test_dykstra_projection(self, rng):
        X = FeasibleSet(2, (Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0])),
                            NormBall(2, np.zeros(2), 1.0, 2)))
        for _ in range(20):
            v = rng.normal(size=2, scale=3)
            p = project_feasible(X, v)
            assert X.contains(p, tol=1e-6)


def test_norm2_objective_falls_back(rng):
    # 2-norm atoms have no exact lowering; the fallback takes over
    center = np.array([0.5, -0.25])
    atom = NormAffine(2, np.eye(2), -center)
    X = FeasibleSet.box(np.full(2, -1.0), np.full(2, 1.0))
    res = solve_convex_terms([(1.0, atom)], X,
                             SolverConfig(method="subgradient-fallback"))
    assert res.value <= 1e-4
    res_auto = solve_convex_terms([(1.0, atom), (1.0, XSQ_2D)], X)
    assert res_auto.value <= 0.3


XSQ_2D = Quadratic(np.eye(2), np.zeros(2), 0.0)


def test_ball_qp_oracle(rng):
    for _ in range(30):
        n = int(rng.integers(1, 5))
        R = rng.normal(size=(n, n))
        P = R @ R.T
        c = rng.normal(size=n)
        radius = float(rng.uniform(0.2, 2.0))
        x, val = solve_ball_qp(P, c, radius)
        assert np.linalg.norm(x) <= radius + 1e-9
        # sampled points on and inside the ball never beat the solution
        for _ in range(200):
            y = rng.normal(size=n)
            y = y / np.linalg.norm(y) * radius * rng.uniform() ** 0.5
            assert 0.5 * y @ (P @ y) + c @ y >= val - 1e-7


class TestSolverHardening:
    def test_degenerate_lp_terminates(self):
        # classic cycling-prone geometry: many ties at the optimum vertex
        n = 4
        c = np.array([-0.75, 150.0, -0.02, 6.0])
        G = np.array([[0.25, -60.0, -1.0 / 25.0, 9.0],
                      [0.5, -90.0, -1.0 / 50.0, 3.0],
                      [0.0, 0.0, 1.0, 0.0]])
        g = np.array([0.0, 0.0, 1.0])
        A = np.hstack([G, np.eye(3)])
        res = solve_bounded_lp(np.concatenate([c, np.zeros(3)]), A, g,
                               np.concatenate([np.zeros(n), np.zeros(3)]),
                               np.full(n + 3, np.inf))
        assert res.status == "optimal"
        assert res.value == pytest.approx(-0.05, abs=1e-9)

    def test_qp_general_constraints_vs_cvxopt(self, rng):
        # PSD (possibly singular) objectives with general inequalities and
        # an optional equality row; values must match the reference IPM
        cvxopt = pytest.importorskip("cvxopt")
        from cvxopt import matrix, solvers
        solvers.options["show_progress"] = False
        solvers.options["abstol"] = 1e-11
        solvers.options["reltol"] = 1e-11
        from smcopt.subsolve.qp import solve_qp_active_set
        for trial in range(40):
            n = int(rng.integers(2, 7))
            r = int(rng.integers(1, n + 1))
            R = rng.normal(size=(r, n))
            P = R.T @ R
            a = rng.normal(size=n)
            m = int(rng.integers(1, 5))
            Gm = rng.normal(size=(m, n))
            x_f = rng.uniform(-0.5, 0.5, n)
            gm = Gm @ x_f + rng.uniform(0.05, 1.0, m)
            rows = np.vstack([Gm, np.eye(n), -np.eye(n)])
            rhs = np.concatenate([gm, np.full(n, 2.0), np.full(n, 2.0)])
            if trial % 2:
                E = rng.normal(size=(1, n))
                e = E @ x_f
                mine = solve_qp_active_set(P, a, np.vstack([E, rows]),
                                           np.concatenate([e, rhs]), x_f,
                                           n_eq=1)
                ref = solvers.qp(matrix(P), matrix(a), matrix(rows),
                                 matrix(rhs), matrix(E), matrix(e))
            else:
                mine = solve_qp_active_set(P, a, rows, rhs, x_f)
                ref = solvers.qp(matrix(P), matrix(a), matrix(rows),
                                 matrix(rhs))
            refv = float(ref["primal objective"])
            assert mine.value == pytest.approx(refv, abs=1e-6, rel=1e-6)

    def test_qp_with_equality_row(self):
        # min x^2 + y^2 subject to x + y = 1 -> (0.5, 0.5)
        from smcopt.subsolve.qp import solve_qp_active_set
        P = 2.0 * np.eye(2)
        rows = np.array([[1.0, 1.0]])
        res = solve_qp_active_set(P, np.zeros(2), rows, np.array([1.0]),
                                  np.array([1.0, 0.0]), n_eq=1)
        assert res.value == pytest.approx(0.5, abs=1e-10)
        np.testing.assert_allclose(res.x, [0.5, 0.5], atol=1e-9)

    def test_oa_with_quadratic_master(self):
        # min x^2 subject to (x - 2)^2 <= 1: optimum at x = 1, value 1
        from smcopt.subsolve.model import ModelBuilder
        from smcopt.subsolve.solve import solve_model
        b = ModelBuilder()
        x = b.declare_x(1)
        b.tighten_bounds(x, [-5.0], [5.0])
        b.add_quad(x, np.array([[2.0]]))
        shifted = Quadratic(np.array([[2.0]]), np.array([-4.0]), 4.0)
        b.add_atom_row(shifted, x, np.empty(0, dtype=int), np.empty(0), 1.0)
        res = solve_model(b.build())
        assert res.value == pytest.approx(1.0, abs=1e-6)
        assert res.x[0] == pytest.approx(1.0, abs=1e-4)

    def test_iteration_limit_surfaces(self):
        from smcopt.errors import IterationLimit
        from smcopt.subsolve import SolverConfig
        terms = [(1.0, Affine(np.array([1.0, -1.0]), 0.0)),
                 (1.0, NormAffine(1, np.eye(2), np.zeros(2)))]
        X = FeasibleSet.box(np.full(2, -3.0), np.full(2, 3.0))
        with pytest.raises(IterationLimit) as exc:
            solve_convex_terms(terms, X, SolverConfig(max_iters=1))
        assert exc.value.x is not None

    def test_ensure_nonempty_nonlinear_pieces(self):
        # disjoint 2-norm balls -> empty; overlapping -> fine
        far = FeasibleSet(2, (NormBall(2, np.zeros(2), 1.0, 2),
                              NormBall(2, np.array([5.0, 0.0]), 1.0, 2)))
        with pytest.raises(Infeasible):
            ensure_nonempty(far)
        near = FeasibleSet(2, (NormBall(2, np.zeros(2), 1.0, 2),
                               NormBall(2, np.array([1.0, 0.0]), 1.0, 2)))
        ensure_nonempty(near)

    def test_epigraph_link_inf_norm(self):
        # minimize t subject to ||(x1, x2)||_inf <= t at fixed offsets
        link = EpigraphLink(2, NormAffine(np.inf,
                                          np.array([[1.0, 0.0, 0.0],
                                                    [0.0, 1.0, 0.0]]),
                                          np.array([-1.0, 2.0])))
        X = FeasibleSet(3, (Box(np.full(3, -10.0), np.full(3, 10.0)), link))
        res = solve_convex_terms(
            [(1.0, Affine(np.array([0.0, 0.0, 1.0]), 0.0))], X)
        assert res.value == pytest.approx(0.0, abs=1e-9)
        assert res.x[0] == pytest.approx(1.0, abs=1e-9)
        assert res.x[1] == pytest.approx(-2.0, abs=1e-9)

    def test_norm2_ball_set_via_oa(self):
        # linear objective over a Euclidean ball solved by cutting planes
        X = FeasibleSet(2, (Box(np.full(2, -2.0), np.full(2, 2.0)),
                            NormBall(2, np.zeros(2), 1.0, 2)))
        res = solve_convex_terms(
            [(1.0, Affine(np.array([-3.0, -4.0]), 0.0))], X)
        assert res.value == pytest.approx(-5.0, abs=1e-6)

    def test_forced_engine_rejects_out_of_reach_models(self):
        from smcopt.subsolve import SolverConfig
        with pytest.raises(UnsupportedAtom):
            solve_convex_terms([(1.0, XSQ)], box1(-1, 1),
                               SolverConfig(method="lp"))
        ball = FeasibleSet(2, (NormBall(2, np.zeros(2), 1.0, 2),))
        with pytest.raises(UnsupportedAtom):
            solve_convex_terms([(1.0, Affine(np.array([1.0, 0.0]), 0.0))],
                               ball, SolverConfig(method="qp"))
        res = solve_convex_terms([(1.0, XSQ)], box1(-1, 1),
                                 SolverConfig(method="qp"))
        assert res.value == pytest.approx(0.0, abs=1e-12)
        res = solve_convex_terms([(1.0, ABS)], box1(-1, 2),
                                 SolverConfig(method="lp"))
        assert res.value == pytest.approx(0.0, abs=1e-12)
