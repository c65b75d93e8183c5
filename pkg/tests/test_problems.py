import itertools
import os

import numpy as np
import pytest

from smcopt import local
from smcopt.errors import BadDims
from smcopt.micp import solve_micp, build_global_model
from smcopt.problems import (
    RflSpec,
    clustering_constraints,
    coverage_weights_ok,
    fully_active,
    load_cities_csv,
    load_regression_csv,
    plr_build,
    plr_direct_loss,
    plr_feature_expand,
    plr_local_sbounds,
    plr_synthetic,
    rfl_build,
    rfl_direct_objective,
    rfl_local_sbounds,
    rfl_neighbourhood,
    rfl_synthetic,
)
from smcopt.smc import active_set, component_values, enumerate_global, objective
from smcopt.subsolve import solve_convex_terms
from smcopt.funcs import Affine

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "datasets")


class TestFullyActive:
    def test_component_values(self):
        p = fully_active(1, [2], 1, box=(np.array([-3.0]), np.array([3.0])))
        assert p.terms[0][0].value(np.array([0.0])) == 0.0
        assert p.terms[0][1].value(np.array([0.0])) == 1.0

    def test_unique_activity_on_cells(self, rng):
        p = fully_active(1, [2], 1, box=(np.array([-3.0]), np.array([3.0])))
        for _ in range(100):
            x = rng.uniform(-1 + 1e-6, -1e-6, 1)
            assert active_set(p, x, 0, 0.0) == (0,)
            x = rng.uniform(-2 + 1e-6, -1 - 1e-6, 1)
            assert active_set(p, x, 0, 0.0) == (1,)

    def test_midpoints_single_active(self):
        p = fully_active(2, [2, 3], 2)
        for sigma in itertools.product(range(2), range(3)):
            x = np.array([-(sigma[0] + 1) + 0.5, -(sigma[1] + 1) + 0.5])
            for s in range(2):
                assert active_set(p, x, s, 0.0) == (sigma[s],)

    def test_bad_dims(self):
        with pytest.raises(BadDims):
            fully_active(3, [2, 2, 2], 2)


class TestToyLibrary:
    def test_names(self, toys):
        assert set(toys) == {"quad_clips_2d", "two_clip_1d", "abs_min_three",
                             "valley_escape"}

    def test_quad_clips_global(self, toys):
        p = toys["quad_clips_2d"]
        x_star = np.array([-2.5, 0.0])
        # global value equals the active smooth/abs piece value there
        piece = 0.5 * (p.terms[0][1].value(x_star)
                       + p.terms[1][1].value(x_star))
        assert objective(p, x_star) == pytest.approx(piece, abs=1e-12)
        val, x, sigma = enumerate_global(p)
        assert val == pytest.approx(piece, abs=1e-9)
        np.testing.assert_allclose(x, x_star, atol=1e-6)
        assert sigma.sigma == (1, 1)

    def test_two_clip_zero(self, toys):
        assert objective(toys["two_clip_1d"], np.array([1.0])) == \
            pytest.approx(0.0, abs=1e-12)

    def test_abs_min_three_at_zero(self, toys):
        assert objective(toys["abs_min_three"], np.array([0.0])) == \
            pytest.approx(-0.125, abs=1e-15)


class TestPlr:
    def test_feature_expand_sizes(self):
        assert plr_feature_expand(np.zeros(6)).shape == (27,)
        assert plr_feature_expand(np.zeros(1)).shape == (2,)
        np.testing.assert_allclose(plr_feature_expand(np.array([2.0, 3.0])),
                                   [2, 3, 4, 6, 9])

    def test_index_maps(self):
        spec = plr_synthetic(N=3, p=2, B1=2, B2=5, seed=0)
        # component 6 (0-based; == 7 in 1-based counting) sits in block
        # (1, 1), i.e. the second block of each group
        assert spec.group1_index(6) == 1
        assert spec.group2_index(6) == 1

    def test_component_count(self):
        spec = plr_synthetic(N=2, p=2, B1=6, B2=5, seed=0)
        assert spec.n_bar == 30
        assert plr_build(spec).sizes == (30, 30)

    def test_identity_against_direct_loss(self, rng):
        spec = plr_synthetic(N=12, p=4, B1=2, B2=3, seed=5)
        p = plr_build(spec)
        for _ in range(100):
            x = rng.uniform(-3, 3, p.d)
            assert objective(p, x) == pytest.approx(
                plr_direct_loss(spec, x), abs=1e-9)

    def test_local_bounds_formula(self):
        spec = plr_synthetic(N=4, p=3, B1=2, B2=2, seed=2)
        x_hat = np.linspace(-1, 1, spec.d)
        R = 0.1
        duals = np.array([float(np.abs(spec.beta[s]).max())
                          for s in range(spec.N)])  # inf-norm duals of 1-balls
        b = plr_local_sbounds(spec, x_hat, R, duals)
        p = plr_build(spec)
        for s in range(spec.N):
            assert np.abs(np.diag(b.values[s])).max() == 0.0
            vals = component_values(p, x_hat, s)
            lp, l = 0, 3  # blocks differ in both groups
            expect = vals[lp] - vals[l] + 2 * 2 * R * duals[s]
            assert b.values[s][lp, l] == pytest.approx(max(expect, 0.0))

    def test_local_bounds_validity_sampling(self, rng):
        spec = plr_synthetic(N=3, p=2, B1=2, B2=2, seed=9)
        p = plr_build(spec)
        x_hat = rng.uniform(-1, 1, spec.d)
        R = 0.2
        duals = np.array([float(np.abs(spec.beta[s]).max())
                          for s in range(spec.N)])
        b = plr_local_sbounds(spec, x_hat, R, duals)
        blocks = spec.B1 + spec.B2
        for _ in range(2000):
            u = x_hat.copy()
            for blk in range(blocks):
                step = rng.normal(size=spec.p)
                step = step / np.abs(step).sum() * rng.uniform(0, R)
                u[blk * spec.p:(blk + 1) * spec.p] += step  # 1-norm ball move
            for s in range(spec.N):
                vals = component_values(p, u, s)
                for l in np.nonzero(vals <= vals.min() + 1e-9)[0]:
                    gaps = vals - vals[l]
                    assert (gaps <= b.values[s][:, l] + 1e-9).all()

    def test_csv_loader(self):
        gamma, raw = load_regression_csv(
            os.path.join(DATA_DIR, "regression_demo.csv"))
        assert gamma.shape[0] == raw.shape[0] == 30
        assert raw.shape[1] == 3


class TestRfl:
    def test_zero_penalty_constant_main(self):
        spec = rfl_synthetic(N=4, B=2, seed=0, Lam=0.0)
        p = rfl_build(spec)
        assert p.hbar.value(np.zeros(p.d)) == 0.0

    def test_single_store_at_city(self):
        spec = RflSpec(np.array([5.0]), np.zeros((1, 2)), B=1)
        p = rfl_build(spec)
        z = np.zeros(p.d)
        z[0] = 1.0  # radius covers the hub-store gap
        assert objective(p, z) == pytest.approx(0.0, abs=1e-12)

    def test_direct_objective_matches(self, rng):
        spec = rfl_synthetic(N=6, B=2, seed=3, Lam=10.0, R_ref=0.5)
        p = rfl_build(spec)
        for _ in range(100):
            z = rng.uniform(-2, 2, p.d)
            z[0] = abs(z[0]) + 2.0
            assert objective(p, z) == pytest.approx(
                rfl_direct_objective(spec, z), abs=1e-9)

    def test_csv_loader_counts_cities(self):
        pop, beta = load_cities_csv(os.path.join(DATA_DIR, "cities_demo.csv"))
        assert pop.shape == (15,) and beta.shape == (15, 2)
        p = rfl_build(RflSpec(pop, beta, B=3))
        assert p.N == 15

    def test_local_bounds_closed_form(self):
        spec = RflSpec(np.array([3.0, 7.0]),
                       np.array([[1.0, 1.0], [-1.0, 0.5]]), B=2)
        x_hat = np.zeros(spec.d)
        x_hat[3:5] = spec.beta[0]   # both stores sit on city 0
        x_hat[5:7] = spec.beta[0]
        R_inf = 0.2
        b = rfl_local_sbounds(spec, x_hat, R_inf)
        pbar = spec.total_population
        # expanded norm is 2 R_inf (sign(0) = +1), shrunken one vanishes
        w0 = spec.N * 3.0 / pbar
        assert b.values[0][1, 0] == pytest.approx(w0 * 2 * R_inf)
        assert b.values[0][0, 1] == pytest.approx(w0 * 2 * R_inf)
        assert np.abs(np.diag(b.values[0])).max() == 0.0

    def test_local_bounds_validity_sampling(self, rng):
        spec = rfl_synthetic(N=4, B=2, seed=11)
        p = rfl_build(spec)
        x_hat = np.array([2.0, 0.1, -0.2, 0.5, 0.4, -0.6, 0.3])
        R_inf = 0.2
        b = rfl_local_sbounds(spec, x_hat, R_inf)
        for _ in range(2000):
            u = x_hat + rng.uniform(-R_inf, R_inf, spec.d)
            for s in range(spec.N):
                vals = component_values(p, u, s)
                for l in np.nonzero(vals <= vals.min() + 1e-9)[0]:
                    gaps = vals - vals[l]
                    assert (gaps <= b.values[s][:, l] + 1e-9).all()

    def test_neighbourhood_contains_anchor(self):
        spec = rfl_synthetic(N=3, B=1, seed=2)
        x_hat = np.array([1.0, 0.0, 0.0, 0.1, -0.1])
        S = rfl_neighbourhood(spec, x_hat, 0.3)
        assert S.contains(x_hat)


class TestClusteringConstraints:
    def test_order_no_pairs_for_single_store(self):
        spec = rfl_synthetic(N=3, B=1, seed=0)
        pieces = clustering_constraints(spec, "order")
        assert pieces[0].G.shape[0] == 0

    def test_order_zero_separation_admits_equal_means(self):
        spec = rfl_synthetic(N=3, B=2, seed=0)
        pieces = clustering_constraints(spec, "order", delta_bar=0.0)
        z = np.zeros(spec.d)
        z[0] = 1.0
        assert pieces[0].contains(z)  # identical stores pass at delta = 0

    def test_order_positive_separation_cuts_equal_means(self):
        spec = rfl_synthetic(N=3, B=2, seed=0)
        pieces = clustering_constraints(spec, "order", delta_bar=0.5)
        z = np.zeros(spec.d)
        z[0] = 1.0
        assert not pieces[0].contains(z)

    def test_hull_keeps_stores_inside(self):
        spec = RflSpec(np.array([1.0, 1.0, 1.0]),
                       np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), B=1)
        p = rfl_build(spec)
        X = p.X.intersect(*clustering_constraints(spec, "hull"))
        # push store 0 toward (+inf, +inf); the hull caps it at (1, 0)/(0, 1)
        cost = np.zeros(p.d)
        cost[3:5] = -1.0
        res = solve_convex_terms([(1.0, Affine(cost, 0.0))], X)
        assert res.value == pytest.approx(-1.0, abs=1e-9)

    def test_coverage_rows_and_weight_check(self):
        spec = rfl_synthetic(N=2, B=2, seed=0)
        adds = clustering_constraints(spec, "coverage")
        assert len(adds.t_rows) == 2
        coefs, rhs, sense = adds.t_rows[0]
        assert rhs == -1.0 and sense == "<=" and len(coefs) == spec.N
        assert coverage_weights_ok((np.array([0.5, 0.5]),
                                    np.array([0.5, 0.5])), 2)
        assert not coverage_weights_ok((np.array([1.0, 0.0]),
                                        np.array([1.0, 0.0])), 2)

    def test_coverage_in_micp(self):
        # two cities, two stores: coverage forces one store per city
        spec = RflSpec(np.array([1.0, 1.0]),
                       np.array([[-1.0, 0.0], [1.0, 0.0]]), B=2)
        p = rfl_build(spec)
        bounds = rfl_local_sbounds(spec, np.zeros(spec.d), 2.0)
        S = rfl_neighbourhood(spec, np.zeros(spec.d), 2.0)
        reduced = p
        model = build_global_model(reduced, bounds, 1.0)
        model = model.with_additions(clustering_constraints(spec, "coverage"))
        # replace the feasible set with the bounded neighbourhood so the
        # bounds stay valid
        from dataclasses import replace
        from smcopt.smc import SmcProblem
        p_box = SmcProblem(p.hbar, p.terms, S)
        model = replace(model, problem=p_box)
        res = solve_micp(model)
        assert res.status == "optimal"
        assert set(res.assignment) == {0, 1}


def test_generated_instances_pass_invariants(rng):
    spec = plr_synthetic(N=6, p=3, B1=2, B2=2, seed=4)
    p = plr_build(spec)
    assert p.N == 6 and p.sizes == (4,) * 6
    rspec = rfl_synthetic(N=5, B=2, seed=4)
    rp = rfl_build(rspec)
    assert rp.N == 5 and rp.d == 7
