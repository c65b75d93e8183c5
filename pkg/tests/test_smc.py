import itertools

import numpy as np
import pytest

from smcopt.errors import CapExceeded, DimensionMismatch
from smcopt.funcs import Const, Quadratic
from smcopt.problems import fully_active
from smcopt.smc import (
    SmcProblem,
    Selection,
    active_set,
    component_values,
    degeneracy,
    enumerate_global,
    objective,
    piece_objective,
    piece_value,
)
from smcopt.subsolve import FeasibleSet


class TestObjective:
    def test_two_clip_values(self, toys):
        p = toys["two_clip_1d"]
        for pt in (0.0, 0.5, 1.0):
            assert objective(p, np.array([pt])) == pytest.approx(0.0, abs=1e-12)

    def test_fully_active_single_term(self):
        p = fully_active(1, [2], 1, box=(np.array([-3.0]), np.array([3.0])))
        # min{1*(-1.5), 2*(-1.5) + 1} = -2
        assert objective(p, np.array([-1.5])) == pytest.approx(-2.0)
        np.testing.assert_allclose(component_values(p, np.array([-1.5]), 0),
                                   [-1.5, -2.0])

    def test_component_values_match_objective(self, toys, rng):
        p = toys["abs_min_three"]
        for _ in range(20):
            x = rng.uniform(-2, 2, 1)
            vals = component_values(p, x, 0)
            assert objective(p, x) == pytest.approx(
                p.hbar.value(x) + vals.min())


class TestActiveSets:
    def test_rho_one_full(self, toys, rng):
        p = toys["abs_min_three"]
        for _ in range(10):
            x = rng.uniform(-2, 2, 1)
            assert active_set(p, x, 0, 1.0) == (0, 1, 2)

    def test_two_clip_at_zero(self, toys):
        p = toys["two_clip_1d"]
        # term 0 values (1, 0.5): only the clip is active
        assert active_set(p, np.array([0.0]), 0, 0.0) == (1,)

    def test_three_piece_tie(self, toys):
        p = toys["abs_min_three"]
        # at -1/16 the two affine pieces tie at -3/16 and the square sits above
        assert active_set(p, np.array([-1.0 / 16]), 0, 0.0) == (0, 2)

    def test_all_equal_components_all_active(self):
        p = SmcProblem(Const(0.0, 1),
                       ((Const(1.0, 1), Const(1.0, 1)),),
                       FeasibleSet.box([-1.0], [1.0]))
        assert active_set(p, np.array([0.0]), 0, 0.0) == (0, 1)

    def test_rho_bounds(self, toys):
        with pytest.raises(ValueError):
            active_set(toys["abs_min_three"], np.array([0.0]), 0, 1.5)

    def test_stability_under_perturbation(self, toys, rng):
        # nearby active sets embed into rho-active sets at the anchor
        p = toys["abs_min_three"]
        lip = 8.0  # generous Lipschitz bound for all components on [-2, 2]
        r = 1e-6
        for _ in range(200):
            x_hat = rng.uniform(-2, 2, 1)
            x = np.clip(x_hat + rng.uniform(-r, r, 1), -2, 2)
            vals = component_values(p, x_hat, 0)
            gap = float(vals.max() - vals.min())
            rho = 1.0 if gap <= 0 else min(1.0, (2 * lip * r + 1e-9) / gap)
            inner = set(active_set(p, x, 0, 0.0))
            outer = set(active_set(p, x_hat, 0, rho))
            assert inner <= outer


class TestDegeneracy:
    def test_all_singletons(self, toys):
        p = toys["two_clip_1d"]
        deg, factor = degeneracy(p, np.array([0.0]), 0.0)
        assert deg == () and factor == 1

    def test_tied_term(self, toys):
        p = toys["abs_min_three"]
        deg, factor = degeneracy(p, np.array([-1.0 / 16]), 0.0)
        assert deg == (0,) and factor == 2

    def test_two_tied_terms_factor_four(self):
        p = SmcProblem(Const(0.0, 1),
                       ((Const(1.0, 1), Const(1.0, 1)),
                        (Const(2.0, 1), Const(2.0, 1))),
                       FeasibleSet.box([-1.0], [1.0]))
        deg, factor = degeneracy(p, np.array([0.0]), 0.0)
        assert deg == (0, 1) and factor == 4


class TestPieces:
    def test_piece_values(self, toys):
        p = toys["abs_min_three"]
        val, x = piece_value(p, Selection((2,)))
        assert val == pytest.approx(-33.0 / 16, abs=1e-12)
        assert x[0] == pytest.approx(-2.0, abs=1e-9)
        val, x = piece_value(p, Selection((1,)))
        assert val == pytest.approx(0.0, abs=1e-12)
        assert x[0] == pytest.approx(0.0, abs=1e-9)
        val, _ = piece_value(p, Selection((0,)))
        assert val == pytest.approx(-0.125, abs=1e-12)

    def test_selection_validation(self, toys):
        with pytest.raises(DimensionMismatch):
            piece_value(toys["abs_min_three"], Selection((3,)))
        with pytest.raises(DimensionMismatch):
            piece_value(toys["two_clip_1d"], Selection((0,)))


class TestEnumeration:
    def test_three_piece_instance(self, toys):
        val, x, sigma = enumerate_global(toys["abs_min_three"])
        assert val == pytest.approx(-33.0 / 16, abs=1e-12)
        assert x[0] == pytest.approx(-2.0, abs=1e-9)
        assert sigma.sigma == (2,)

    def test_two_clip(self, toys):
        val, _, _ = enumerate_global(toys["two_clip_1d"])
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_fully_active_vs_grid(self):
        hbar = Quadratic(np.eye(2), np.zeros(2), 0.0)  # ||x||^2 / 2
        p = fully_active(2, [2, 3], 2, hbar=hbar,
                         box=(np.full(2, -4.0), np.full(2, 1.0)))
        val, x, _ = enumerate_global(p)
        axis = np.arange(-4.0, 1.0 + 1e-12, 0.01)
        best = np.inf
        for a in axis:
            va = min(1 * a + 0, 2 * a + 1)
            for b in axis:
                vb = min(1 * b + 0, 2 * b + 1, 3 * b + 3)
                best = min(best, 0.5 * (a * a + b * b) + 0.5 * (va + vb))
        assert val == pytest.approx(best, abs=1e-4)

    def test_cap(self, toys):
        with pytest.raises(CapExceeded):
            enumerate_global(toys["two_clip_1d"], cap=3)

    def test_lower_bounds_objective_samples(self, toys, rng):
        for name in ("abs_min_three", "two_clip_1d", "valley_escape"):
            p = toys[name]
            val, _, _ = enumerate_global(p)
            lo, hi = p.X.bounding_box()
            for _ in range(200):
                x = rng.uniform(lo, hi)
                assert val <= objective(p, x) + 1e-12


def test_objective_is_min_over_pieces(toys, rng):
    for name in ("abs_min_three", "two_clip_1d", "quad_clips_2d"):
        p = toys[name]
        lo, hi = p.X.bounding_box()
        for _ in range(1000):
            x = rng.uniform(lo, hi)
            piece_min = min(
                piece_objective(p, Selection(sig), x)
                for sig in itertools.product(*(range(n) for n in p.sizes)))
            assert objective(p, x) == pytest.approx(piece_min, abs=1e-9)


def test_json_round_trip(toys, rng):
    p = toys["quad_clips_2d"]
    q = SmcProblem.from_json(p.to_json())
    for _ in range(20):
        x = rng.uniform(-10, 10, 2)
        assert objective(q, x) == pytest.approx(objective(p, x), abs=1e-12)


def test_invalid_construction():
    with pytest.raises(ValueError):
        SmcProblem(Const(0.0, 1), (), FeasibleSet.box([-1.0], [1.0]))
    with pytest.raises(DimensionMismatch):
        SmcProblem(Const(0.0, 2), ((Const(0.0, 1),),),
                   FeasibleSet.box([-1.0], [1.0]))
