"""Projected-subgradient fallback for atom mixes outside LP/QP reach.

Uses Polyak steps when a lower bound on the optimal value is known and a
diminishing target gap otherwise.  The feasible set is handled by Dykstra's
alternating projections over the set pieces, so only piecewise-projectable
sets (boxes, norm balls, halfspaces) are supported here; anything richer
should go through the model lowering instead.
"""

from __future__ import annotations

import numpy as np

from ..errors import UnsupportedAtom
from .sets import Box, FeasibleSet, Halfspaces, NormBall

DYKSTRA_ITERS = 200
DYKSTRA_TOL = 1e-12


def _piece_projectors(X: FeasibleSet):
    projs = []
    for piece in X.pieces:
        if isinstance(piece, (Box, NormBall)):
            projs.append(piece.project)
        elif isinstance(piece, Halfspaces):
            for i in range(piece.G.shape[0]):
                projs.append(lambda x, p=piece, j=i: p.project_row(x, j))
        else:
            raise UnsupportedAtom(
                f"{type(piece).__name__} has no cheap projection; "
                "use the model route")
    return projs


def project_feasible(X: FeasibleSet, v) -> np.ndarray:
    """Euclidean projection onto the intersection of pieces via Dykstra."""
    projs = _piece_projectors(X)
    x = np.asarray(v, dtype=float).copy()
    if not projs:
        return x
    if len(projs) == 1:
        return projs[0](x)
    incr = [np.zeros_like(x) for _ in projs]
    for _ in range(DYKSTRA_ITERS):
        x_prev = x.copy()
        for i, proj in enumerate(projs):
            y = proj(x + incr[i])
            incr[i] = x + incr[i] - y
            x = y
        if np.linalg.norm(x - x_prev) <= DYKSTRA_TOL * (1.0 + np.linalg.norm(x)):
            break
    return x


ELLIPSOID_DIM_CAP = 16


def _separation(X: FeasibleSet, x, tol=1e-12):
    """A subgradient of a violated piece constraint, or None if feasible."""
    for piece in X.pieces:
        if isinstance(piece, Box):
            over = x - piece.hi
            j = int(np.argmax(over))
            if over[j] > tol:
                g = np.zeros(x.size)
                g[j] = 1.0
                return g
            under = piece.lo - x
            j = int(np.argmax(under))
            if under[j] > tol:
                g = np.zeros(x.size)
                g[j] = -1.0
                return g
        elif isinstance(piece, NormBall):
            v = x[piece.idx] - piece.center
            if np.linalg.norm(v, ord=piece.p) > piece.radius + tol:
                g = np.zeros(x.size)
                if piece.p == 2.0:
                    gs = v / max(np.linalg.norm(v), 1e-300)
                elif piece.p == 1.0:
                    gs = np.where(v >= 0, 1.0, -1.0)
                else:
                    gs = np.zeros(v.size)
                    j = int(np.argmax(np.abs(v)))
                    gs[j] = 1.0 if v[j] >= 0 else -1.0
                g[piece.idx] = gs
                return g
        elif isinstance(piece, Halfspaces):
            resid = piece.G @ x - piece.g
            i = int(np.argmax(resid))
            if resid[i] > tol:
                return piece.G[i].copy()
    return None


def _ellipsoid_minimize(value_fn, subgrad_fn, X, center, radius, f_best,
                        x_best, max_iters=20000):
    """Deterministic ellipsoid refinement; needs the minimizer inside the
    starting ball.  Infeasible centers are cut by piece separation."""
    n = center.size
    if n == 1:
        a, b = center[0] - radius, center[0] + radius
        lo, hi = X.bounding_box()
        a, b = max(a, lo[0]), min(b, hi[0])
        for _ in range(200):
            mid = np.array([(a + b) / 2.0])
            fv = value_fn(mid)
            if fv < f_best:
                f_best, x_best = fv, mid.copy()
            if subgrad_fn(mid)[0] > 0:
                b = mid[0]
            else:
                a = mid[0]
        return x_best, f_best
    x = center.copy()
    H = radius * radius * np.eye(n)
    scale = n * n / (n * n - 1.0)
    for _ in range(max_iters):
        g = _separation(X, x)
        if g is None:
            fv = value_fn(x)
            if fv < f_best:
                f_best, x_best = fv, x.copy()
            g = subgrad_fn(x)
        Hg = H @ g
        denom = float(g @ Hg)
        if denom <= 1e-300:
            break
        root = np.sqrt(denom)
        x = x - Hg / ((n + 1.0) * root)
        H = scale * (H - (2.0 / (n + 1.0)) * np.outer(Hg, Hg) / denom)
        if float(np.trace(H)) <= 1e-24:
            break
    return x_best, f_best


def solve_subgradient(value_fn, subgrad_fn, X: FeasibleSet, x0=None,
                      lower_bound=None, max_iters=100000, tol=1e-9):
    """Minimize a convex function over X; returns (x_best, f_best, status).

    With ``lower_bound`` given, uses the Polyak step (f(x) - lb) / ||g||^2
    and stops once f(x) <= lb + tol.  Otherwise targets a diminishing gap
    gamma_k = gamma_0 / sqrt(k) added to the running best value.  In small
    dimension an ellipsoid pass polishes whatever Polyak leaves behind.
    """
    if x0 is None:
        lo, hi = X.bounding_box()
        mid = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), 0.0)
        x0 = mid
    x = project_feasible(X, np.asarray(x0, dtype=float))
    f_best = value_fn(x)
    x_best = x.copy()
    gamma0 = max(1.0, abs(f_best)) * 0.1
    status = "iteration_limit"
    relax = 1.0
    since_improve = 0
    for k in range(1, max_iters + 1):
        fx = value_fn(x)
        if fx < f_best - 1e-15:
            f_best = fx
            x_best = x.copy()
            since_improve = 0
        else:
            since_improve += 1
        if lower_bound is not None and f_best <= lower_bound + tol:
            status = "optimal"
            break
        if since_improve >= 400:
            # zig-zag stall: restart from the incumbent with damped steps
            x = x_best.copy()
            relax *= 0.5
            since_improve = 0
            if relax < 1e-12:
                break
            continue
        g = subgrad_fn(x)
        gg = float(g @ g)
        if gg <= 1e-300:
            status = "optimal"
            break
        if lower_bound is not None:
            step = relax * (fx - lower_bound) / gg
        else:
            target = f_best - gamma0 / np.sqrt(k)
            step = max(fx - target, 0.0) / gg
        x = project_feasible(X, x - step * g)

    if status != "optimal" and x_best.size <= ELLIPSOID_DIM_CAP:
        lo, hi = X.bounding_box()
        finite = np.isfinite(lo) & np.isfinite(hi)
        center = np.where(finite, 0.5 * (lo + hi), x_best)
        spans = np.where(finite, hi - lo, 4.0 * (1.0 + np.abs(x_best)))
        radius = float(np.linalg.norm(spans))
        x_best, f_best = _ellipsoid_minimize(
            value_fn, subgrad_fn, X, center, radius, f_best, x_best)
        if lower_bound is not None and f_best <= lower_bound + tol:
            status = "optimal"
    return x_best, float(f_best), status
