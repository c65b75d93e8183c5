"""Primal active-set method for dense convex QPs.

Solves  min 0.5 x'Px + c'x  s.t.  G x <= g,  E x = e  with P symmetric PSD
(possibly singular).  Steps are computed in the null space of the working
set; when the reduced Hessian is singular along a descent direction the
method rides the resulting ray to the nearest blocking constraint.  All
tie-breaks are smallest-index, so the iteration is deterministic.

Also provides a ball-constrained convex QP solve (dual bisection), used by
the trust-region style bound computations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import IterationLimit, Unbounded

EIG_TOL = 1e-11
MULT_TOL = 1e-9
STEP_TOL = 1e-12
ACTIVE_TOL = 1e-9


@dataclass
class QpResult:
    x: np.ndarray
    value: float
    status: str
    iterations: int


def _independent_active_rows(G, active):
    """Greedy smallest-index subset of active rows with independent normals."""
    keep = []
    basisT = np.zeros((G.shape[1], 0))
    for i in active:
        cand = np.column_stack([basisT, G[i]])
        if np.linalg.matrix_rank(cand, tol=1e-10) > basisT.shape[1]:
            keep.append(i)
            basisT = cand
        if basisT.shape[1] == G.shape[1]:
            break
    return keep


def solve_qp_active_set(P, c, G, g, x0, n_eq=0, max_iters=None) -> QpResult:
    """Minimize from the feasible point x0.

    The first ``n_eq`` rows of (G, g) are equalities and stay in the working
    set forever; the rest are inequalities G x <= g.
    """
    P = np.asarray(P, dtype=float)
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    g = np.asarray(g, dtype=float)
    n = c.shape[0]
    m = G.shape[0]
    x = np.asarray(x0, dtype=float).copy()
    if max_iters is None:
        max_iters = 100 * (n + m + 1)

    slack = g - G @ x
    active = [i for i in range(n_eq)]
    active += _independent_active_rows(
        G, [i for i in range(n_eq, m) if slack[i] <= ACTIVE_TOL])

    for it in range(1, max_iters + 1):
        grad = P @ x + c
        W = sorted(active)
        GW = G[W] if W else np.zeros((0, n))

        # null-space step
        if GW.shape[0]:
            _, sv, Vt = np.linalg.svd(GW)
            rank = int((sv > 1e-10 * max(1.0, sv[0] if sv.size else 1.0)).sum())
            Z = Vt[rank:].T
        else:
            Z = np.eye(n)

        p = np.zeros(n)
        ray = False
        if Z.shape[1]:
            H = Z.T @ P @ Z
            rhs = -(Z.T @ grad)
            w, V = np.linalg.eigh(H)
            scale = max(1.0, float(np.abs(w).max()) if w.size else 1.0)
            pos = w > EIG_TOL * scale
            rhs_v = V.T @ rhs
            null_part = rhs_v.copy()
            null_part[pos] = 0.0
            if np.linalg.norm(null_part) > 1e-9 * max(1.0, np.linalg.norm(rhs)):
                # descent ray along a zero-curvature direction
                y = V @ (null_part / max(np.linalg.norm(null_part), 1e-300))
                p = Z @ y
                ray = True
            else:
                y = np.zeros_like(rhs_v)
                y[pos] = rhs_v[pos] / w[pos]
                p = Z @ (V @ y)

        if not ray and np.linalg.norm(p) <= STEP_TOL * (1.0 + np.linalg.norm(x)):
            # multipliers for the working set
            if W:
                lam, *_ = np.linalg.lstsq(GW.T, -grad, rcond=None)
                ineq = [(lam[j], W[j]) for j in range(len(W)) if W[j] >= n_eq]
                if not ineq or min(l for l, _ in ineq) >= -MULT_TOL:
                    return QpResult(x, _qpval(P, c, x), "optimal", it)
                # drop the most negative multiplier, smallest index on ties
                drop = min(ineq, key=lambda t: (t[0], t[1]))[1]
                active.remove(drop)
                continue
            return QpResult(x, _qpval(P, c, x), "optimal", it)

        # ratio test against inactive inequalities
        Gp = G @ p
        alpha = 1.0 if not ray else np.inf
        blocker = -1
        for i in range(n_eq, m):
            if i in active or Gp[i] <= 1e-12:
                continue
            a_i = (g[i] - G[i] @ x) / Gp[i]
            if a_i < alpha - 1e-14:
                alpha = max(a_i, 0.0)
                blocker = i
        if not np.isfinite(alpha):
            raise Unbounded("QP objective unbounded below on the feasible set")
        x = x + alpha * p
        if blocker >= 0 and (ray or alpha < 1.0 - 1e-14):
            active.append(blocker)

    raise IterationLimit("active-set QP hit its iteration cap",
                         x=x, value=_qpval(P, c, x))


def _qpval(P, c, x):
    return float(0.5 * x @ (P @ x) + c @ x)


def solve_ball_qp(P, c, radius, tol=1e-12, max_bisect=200):
    """min 0.5 x'Px + c'x over the Euclidean ball ||x|| <= radius, P PSD.

    Dual approach: x(mu) = -(P + mu I)^-1 c with mu >= 0 chosen by bisection
    on ||x(mu)|| = radius when the unconstrained minimum falls outside.
    """
    P = np.asarray(P, dtype=float)
    c = np.asarray(c, dtype=float)
    w, V = np.linalg.eigh(P)
    w = np.maximum(w, 0.0)
    cv = V.T @ c

    def x_of(mu):
        denom = w + mu
        safe = np.where(denom > 0, denom, np.inf)
        return V @ (-cv / safe)

    x = x_of(0.0)
    if np.linalg.norm(x) <= radius * (1 + 1e-12) and np.isfinite(x).all():
        if np.linalg.norm(x) <= radius:
            return x, _qpval(P, c, x)
    lo_mu, hi_mu = 0.0, 1.0
    while np.linalg.norm(x_of(hi_mu)) > radius and hi_mu < 1e16:
        hi_mu *= 2.0
    for _ in range(max_bisect):
        mid = 0.5 * (lo_mu + hi_mu)
        if np.linalg.norm(x_of(mid)) > radius:
            lo_mu = mid
        else:
            hi_mu = mid
        if hi_mu - lo_mu <= tol * max(1.0, hi_mu):
            break
    x = x_of(hi_mu)
    nrm = np.linalg.norm(x)
    if nrm > 0:
        x = x * min(1.0, radius / nrm)
    return x, _qpval(P, c, x)
