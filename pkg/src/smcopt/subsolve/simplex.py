"""Dense bounded-variable revised simplex with deterministic pivoting.

Solves  min c'x  s.t.  A x = b,  lo <= x <= hi  (entries may be +-inf).

Two phases: artificial variables absorb the initial residual and their sum
is driven to zero, then the true cost is minimized from the feasible basis.
Pivot selection is Dantzig pricing with smallest-index tie-breaks, switching
to Bland's rule after a stall threshold so termination is guaranteed; every
choice is a deterministic function of the input, which downstream layers
rely on for bit-reproducible runs.

The basis inverse is kept explicitly and updated by elementary row
operations, with periodic refactorization for numerical hygiene.  This is
adequate for the desk scale (a few hundred rows) this package targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BASIC, AT_LO, AT_UP, FREE = 0, 1, 2, 3

REFACTOR_EVERY = 100
PIVOT_TOL = 1e-10
RATIO_TIE_TOL = 1e-12
FEAS_TOL = 1e-8


@dataclass
class LpResult:
    x: np.ndarray
    value: float
    status: str  # optimal | infeasible | unbounded | iteration_limit
    iterations: int
    basis: np.ndarray | None = None


class _Tableau:
    def __init__(self, A, b, lo, hi):
        self.A = A
        self.b = b
        self.lo = lo
        self.hi = hi
        self.m, self.n = A.shape
        self.basis = None
        self.vstat = None
        self.x = None
        self.Binv = None
        self.since_refactor = 0

    def refactor(self):
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            self.Binv = np.linalg.pinv(B)
        self.since_refactor = 0
        self.recompute_basics()

    def recompute_basics(self):
        xn = self.x.copy()
        xn[self.basis] = 0.0
        self.x[self.basis] = self.Binv @ (self.b - self.A @ xn)


def _entering(d, vstat, movable, tol, bland):
    viol = np.zeros_like(d)
    mask_lo = movable & (vstat == AT_LO) & (d < -tol)
    mask_up = movable & (vstat == AT_UP) & (d > tol)
    mask_fr = (vstat == FREE) & (np.abs(d) > tol)
    viol[mask_lo] = -d[mask_lo]
    viol[mask_up] = d[mask_up]
    viol[mask_fr] = np.abs(d[mask_fr])
    if not viol.any():
        return -1
    if bland:
        return int(np.nonzero(viol > 0)[0][0])
    return int(np.argmax(viol))


def _simplex_loop(t: _Tableau, c, max_iters, bland_after, dual_tol):
    """Iterate to optimality for cost c from the current basis. Returns status."""
    iters = 0
    movable = t.hi - t.lo > 0  # fixed columns can never usefully enter
    while True:
        iters += 1
        if iters > max_iters:
            return "iteration_limit", iters
        y = c[t.basis] @ t.Binv
        d = c - y @ t.A
        d[t.basis] = 0.0
        e = _entering(d, t.vstat, movable, dual_tol, bland=iters > bland_after)
        if e < 0:
            return "optimal", iters
        direction = 1.0 if (t.vstat[e] == AT_LO or d[e] < 0) else -1.0
        col = t.Binv @ t.A[:, e]
        coef = direction * col

        gap_e = t.hi[e] - t.lo[e]
        step = gap_e if np.isfinite(gap_e) else np.inf
        xb = t.x[t.basis]
        ratios = np.full(t.m, np.inf)
        pos = coef > PIVOT_TOL
        neg = coef < -PIVOT_TOL
        lo_b = t.lo[t.basis]
        hi_b = t.hi[t.basis]
        ok = pos & np.isfinite(lo_b)
        ratios[ok] = (xb[ok] - lo_b[ok]) / coef[ok]
        ok = neg & np.isfinite(hi_b)
        ratios[ok] = (xb[ok] - hi_b[ok]) / coef[ok]
        ratios = np.maximum(ratios, 0.0)
        rmin = float(ratios.min()) if t.m else np.inf
        blocking = -1
        if rmin < step:
            step = rmin
            elig = np.nonzero(ratios <= rmin + RATIO_TIE_TOL)[0]
            blocking = int(elig[np.argmin(t.basis[elig])])
        if not np.isfinite(step):
            return "unbounded", iters

        if step > 0.0:
            t.x[t.basis] = xb - coef * step
            t.x[e] += direction * step
        if blocking < 0:
            t.vstat[e] = AT_UP if t.vstat[e] == AT_LO else AT_LO
        else:
            leave = t.basis[blocking]
            hit_lower = coef[blocking] > 0
            t.x[leave] = t.lo[leave] if hit_lower else t.hi[leave]
            t.vstat[leave] = AT_LO if hit_lower else AT_UP
            t.basis[blocking] = e
            t.vstat[e] = BASIC
            pivot = col[blocking]
            if abs(pivot) < PIVOT_TOL:
                t.refactor()
            else:
                row = t.Binv[blocking] / pivot
                t.Binv -= np.outer(col, row)
                t.Binv[blocking] = row
            t.since_refactor += 1
            if t.since_refactor >= REFACTOR_EVERY:
                t.refactor()


class WarmLp:
    """Bounded-variable simplex with reusable state.

    Holds the constraint data ``A x = b, lo <= x <= hi`` fixed and solves a
    sequence of costs; the first solve runs both phases, later solves restart
    from the previous optimal basis, which stays primal feasible because the
    constraints never change.  The whole state evolution is a deterministic
    function of the cost sequence.

    Artificial variables are created for every row, but rows whose slack
    column can absorb the initial residual start with that slack basic, so
    phase 1 only has to drive out the genuinely violated rows.
    """

    def __init__(self, A, b, lo, hi, slack_cols=None, max_iters=200000):
        self.A0 = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.lo0 = np.asarray(lo, dtype=float)
        self.hi0 = np.asarray(hi, dtype=float)
        self.m, self.n = self.A0.shape
        self.max_iters = max_iters
        self.slack_cols = slack_cols
        self.t = None
        self.feasible = None

    def _start(self):
        m, n = self.m, self.n
        lo, hi = self.lo0, self.hi0
        x0 = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        vstat0 = np.where(np.isfinite(lo), AT_LO,
                          np.where(np.isfinite(hi), AT_UP, FREE)).astype(int)
        resid = self.b - self.A0 @ x0
        sign = np.where(resid >= 0, 1.0, -1.0)
        A1 = np.hstack([self.A0, np.diag(sign)]) if m else self.A0.copy()
        t = _Tableau(A1, self.b,
                     np.concatenate([lo, np.zeros(m)]),
                     np.concatenate([hi, np.full(m, np.inf)]))
        t.x = np.concatenate([x0, np.zeros(m)])
        t.vstat = np.concatenate([vstat0, np.full(m, AT_LO, dtype=int)])
        basis = np.empty(m, dtype=int)
        for i in range(m):
            j = self.slack_cols[i] if self.slack_cols is not None else -1
            use_slack = False
            if j >= 0 and t.vstat[j] != BASIC:
                val = x0[j] + resid[i] * (1.0 if self.A0[i, j] > 0 else -1.0) \
                    if abs(self.A0[i, j]) == 1.0 else None
                if val is not None and lo[j] - 1e-12 <= val <= hi[j] + 1e-12:
                    use_slack = True
            if use_slack:
                basis[i] = j
                t.x[j] = min(max(val, lo[j]), hi[j])
                t.vstat[j] = BASIC
            else:
                basis[i] = n + i
                t.x[n + i] = abs(resid[i])
                t.vstat[n + i] = BASIC
        t.basis = basis
        # every starting basis column is a signed unit vector
        t.Binv = np.diag(1.0 / t.A[np.arange(m), basis]) if m \
            else np.zeros((0, 0))
        t.recompute_basics()
        self.t = t

        bland_after = max(2000, 20 * (m + n))
        cap = self.max_iters
        c_art = np.concatenate([np.zeros(n), np.ones(m)])
        status, self._it1 = _simplex_loop(t, c_art, cap, bland_after, 1e-10)
        t.refactor()
        phase1 = float(c_art @ t.x)
        if status == "iteration_limit":
            self.feasible = False
            self._fail = "iteration_limit"
            return
        if phase1 > FEAS_TOL:
            self.feasible = False
            self._fail = "infeasible"
            return
        t.lo[self.n:] = 0.0
        t.hi[self.n:] = 0.0
        self.feasible = True

    def solve(self, c, dual_tol=None) -> LpResult:
        c = np.asarray(c, dtype=float)
        if self.t is None:
            self._start()
        it1 = getattr(self, "_it1", 0)
        if not self.feasible:
            return LpResult(self.t.x[:self.n].copy(), np.inf, self._fail, it1)
        t = self.t
        if dual_tol is None:
            dual_tol = 1e-9 * max(1.0, float(np.abs(c).max()) if c.size else 1.0)
        bland_after = max(2000, 20 * (self.m + self.n))
        cap = self.max_iters
        c2 = np.concatenate([c, np.zeros(self.m)])
        status, it2 = _simplex_loop(t, c2, cap, bland_after, dual_tol)
        t.recompute_basics()
        x = t.x[:self.n].copy()
        value = float(c @ x)
        if status == "optimal":
            return LpResult(x, value, "optimal", it1 + it2, basis=t.basis.copy())
        if status == "unbounded":
            return LpResult(x, -np.inf, "unbounded", it1 + it2)
        return LpResult(x, value, "iteration_limit", it1 + it2)


def solve_bounded_lp(c, A, b, lo, hi, max_iters=200000, dual_tol=None,
                     slack_cols=None) -> LpResult:
    """Two-phase bounded-variable simplex; see module docstring."""
    warm = WarmLp(A, b, lo, hi, slack_cols=slack_cols, max_iters=max_iters)
    return warm.solve(c, dual_tol=dual_tol)
