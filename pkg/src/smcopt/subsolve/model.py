"""Standard-form model and the lowering of atoms/sets into it.

The canonical model is

    minimize    0.5 z' P z + c' z + k
    subject to  G z <= g            (rows with sense '<=')
                E z  = e            (rows with sense '==')
                lo <= z <= hi
                atom_j(z[idx_j]) <= <w_j, z> + r_j      ("nonlinear rows")

Polyhedral atoms (affine, const, max-affine, 1/inf-norms) lower exactly into
linear rows plus auxiliary variables; convex quadratic and 2-norm atoms that
appear in *constraints* stay as nonlinear rows and are handled by an outer
approximation loop in :mod:`smcopt.subsolve.solve`.  Quadratic atoms in the
*objective* go into P directly.

Auxiliary-variable conventions (kept stable so dumps are readable):

- a max-affine atom adds one epigraph variable t with rows a_i x + b_i <= t;
- a 1-norm atom ||A x + c||_1 adds one variable t_i >= 0 per residual row
  with rows +-(A_i x + c_i) <= t_i, and contributes sum_i t_i;
- an inf-norm atom adds a single t >= 0 with rows +-(A_i x + c_i) <= t;
- a quadratic or 2-norm atom appearing in a constraint adds one epigraph
  variable t and the nonlinear row atom(x) <= t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, UnsupportedAtom
from ..funcs import Affine, Const, ConvexAtom, MaxAffine, NormAffine, Quadratic, Sum
from .sets import Box, ConvexHull, EpigraphLink, FeasibleSet, Halfspaces, NormBall

LE = "<="
EQ = "=="


@dataclass
class _Row:
    idx: np.ndarray
    coef: np.ndarray
    rhs: float
    sense: str


@dataclass
class _NonlinRow:
    atom: ConvexAtom
    x_idx: np.ndarray
    w_idx: np.ndarray
    w_coef: np.ndarray
    r: float

    def violation(self, z):
        lhs = self.atom.value(z[self.x_idx])
        rhs = float(self.w_coef @ z[self.w_idx]) + self.r
        return lhs - rhs

    def cut(self, z):
        """Linearize at z: returns (idx, coef, rhs) for a '<=' row."""
        xv = z[self.x_idx]
        gsub = self.atom.subgradient(xv)
        const = self.atom.value(xv) - float(gsub @ xv)
        idx = np.concatenate([self.x_idx, self.w_idx])
        coef = np.concatenate([gsub, -self.w_coef])
        return idx, coef, -const + self.r


@dataclass
class Model:
    """Finalized dense standard-form model."""

    nvar: int
    P: np.ndarray | None
    c: np.ndarray
    k: float
    G: np.ndarray
    g: np.ndarray
    senses: list
    lo: np.ndarray
    hi: np.ndarray
    nonlinear: list
    x_idx: np.ndarray
    var_names: list

    @property
    def is_quadratic(self):
        return self.P is not None

    def objective_value(self, z):
        val = float(self.c @ z) + self.k
        if self.P is not None:
            val += 0.5 * float(z @ (self.P @ z))
        return val

    def dump(self) -> str:
        """Human-readable plain-text form, for debugging."""
        out = [f"model: {self.nvar} vars, {self.G.shape[0]} rows, "
               f"{len(self.nonlinear)} nonlinear rows"]
        out.append("minimize " + (" + 0.5 z'Pz" if self.P is not None else "")
                   + f" c.z + {self.k!r}")
        out.append("c = " + np.array2string(self.c, max_line_width=100))
        for i in range(self.G.shape[0]):
            nz = np.nonzero(self.G[i])[0]
            terms = " + ".join(f"{self.G[i, j]!r}*{self.var_names[j]}" for j in nz)
            out.append(f"row {i}: {terms} {self.senses[i]} {self.g[i]!r}")
        for j in range(self.nvar):
            out.append(f"{self.var_names[j]}: [{self.lo[j]!r}, {self.hi[j]!r}]")
        for row in self.nonlinear:
            out.append(f"nonlinear: {row.atom.to_dict()['kind']}(x) <= linear")
        return "\n".join(out)


class ModelBuilder:
    """Accumulates variables, costs and rows, then builds a dense Model."""

    def __init__(self):
        self._lo = []
        self._hi = []
        self._cost = {}
        self._k = 0.0
        self._quad = []
        self._rows = []
        self._nonlinear = []
        self._names = []
        self.x_idx = None

    # -- variables ---------------------------------------------------------

    def add_vars(self, n, lo=-np.inf, hi=np.inf, name="z"):
        start = len(self._lo)
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
        self._lo.extend(lo.tolist())
        self._hi.extend(hi.tolist())
        self._names.extend(f"{name}{start + i}" for i in range(n))
        return np.arange(start, start + n)

    def declare_x(self, d, name="x"):
        """Declare the primary block; feasible-set pieces attach to it."""
        self.x_idx = self.add_vars(d, name=name)
        return self.x_idx

    def tighten_bounds(self, idx, lo=None, hi=None):
        for pos, j in enumerate(idx):
            if lo is not None:
                self._lo[j] = max(self._lo[j], float(np.asarray(lo)[pos]))
            if hi is not None:
                self._hi[j] = min(self._hi[j], float(np.asarray(hi)[pos]))

    # -- objective ---------------------------------------------------------

    def add_cost(self, idx, coef):
        coef = np.asarray(coef, dtype=float)
        for j, cj in zip(np.atleast_1d(idx), np.atleast_1d(coef)):
            self._cost[int(j)] = self._cost.get(int(j), 0.0) + float(cj)

    def add_const(self, k):
        self._k += float(k)

    def add_quad(self, idx, P):
        self._quad.append((np.asarray(idx, dtype=int), np.asarray(P, dtype=float)))

    # -- rows ----------------------------------------------------------------

    def add_row(self, idx, coef, rhs, sense=LE):
        self._rows.append(_Row(np.asarray(idx, dtype=int),
                               np.asarray(coef, dtype=float), float(rhs), sense))

    def add_nonlinear_row(self, atom, x_idx, w_idx, w_coef, r):
        self._nonlinear.append(_NonlinRow(atom, np.asarray(x_idx, dtype=int),
                                          np.asarray(w_idx, dtype=int),
                                          np.asarray(w_coef, dtype=float),
                                          float(r)))

    # -- atom lowering -------------------------------------------------------

    def epigraph_expr(self, atom, x_idx, strict=True):
        """Return (idx, coef, const) with atom(x) <= <coef, z[idx]> + const,
        tight at any optimum that minimizes the expression.

        ``strict=False`` allows quadratic / 2-norm atoms by leaving them as
        nonlinear epigraph rows.
        """
        x_idx = np.asarray(x_idx, dtype=int)
        if atom.dim != x_idx.shape[0]:
            raise DimensionMismatch("atom dimension vs index block")
        if isinstance(atom, Const):
            return np.empty(0, dtype=int), np.empty(0), atom.value_
        if isinstance(atom, Affine):
            return x_idx, atom.a.copy(), atom.b
        if isinstance(atom, MaxAffine):
            t = self.add_vars(1, name="t_max")
            for i in range(atom.A.shape[0]):
                self.add_row(np.append(x_idx, t[0]),
                             np.append(atom.A[i], -1.0), -atom.b[i], LE)
            return t, np.ones(1), 0.0
        if isinstance(atom, NormAffine):
            m = atom.A.shape[0]
            if atom.p == 1.0 or (atom.p == 2.0 and m == 1):
                t = self.add_vars(m, lo=0.0, name="t_abs")
                for i in range(m):
                    self.add_row(np.append(x_idx, t[i]),
                                 np.append(atom.A[i], -1.0), -atom.c[i], LE)
                    self.add_row(np.append(x_idx, t[i]),
                                 np.append(-atom.A[i], -1.0), atom.c[i], LE)
                return t, np.full(m, atom.w), 0.0
            if atom.p == float("inf"):
                t = self.add_vars(1, lo=0.0, name="t_inf")
                for i in range(m):
                    self.add_row(np.append(x_idx, t[0]),
                                 np.append(atom.A[i], -1.0), -atom.c[i], LE)
                    self.add_row(np.append(x_idx, t[0]),
                                 np.append(-atom.A[i], -1.0), atom.c[i], LE)
                return t, np.full(1, atom.w), 0.0
            if strict:
                raise UnsupportedAtom("2-norm atom has no exact LP/QP lowering")
            t = self.add_vars(1, lo=0.0, name="t_nrm")
            unw = NormAffine(atom.p, atom.A, atom.c, 1.0)
            self.add_nonlinear_row(unw, x_idx, t, np.ones(1), 0.0)
            return t, np.full(1, atom.w), 0.0
        if isinstance(atom, Quadratic):
            if strict:
                raise UnsupportedAtom("quadratic atom in a constraint needs "
                                      "the outer-approximation route")
            t = self.add_vars(1, name="t_quad")
            self.add_nonlinear_row(atom, x_idx, t, np.ones(1), 0.0)
            return t, np.ones(1), 0.0
        if isinstance(atom, Sum):
            idxs, coefs, const = [], [], 0.0
            for w, sub in atom.terms:
                if w == 0.0:
                    continue
                si, sc, sk = self.epigraph_expr(sub, x_idx, strict=strict)
                idxs.append(si)
                coefs.append(w * sc)
                const += w * sk
            if not idxs:
                return np.empty(0, dtype=int), np.empty(0), const
            return np.concatenate(idxs), np.concatenate(coefs), const
        raise UnsupportedAtom(f"unknown atom type {type(atom).__name__}")

    def add_objective_atom(self, weight, atom, x_idx=None):
        """Lower weight * atom(x) into the objective."""
        if weight < 0:
            raise ValueError("objective weights must be nonnegative")
        if weight == 0.0:
            return
        x_idx = self.x_idx if x_idx is None else np.asarray(x_idx, dtype=int)
        if isinstance(atom, Quadratic):
            self.add_quad(x_idx, weight * atom.P)
            self.add_cost(x_idx, weight * atom.a)
            self.add_const(weight * atom.b)
            return
        if isinstance(atom, Sum):
            for w, sub in atom.terms:
                self.add_objective_atom(weight * w, sub, x_idx)
            return
        idx, coef, const = self.epigraph_expr(atom, x_idx, strict=False)
        if idx.size:
            self.add_cost(idx, weight * coef)
        self.add_const(weight * const)

    def add_atom_row(self, atom, x_idx, w_idx, w_coef, r):
        """Add the constraint atom(x) <= <w_coef, z[w_idx]> + r."""
        x_idx = np.asarray(x_idx, dtype=int)
        w_idx = np.asarray(w_idx, dtype=int)
        w_coef = np.asarray(w_coef, dtype=float)
        if isinstance(atom, (Const, Affine)):
            base_idx = x_idx if isinstance(atom, Affine) else np.empty(0, dtype=int)
            base_coef = atom.a if isinstance(atom, Affine) else np.empty(0)
            base_b = atom.b if isinstance(atom, Affine) else atom.value_
            self.add_row(np.concatenate([base_idx, w_idx]),
                         np.concatenate([base_coef, -w_coef]), r - base_b, LE)
            return
        if isinstance(atom, MaxAffine):
            for i in range(atom.A.shape[0]):
                self.add_row(np.concatenate([x_idx, w_idx]),
                             np.concatenate([atom.A[i], -w_coef]),
                             r - atom.b[i], LE)
            return
        if isinstance(atom, Quadratic) or (isinstance(atom, NormAffine)
                                           and atom.p == 2.0
                                           and atom.A.shape[0] > 1):
            self.add_nonlinear_row(atom, x_idx, w_idx, w_coef, r)
            return
        idx, coef, const = self.epigraph_expr(atom, x_idx, strict=False)
        self.add_row(np.concatenate([idx, w_idx]),
                     np.concatenate([coef, -w_coef]), r - const, LE)

    # -- feasible sets ---------------------------------------------------------

    def add_feasible_set(self, X: FeasibleSet, x_idx=None):
        x_idx = self.x_idx if x_idx is None else np.asarray(x_idx, dtype=int)
        if X.d != x_idx.shape[0]:
            raise DimensionMismatch("feasible set dimension vs x block")
        for piece in X.pieces:
            if isinstance(piece, Box):
                self.tighten_bounds(x_idx, piece.lo, piece.hi)
            elif isinstance(piece, Halfspaces):
                for i in range(piece.G.shape[0]):
                    self.add_row(x_idx, piece.G[i], piece.g[i], LE)
            elif isinstance(piece, NormBall):
                sub = x_idx[piece.idx]
                if piece.p == float("inf"):
                    self.tighten_bounds(sub, piece.center - piece.radius,
                                        piece.center + piece.radius)
                else:
                    atom = NormAffine(piece.p, np.eye(sub.size), -piece.center, 1.0)
                    self.add_atom_row(atom, sub, np.empty(0, dtype=int),
                                      np.empty(0), piece.radius)
            elif isinstance(piece, EpigraphLink):
                unw = piece.norm
                target = x_idx[piece.coord]
                self.add_atom_row(unw, x_idx, np.array([target]),
                                  np.ones(1), 0.0)
            elif isinstance(piece, ConvexHull):
                k, m = piece.points.shape
                lam = self.add_vars(k, lo=0.0, name="lam")
                self.add_row(lam, np.ones(k), 1.0, EQ)
                for j in range(m):
                    self.add_row(np.append(lam, x_idx[piece.idx[j]]),
                                 np.append(piece.points[:, j], -1.0), 0.0, EQ)
            else:
                raise UnsupportedAtom(f"unknown set piece {type(piece).__name__}")

    # -- finalize -----------------------------------------------------------

    def build(self) -> Model:
        n = len(self._lo)
        c = np.zeros(n)
        for j, cj in self._cost.items():
            c[j] = cj
        P = None
        if self._quad:
            P = np.zeros((n, n))
            for idx, block in self._quad:
                P[np.ix_(idx, idx)] += block
        m = len(self._rows)
        G = np.zeros((m, n))
        g = np.zeros(m)
        senses = []
        for i, row in enumerate(self._rows):
            np.add.at(G[i], row.idx, row.coef)
            g[i] = row.rhs
            senses.append(row.sense)
        return Model(nvar=n, P=P, c=c, k=self._k, G=G, g=g, senses=senses,
                     lo=np.array(self._lo), hi=np.array(self._hi),
                     nonlinear=list(self._nonlinear),
                     x_idx=(self.x_idx if self.x_idx is not None
                            else np.arange(n)),
                     var_names=list(self._names))
