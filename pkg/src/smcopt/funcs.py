"""Structured convex-function algebra and simplex utilities.

Atoms are finite convex functions on all of R^d; domain restrictions belong
to the feasible set, never to the atoms.  All atoms are immutable after
construction and every operation here is pure, so they can be shared freely
across threads and runs.

Supported atom kinds and their values at x:

====================  =====================================================
``Affine(a, b)``      <a, x> + b
``Quadratic(P, a, b)``  0.5 <P x, x> + <a, x> + b       (P symmetric PSD)
``NormAffine(p, A, c, w)``  w * ||A x + c||_p,  p in {1, 2, inf},  w >= 0
``MaxAffine(rows)``   max_i <a_i, x> + b_i
``Const(value)``      value
``Sum(terms)``        sum_i w_i * atom_i(x),  w_i >= 0
====================  =====================================================

Subgradient selection is deterministic: at a MaxAffine kink the smallest
active row index wins, and sign(0) = +1 for every norm kink.  This keeps
every downstream solver a deterministic map of its inputs.

JSON schema (see also README): every atom serializes to an object with a
``"kind"`` field in {"affine", "quadratic", "norm_affine", "max_affine",
"const", "sum"}; numeric fields are nested lists, ``p`` is 1, 2 or "inf".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch

PSD_EIG_FLOOR = -1e-10
SIMPLEX_SUM_TOL = 1e-12


def _vec(v, name="vector"):
    out = np.asarray(v, dtype=float)
    if out.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-d, got shape {out.shape}")
    out = out.copy()
    out.setflags(write=False)
    return out


def _mat(m, name="matrix"):
    out = np.asarray(m, dtype=float)
    if out.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-d, got shape {out.shape}")
    out = out.copy()
    out.setflags(write=False)
    return out


def _check_dim(atom, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (atom.dim,):
        raise DimensionMismatch(
            f"point has shape {x.shape}, atom expects ({atom.dim},)")
    return x


class ConvexAtom:
    """Base class; concrete atoms implement value/subgradient/dim."""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def value(self, x) -> float:
        raise NotImplementedError

    def subgradient(self, x) -> np.ndarray:
        """A deterministic element of the subdifferential at x."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __call__(self, x) -> float:
        return self.value(x)


@dataclass(frozen=True)
class Affine(ConvexAtom):
    a: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a, "a"))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self):
        return self.a.shape[0]

    def value(self, x):
        x = _check_dim(self, x)
        return float(self.a @ x + self.b)

    def subgradient(self, x):
        _check_dim(self, x)
        return self.a.copy()

    def to_dict(self):
        return {"kind": "affine", "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True)
class Quadratic(ConvexAtom):
    """0.5 <P x, x> + <a, x> + b with P symmetric and numerically PSD."""

    P: np.ndarray
    a: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        P = _mat(self.P, "P")
        a = _vec(self.a, "a")
        if P.shape[0] != P.shape[1] or P.shape[0] != a.shape[0]:
            raise DimensionMismatch(f"P shape {P.shape} vs a shape {a.shape}")
        if not np.allclose(P, P.T, atol=1e-12):
            raise ValueError("P must be symmetric")
        if P.shape[0] and float(np.linalg.eigvalsh(P)[0]) < PSD_EIG_FLOOR:
            raise ValueError(
                f"P must be PSD (smallest eigenvalue >= {PSD_EIG_FLOOR})")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self):
        return self.a.shape[0]

    def value(self, x):
        x = _check_dim(self, x)
        return float(0.5 * x @ (self.P @ x) + self.a @ x + self.b)

    def subgradient(self, x):
        x = _check_dim(self, x)
        return self.P @ x + self.a

    def to_dict(self):
        return {"kind": "quadratic", "P": self.P.tolist(),
                "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True)
class NormAffine(ConvexAtom):
    """w * ||A x + c||_p for p in {1, 2, inf} (use float('inf'))."""

    p: float
    A: np.ndarray
    c: np.ndarray
    w: float = 1.0

    def __post_init__(self):
        A = _mat(self.A, "A")
        c = _vec(self.c, "c")
        if A.shape[0] != c.shape[0]:
            raise DimensionMismatch(f"A shape {A.shape} vs c shape {c.shape}")
        p = float(self.p)
        if p not in (1.0, 2.0, float("inf")):
            raise ValueError("p must be 1, 2 or inf")
        if self.w < 0:
            raise ValueError("norm weight must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "w", float(self.w))

    @property
    def dim(self):
        return self.A.shape[1]

    def _residual(self, x):
        return self.A @ x + self.c

    def value(self, x):
        x = _check_dim(self, x)
        return float(self.w * np.linalg.norm(self._residual(x), ord=self.p))

    def subgradient(self, x):
        x = _check_dim(self, x)
        r = self._residual(x)
        if self.p == 1.0:
            g = np.where(r >= 0.0, 1.0, -1.0)
        elif self.p == 2.0:
            nrm = np.linalg.norm(r)
            g = r / nrm if nrm > 0.0 else np.zeros_like(r)
        else:
            mag = np.abs(r)
            top = float(mag.max()) if mag.size else 0.0
            i = int(np.argmax(mag))  # smallest index attaining the max
            g = np.zeros_like(r)
            g[i] = 1.0 if r[i] >= 0.0 else -1.0
            if top == 0.0:
                g[i] = 1.0
        return self.w * (self.A.T @ g)

    def to_dict(self):
        p = "inf" if np.isinf(self.p) else self.p
        return {"kind": "norm_affine", "p": p, "A": self.A.tolist(),
                "c": self.c.tolist(), "w": self.w}


@dataclass(frozen=True)
class MaxAffine(ConvexAtom):
    """max over rows of <a_i, x> + b_i; at least one row required."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = _mat(self.A, "A")
        b = _vec(self.b, "b")
        if A.shape[0] != b.shape[0]:
            raise DimensionMismatch(f"A shape {A.shape} vs b shape {b.shape}")
        if A.shape[0] < 1:
            raise ValueError("MaxAffine needs at least one row")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_rows(cls, rows):
        """Build from a list of (a_i, b_i) pairs."""
        A = np.array([np.asarray(a, dtype=float) for a, _ in rows])
        b = np.array([float(bi) for _, bi in rows])
        return cls(A, b)

    @property
    def dim(self):
        return self.A.shape[1]

    def row_values(self, x):
        x = _check_dim(self, x)
        return self.A @ x + self.b

    def value(self, x):
        return float(self.row_values(x).max())

    def subgradient(self, x):
        vals = self.row_values(x)
        i = int(np.argmax(vals))  # argmax returns the smallest maximizer
        return self.A[i].copy()

    def to_dict(self):
        return {"kind": "max_affine", "A": self.A.tolist(), "b": self.b.tolist()}


@dataclass(frozen=True)
class Const(ConvexAtom):
    value_: float
    d: int = 1

    def __post_init__(self):
        object.__setattr__(self, "value_", float(self.value_))
        object.__setattr__(self, "d", int(self.d))

    @property
    def dim(self):
        return self.d

    def value(self, x):
        _check_dim(self, x)
        return self.value_

    def subgradient(self, x):
        _check_dim(self, x)
        return np.zeros(self.d)

    def to_dict(self):
        return {"kind": "const", "value": self.value_, "d": self.d}


@dataclass(frozen=True)
class Sum(ConvexAtom):
    """Nonnegative combination sum_i w_i * atom_i."""

    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        terms = tuple((float(w), atom) for w, atom in self.terms)
        if not terms:
            raise ValueError("Sum needs at least one term")
        d = terms[0][1].dim
        for w, atom in terms:
            if w < 0:
                raise ValueError("Sum weights must be nonnegative")
            if atom.dim != d:
                raise DimensionMismatch("Sum terms must share a dimension")
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self):
        return self.terms[0][1].dim

    def value(self, x):
        return float(sum(w * atom.value(x) for w, atom in self.terms))

    def subgradient(self, x):
        g = np.zeros(self.dim)
        for w, atom in self.terms:
            if w != 0.0:
                g += w * atom.subgradient(x)
        return g

    def to_dict(self):
        return {"kind": "sum",
                "terms": [[w, atom.to_dict()] for w, atom in self.terms]}


def atom_from_dict(d: dict) -> ConvexAtom:
    """Inverse of ``atom.to_dict()``."""
    kind = d["kind"]
    if kind == "affine":
        return Affine(np.array(d["a"]), d["b"])
    if kind == "quadratic":
        return Quadratic(np.array(d["P"]), np.array(d["a"]), d["b"])
    if kind == "norm_affine":
        p = float("inf") if d["p"] == "inf" else float(d["p"])
        return NormAffine(p, np.array(d["A"]), np.array(d["c"]), d["w"])
    if kind == "max_affine":
        return MaxAffine(np.array(d["A"]), np.array(d["b"]))
    if kind == "const":
        return Const(d["value"], d["d"])
    if kind == "sum":
        return Sum(tuple((w, atom_from_dict(a)) for w, a in d["terms"]))
    raise ValueError(f"unknown atom kind {kind!r}")


def eval_atom(atom: ConvexAtom, x) -> float:
    """Evaluate an atom at x (function-style alias of ``atom.value``)."""
    return atom.value(x)


def subgradient(atom: ConvexAtom, x) -> np.ndarray:
    """Deterministic subgradient of an atom at x."""
    return atom.subgradient(x)


# ---------------------------------------------------------------------------
# simplex utilities
# ---------------------------------------------------------------------------

def is_simplex_vector(q, tol=SIMPLEX_SUM_TOL) -> bool:
    q = np.asarray(q, dtype=float)
    return (q.ndim == 1 and q.size >= 1 and bool((q >= 0).all())
            and abs(float(q.sum()) - 1.0) <= tol * max(1.0, q.size))


def check_simplex_vector(q, tol=1e-9):
    """Validate and return q as a probability vector."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or q.size < 1:
        raise DimensionMismatch("simplex vector must be 1-d and nonempty")
    if (q < -tol).any() or abs(float(q.sum()) - 1.0) > tol:
        raise ValueError("not a point of the standard simplex")
    return q


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of v onto the standard simplex.

    Sort-based algorithm; O(n log n), exact up to round-off and unique by
    strict convexity of the projection problem.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise DimensionMismatch("project_simplex expects a nonempty vector")
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, n + 1)
    cond = u - css / idx > 0
    rho = int(np.count_nonzero(cond))
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def softmin(u) -> np.ndarray:
    """exp(-u_l) / sum_l' exp(-u_l'), stabilized by shifting by min(u).

    The shift leaves the value unchanged and keeps every exponent in
    [-(max-min), 0], so the largest term is exactly 1 and nothing overflows.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size < 1:
        raise DimensionMismatch("softmin expects a nonempty vector")
    if not np.isfinite(u).all():
        raise ValueError("softmin needs finite entries")
    # exponent cap keeps the output strictly positive even under extreme
    # spreads; entries that far out are below 1e-300 anyway
    e = np.exp(-np.minimum(u - u.min(), 700.0))
    return e / e.sum()


def greedy_vertex(h) -> np.ndarray:
    """Vertex of the simplex putting all mass on the smallest argmin of h."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or h.size < 1:
        raise DimensionMismatch("greedy_vertex expects a nonempty vector")
    q = np.zeros(h.size)
    q[int(np.argmin(h))] = 1.0  # argmin breaks ties at the smallest index
    return q
