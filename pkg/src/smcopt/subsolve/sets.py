"""Feasible sets as intersections of simple convex pieces.

A :class:`FeasibleSet` is a passive container; emptiness is detected by a
phase-1 solve (``subsolve.ensure_nonempty``), which problem builders call at
construction time.  Each piece knows how to project a point onto itself so
the subgradient fallback can run Dykstra's algorithm on the intersection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch
from ..funcs import NormAffine, project_simplex


def _idx(idx, d):
    if idx is None:
        return np.arange(d)
    out = np.asarray(idx, dtype=int)
    if out.ndim != 1 or (out < 0).any() or (out >= d).any():
        raise DimensionMismatch("index subset out of range")
    return out


@dataclass(frozen=True)
class Box:
    """lo <= x <= hi componentwise; entries may be +-inf."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("box bounds must be matching vectors")
        if (lo > hi).any():
            raise ValueError("box has lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.shape[0]

    def project(self, x):
        return np.clip(x, self.lo, self.hi)

    def contains(self, x, tol=1e-9):
        return bool((x >= self.lo - tol).all() and (x <= self.hi + tol).all())

    def to_dict(self):
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True)
class NormBall:
    """||x[idx] - center||_p <= radius on an index subset of coordinates."""

    p: float
    center: np.ndarray
    radius: float
    dim_: int
    idx: np.ndarray | None = None

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        idx = _idx(self.idx, self.dim_)
        if center.shape != idx.shape:
            raise DimensionMismatch("center size must match index subset")
        p = float(self.p)
        if p not in (1.0, 2.0, float("inf")):
            raise ValueError("p must be 1, 2 or inf")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "idx", idx)

    @property
    def dim(self):
        return self.dim_

    def project(self, x):
        out = np.array(x, dtype=float)
        v = out[self.idx] - self.center
        if self.p == 2.0:
            nrm = float(np.linalg.norm(v))
            if nrm > self.radius:
                v *= self.radius / nrm
        elif self.p == float("inf"):
            v = np.clip(v, -self.radius, self.radius)
        else:
            if float(np.abs(v).sum()) > self.radius:
                sign = np.where(v >= 0, 1.0, -1.0)
                if self.radius == 0.0:
                    v = np.zeros_like(v)
                else:
                    v = sign * self.radius * project_simplex(np.abs(v) / self.radius)
        out[self.idx] = self.center + v
        return out

    def contains(self, x, tol=1e-9):
        v = np.asarray(x, dtype=float)[self.idx] - self.center
        return bool(np.linalg.norm(v, ord=self.p) <= self.radius + tol)

    def to_dict(self):
        p = "inf" if np.isinf(self.p) else self.p
        return {"kind": "norm_ball", "p": p, "center": self.center.tolist(),
                "radius": self.radius, "d": self.dim_, "idx": self.idx.tolist()}


@dataclass(frozen=True)
class Halfspaces:
    """G x <= g."""

    G: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if G.ndim != 2 or g.shape != (G.shape[0],):
            raise DimensionMismatch("need G (m x d) and g (m,)")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "g", g)

    @property
    def dim(self):
        return self.G.shape[1]

    def project_row(self, x, i):
        gi = self.G[i]
        viol = float(gi @ x - self.g[i])
        if viol <= 0:
            return x
        return x - gi * (viol / float(gi @ gi))

    def contains(self, x, tol=1e-9):
        return bool((self.G @ x <= self.g + tol).all())

    def to_dict(self):
        return {"kind": "halfspaces", "G": self.G.tolist(), "g": self.g.tolist()}


@dataclass(frozen=True)
class EpigraphLink:
    """norm(x) <= x[coord]: an auxiliary coordinate dominates a norm of others."""

    coord: int
    norm: NormAffine

    def __post_init__(self):
        if not 0 <= self.coord < self.norm.dim:
            raise DimensionMismatch("link coordinate out of range")

    @property
    def dim(self):
        return self.norm.dim

    def contains(self, x, tol=1e-9):
        return bool(self.norm.value(x) <= x[self.coord] + tol)

    def to_dict(self):
        return {"kind": "epigraph_link", "coord": self.coord,
                "norm": self.norm.to_dict()}


@dataclass(frozen=True)
class ConvexHull:
    """x[idx] lies in the convex hull of fixed points (one row per point)."""

    points: np.ndarray
    dim_: int
    idx: np.ndarray | None = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        idx = _idx(self.idx, self.dim_)
        if points.ndim != 2 or points.shape[1] != idx.shape[0]:
            raise DimensionMismatch("hull points must be (k x |idx|)")
        if points.shape[0] < 1:
            raise ValueError("hull needs at least one point")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "idx", idx)

    @property
    def dim(self):
        return self.dim_

    def contains(self, x, tol=1e-6):
        # small LP-free check via projection is not available; callers that
        # need membership certificates should solve with the model route
        raise NotImplementedError("use the model lowering for hull membership")

    def to_dict(self):
        return {"kind": "convex_hull", "points": self.points.tolist(),
                "d": self.dim_, "idx": self.idx.tolist()}


_PIECE_KINDS = {"box": Box, "norm_ball": NormBall, "halfspaces": Halfspaces,
                "epigraph_link": EpigraphLink, "convex_hull": ConvexHull}


@dataclass(frozen=True)
class FeasibleSet:
    """Intersection of pieces in R^d; convex by construction."""

    d: int
    pieces: tuple = field(default_factory=tuple)

    def __post_init__(self):
        for piece in self.pieces:
            if piece.dim != self.d:
                raise DimensionMismatch("feasible-set piece has wrong dimension")
        object.__setattr__(self, "pieces", tuple(self.pieces))

    @classmethod
    def box(cls, lo, hi):
        lo = np.asarray(lo, dtype=float)
        return cls(lo.shape[0], (Box(lo, hi),))

    @classmethod
    def whole_space(cls, d):
        return cls(d, ())

    def intersect(self, *pieces) -> "FeasibleSet":
        return FeasibleSet(self.d, self.pieces + tuple(pieces))

    def bounding_box(self):
        """Tightest box implied by Box pieces alone (+-inf elsewhere)."""
        lo = np.full(self.d, -np.inf)
        hi = np.full(self.d, np.inf)
        for piece in self.pieces:
            if isinstance(piece, Box):
                lo = np.maximum(lo, piece.lo)
                hi = np.minimum(hi, piece.hi)
            elif isinstance(piece, NormBall) and piece.p == float("inf"):
                lo[piece.idx] = np.maximum(lo[piece.idx], piece.center - piece.radius)
                hi[piece.idx] = np.minimum(hi[piece.idx], piece.center + piece.radius)
        return lo, hi

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise DimensionMismatch("point has wrong dimension")
        return all(piece.contains(x, tol) for piece in self.pieces)

    def to_dict(self):
        return {"d": self.d, "pieces": [p.to_dict() for p in self.pieces]}

    @classmethod
    def from_dict(cls, d: dict) -> "FeasibleSet":
        pieces = []
        for pd in d["pieces"]:
            kind = pd["kind"]
            if kind == "box":
                pieces.append(Box(np.array(pd["lo"]), np.array(pd["hi"])))
            elif kind == "norm_ball":
                p = float("inf") if pd["p"] == "inf" else float(pd["p"])
                pieces.append(NormBall(p, np.array(pd["center"]), pd["radius"],
                                       pd["d"], np.array(pd["idx"])))
            elif kind == "halfspaces":
                pieces.append(Halfspaces(np.array(pd["G"]), np.array(pd["g"])))
            elif kind == "epigraph_link":
                from ..funcs import atom_from_dict
                pieces.append(EpigraphLink(pd["coord"], atom_from_dict(pd["norm"])))
            elif kind == "convex_hull":
                pieces.append(ConvexHull(np.array(pd["points"]), pd["d"],
                                         np.array(pd["idx"])))
            else:
                raise ValueError(f"unknown piece kind {kind!r}")
        return cls(d["d"], tuple(pieces))
