"""Local search on the weighted bi-convex reformulation, plus a DC baseline.

The surrogate is  Fbar(x, Q) = hbar(x) + (1/N) sum_s <q^s, h^s(x)>  with one
simplex vector per term.  Minimizing over x at fixed Q is the convex oracle;
minimizing over Q at fixed x is solved by the greedy vertex per term.  The
relaxed iteration mixes the greedy vertex with an exploratory candidate
through a safeguarded ratio, which preserves a per-iteration decrease of
(1 - C_k) times the gain and therefore drives the gain to zero.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .funcs import greedy_vertex, project_simplex, softmin
from .smc import SmcProblem, component_values
from .subsolve import SolverConfig
from .subsolve.solve import DEFAULT_CONFIG, OracleSolver

GAIN_FLOOR = -1e-12
EPS_DENOM_GUARD = 1e-14
DELTA_DEFAULT = 1e-8
KMAX_DEFAULT = 400
TRACE_SCHEMA = "run-trace/1"


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

def check_weights(problem: SmcProblem, Q) -> tuple:
    Q = tuple(np.asarray(q, dtype=float) for q in Q)
    if len(Q) != problem.N:
        raise ValueError("need one weight vector per term")
    for s, q in enumerate(Q):
        if q.shape != (problem.sizes[s],):
            raise ValueError(f"weight vector {s} has wrong length")
        if (q < -1e-12).any() or abs(float(q.sum()) - 1.0) > 1e-9:
            raise ValueError(f"weight vector {s} is not on the simplex")
    return Q


def greedy_weights(problem: SmcProblem, x) -> tuple:
    """Vertex weights at x: all mass on the smallest active index per term."""
    return tuple(greedy_vertex(component_values(problem, x, s))
                 for s in range(problem.N))


def random_weights(problem: SmcProblem, rng: np.random.Generator) -> tuple:
    """Uniform sample on the product of simplices (normalized exponentials)."""
    out = []
    for n_s in problem.sizes:
        v = rng.exponential(1.0, n_s)
        out.append(v / v.sum())
    return tuple(out)


def surrogate_value(problem: SmcProblem, x, Q) -> float:
    """Fbar(x, Q) evaluated directly."""
    total = problem.hbar.value(x)
    for s, q in enumerate(Q):
        total += float(q @ component_values(problem, x, s)) / problem.N
    return float(total)


# ---------------------------------------------------------------------------
# gain and criticality
# ---------------------------------------------------------------------------

def gain(problem: SmcProblem, x_plus, Q) -> float:
    """Fbar(x+, Q) - min over Q' of Fbar(x+, Q'); always nonnegative.

    Equals (1/N) sum_s <q^s - q*^s, h^s(x+)> with q* the greedy vertex.
    """
    Q = check_weights(problem, Q)
    total = 0.0
    for s, q in enumerate(Q):
        h = component_values(problem, x_plus, s)
        total += float(q @ h) - float(h.min())
    g = total / problem.N
    if g < GAIN_FLOOR:
        raise ValueError(f"gain {g} below the numerical floor; bad weights?")
    return max(g, 0.0)


@dataclass(frozen=True)
class CriticalityVerdict:
    critical: bool
    gain: float

    def __str__(self):
        return "Critical" if self.critical else f"Unknown(gain={self.gain!r})"


def criticality_certificate(problem: SmcProblem, x_plus, Q,
                            tol: float = 1e-9) -> CriticalityVerdict:
    """Zero gain certifies criticality of x_plus; positive gain is only
    inconclusive (the converse fails: critical points may carry gain)."""
    g = gain(problem, x_plus, Q)
    return CriticalityVerdict(critical=g <= tol, gain=g)


# ---------------------------------------------------------------------------
# exploration candidates (one term at a time)
# ---------------------------------------------------------------------------

def candidate_bb(q, active_min_index: int, kappa: float) -> np.ndarray:
    """Signed step from the previous weights toward the active vertex."""
    q = np.asarray(q, dtype=float)
    u = np.full(q.shape, -1.0)
    u[active_min_index] = 1.0
    return project_simplex(q + kappa * u)


def candidate_sm(h, kappa: float, rng: np.random.Generator | None) -> np.ndarray:
    """Normalized softmin of the component values with a tiny tie-breaking
    perturbation (drawn once per call; pass None to suppress it)."""
    h = np.asarray(h, dtype=float)
    if rng is None:
        u = np.zeros(h.shape)
    else:
        u = rng.uniform(-5e-7, 5e-7, h.shape)
    denom = max(1e-4, abs(float(h.sum())))
    return softmin(kappa * (h + u) / denom)


def candidate_mm(h, kappa: float) -> np.ndarray:
    """Projection of the rescaled max-min score; order preserving."""
    h = np.asarray(h, dtype=float)
    h_max = float(h.max())
    h_min = float(h.min())
    if h_max == h_min:
        return np.full(h.shape, 1.0 / h.size)
    v = (h_max - h) / (h_max - h_min)
    return project_simplex(kappa * v)


def candidate_softmin_raw(h, kappa: float) -> np.ndarray:
    """Plain softmin(kappa * h): the unnormalized exploratory update."""
    return softmin(kappa * np.asarray(h, dtype=float))


def exploration_epsilon(q, q_star, q_hat, h, C: float) -> float:
    """Safeguarded exploration ratio; guarantees the (1-C)-gain decrease.

    Returns 1 when the candidate is no worse than the greedy vertex (the
    denominator is below the guard), else min{1, C <q - q*, h> / <q^ - q*, h>}.
    """
    h = np.asarray(h, dtype=float)
    denom = float((np.asarray(q_hat) - np.asarray(q_star)) @ h)
    if denom <= EPS_DENOM_GUARD:
        return 1.0
    num = C * float((np.asarray(q) - np.asarray(q_star)) @ h)
    return float(min(1.0, max(0.0, num / denom)))


def q_update(q_star, q_hat, eps: float) -> np.ndarray:
    """Convex combination eps * candidate + (1 - eps) * greedy vertex."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    return eps * np.asarray(q_hat, dtype=float) \
        + (1.0 - eps) * np.asarray(q_star, dtype=float)


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

def _default_c(k: int) -> float:
    return 2.0 / (np.sqrt(k - 1.0) + 3.0)


@dataclass(frozen=True)
class Schedule:
    """Per-iteration knobs of a relaxed alternating-minimization run.

    ``epsilon_rule``:
      - 'all-zero'   exact greedy weights each iteration (plain AM)
      - 'all-one'    always take the candidate (the signed-step method)
      - 'lemma'      safeguarded ratio with parameter C(k); sup C < 1
      - 'alternate'  0 on odd iterations, 1 on even ones
    """

    name: str
    candidate: str  # none | bb | sm | mm | softmin_raw
    kappa: Callable[[int], float]
    C: Callable[[int], float] = _default_c
    epsilon_rule: str = "lemma"
    c_sup: float | None = None

    def __post_init__(self):
        if self.candidate not in ("none", "bb", "sm", "mm", "softmin_raw"):
            raise ValueError(f"unknown candidate {self.candidate!r}")
        if self.epsilon_rule not in ("all-zero", "all-one", "lemma", "alternate"):
            raise ValueError(f"unknown epsilon rule {self.epsilon_rule!r}")
        if self.epsilon_rule == "lemma" and self.c_sup is not None \
                and not self.c_sup < 1.0:
            raise ValueError("lemma rule needs sup_k C(k) < 1")

    @classmethod
    def am(cls):
        return cls("AM", "none", lambda k: 0.0, epsilon_rule="all-zero")

    @classmethod
    def bb(cls, kappa: float = 0.1):
        return cls("BB", "bb", lambda k: kappa, epsilon_rule="all-one")

    @classmethod
    def sm(cls):
        return cls("SM", "sm", lambda k: 1.5 ** (k ** 0.75),
                   epsilon_rule="lemma", c_sup=2.0 / 3.0)

    @classmethod
    def mm(cls):
        return cls("MM", "mm", lambda k: float(k) ** (2.0 / 3.0),
                   epsilon_rule="lemma", c_sup=2.0 / 3.0)

    @classmethod
    def alter(cls, kappa: float = 0.25):
        return cls("ALTER", "softmin_raw", lambda k: kappa,
                   epsilon_rule="alternate")

    @classmethod
    def by_name(cls, name: str) -> "Schedule":
        key = name.strip().lower()
        table = {"am": cls.am, "bb": cls.bb, "sm": cls.sm, "mm": cls.mm,
                 "alter": cls.alter}
        if key not in table:
            raise ValueError(f"unknown method name {name!r}")
        return table[key]()


# ---------------------------------------------------------------------------
# run traces
# ---------------------------------------------------------------------------

@dataclass
class TraceRow:
    k: int
    fbar: float
    f: float
    gain: float
    epsilon_min: float
    time_ms: float


@dataclass
class RunTrace:
    rows: list = field(default_factory=list)
    xs: list = field(default_factory=list)
    x_best: np.ndarray | None = None
    f_best: float = np.inf
    best_k: int = -1
    termination: str = "max_iters"
    meta: dict = field(default_factory=dict)

    @property
    def iterations(self):
        return len(self.rows)

    def fbar_column(self):
        return np.array([r.fbar for r in self.rows])

    def gain_column(self):
        return np.array([r.gain for r in self.rows])

    def to_csv(self, fh) -> None:
        """Write the versioned trace schema; '#' lines carry metadata."""
        close = False
        if isinstance(fh, str):
            fh = open(fh, "w", newline="")
            close = True
        try:
            fh.write(f"# {TRACE_SCHEMA}\n")
            for key in sorted(self.meta):
                fh.write(f"# {key}={self.meta[key]}\n")
            fh.write("k,Fbar,F,gain,epsilon_min,time_ms\n")
            for r in self.rows:
                fh.write(f"{r.k},{r.fbar!r},{r.f!r},{r.gain!r},"
                         f"{r.epsilon_min!r},{r.time_ms!r}\n")
        finally:
            if close:
                fh.close()

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RunTrace":
        trace = cls()
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != f"# {TRACE_SCHEMA}":
            raise ValueError("unknown trace schema")
        body = [ln for ln in lines if not ln.startswith("#")]
        for ln in body[1:]:
            parts = ln.split(",")
            trace.rows.append(TraceRow(int(parts[0]), *map(float, parts[1:])))
        for ln in lines:
            if ln.startswith("# ") and "=" in ln:
                key, _, val = ln[2:].partition("=")
                trace.meta[key] = val
        if trace.rows:
            fs = [r.f for r in trace.rows]
            trace.best_k = int(np.argmin(fs)) + 1
            trace.f_best = float(min(fs))
        return trace


# ---------------------------------------------------------------------------
# relaxed alternating minimization
# ---------------------------------------------------------------------------

def _make_candidate(schedule: Schedule, q, h, kappa, rng):
    if schedule.candidate == "none":
        return greedy_vertex(h)
    if schedule.candidate == "bb":
        return candidate_bb(q, int(np.argmin(h)), kappa)
    if schedule.candidate == "sm":
        return candidate_sm(h, kappa, rng)
    if schedule.candidate == "mm":
        return candidate_mm(h, kappa)
    return candidate_softmin_raw(h, kappa)


def _epsilon(schedule: Schedule, k, q, q_star, q_hat, h):
    rule = schedule.epsilon_rule
    if rule == "all-zero":
        return 0.0
    if rule == "all-one":
        return 1.0
    if rule == "alternate":
        return 0.0 if k % 2 == 1 else 1.0
    C = float(schedule.C(k))
    if not 0.0 <= C < 1.0:
        raise ValueError(f"lemma rule needs C(k) in [0, 1); got {C} at k={k}")
    return exploration_epsilon(q, q_star, q_hat, h, C)


def ram_run(problem: SmcProblem, Q_init, schedule: Schedule,
            delta: float = DELTA_DEFAULT, K_max: int = KMAX_DEFAULT,
            cfg: SolverConfig = DEFAULT_CONFIG,
            rng: np.random.Generator | None = None) -> RunTrace:
    """Relaxed alternating minimization from initial weights.

    Each iteration minimizes the surrogate at fixed weights, then rebuilds
    the weights as a safeguarded convex combination of the greedy vertex and
    the schedule's exploratory candidate.  Stops when the previous surrogate
    value exceeds the current objective by less than ``delta``, or at
    ``K_max``; returns the best iterate by true objective value.
    """
    Q = check_weights(problem, Q_init)
    trace = RunTrace(meta={"schedule": schedule.name, "delta": delta,
                           "K_max": K_max})
    oracle = OracleSolver(problem, cfg)
    upsilon = np.inf
    for k in range(1, K_max + 1):
        t0 = time.perf_counter()
        res = oracle.solve_weights(Q)
        x_k = res.x
        fbar_k = res.value
        hvals = [component_values(problem, x_k, s) for s in range(problem.N)]
        f_k = problem.hbar.value(x_k) + sum(float(h.min()) for h in hvals) \
            / problem.N
        gain_k = max(fbar_k - f_k, 0.0)

        eps_min = 1.0
        Q_next = []
        for s in range(problem.N):
            h = hvals[s]
            q_star = greedy_vertex(h)
            q_hat = _make_candidate(schedule, Q[s], h, schedule.kappa(k), rng)
            eps = _epsilon(schedule, k, Q[s], q_star, q_hat, h)
            eps_min = min(eps_min, eps)
            Q_next.append(q_update(q_star, q_hat, eps))

        trace.rows.append(TraceRow(k, fbar_k, f_k, gain_k, eps_min,
                                   (time.perf_counter() - t0) * 1e3))
        trace.xs.append(x_k)
        if f_k < trace.f_best:
            trace.f_best = f_k
            trace.x_best = x_k.copy()
            trace.best_k = k
        if upsilon - f_k < delta:
            trace.termination = "tol"
            break
        upsilon = fbar_k
        Q = tuple(Q_next)
    return trace


# ---------------------------------------------------------------------------
# DC baseline
# ---------------------------------------------------------------------------

def dca_run(problem: SmcProblem, x_init,
            delta: float = DELTA_DEFAULT, K_max: int = KMAX_DEFAULT,
            cfg: SolverConfig = DEFAULT_CONFIG) -> RunTrace:
    """Classic difference-of-convex iteration on the natural split.

    The concave part collects, per term, the sum of all components except
    the one left out by the best leave-one-out index (equivalently: except
    the smallest-index minimizer).  Its linearization uses the deterministic
    atom subgradients, and the convex part plus that linearization is
    minimized exactly over X.  The objective decreases monotonically.

    Trace rows store the true objective in both value columns; the gain and
    epsilon columns are zero by convention for this baseline.
    """
    x = np.asarray(x_init, dtype=float)
    if not problem.X.contains(x, tol=1e-7):
        raise ValueError("x_init must be feasible")
    trace = RunTrace(meta={"schedule": "DCA", "delta": delta, "K_max": K_max})
    oracle = OracleSolver(problem, cfg)
    ones = tuple(np.ones(n_s) for n_s in problem.sizes)
    inv_n = 1.0 / problem.N
    f_prev = np.inf
    for k in range(1, K_max + 1):
        t0 = time.perf_counter()
        g2 = np.zeros(problem.d)
        for s in range(problem.N):
            h = component_values(problem, x, s)
            keep_out = int(np.argmin(h))
            for l, atom in enumerate(problem.terms[s]):
                if l != keep_out:
                    g2 += inv_n * atom.subgradient(x)
        res = oracle.solve_weights(ones, extra_affine=-g2)
        x = res.x
        f_k = problem.hbar.value(x) + sum(
            float(component_values(problem, x, s).min())
            for s in range(problem.N)) * inv_n
        trace.rows.append(TraceRow(k, f_k, f_k, 0.0, 0.0,
                                   (time.perf_counter() - t0) * 1e3))
        trace.xs.append(x)
        if f_k < trace.f_best:
            trace.f_best = f_k
            trace.x_best = x.copy()
            trace.best_k = k
        if f_prev - f_k < delta:
            trace.termination = "tol"
            break
        f_prev = f_k
    return trace
