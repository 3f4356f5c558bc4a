"""Interval Markov chains: validation, transition-polytope vertices, marginal
polytopes, discrete distances and extreme rows for value iteration."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import CombinatorialCap, Infeasible

FEAS_TOL = 1e-12
VERTEX_STATE_CAP = 12
MARGINAL_CAP = 10**6


@dataclass(frozen=True, eq=False)
class Imc:
    """Lower/upper transition bounds over ``n_states`` states.

    When ``sink`` is true the last state is the out-of-domain sink: its row
    is absorbing and its label set is empty.  ``centers`` holds geometric cell
    centres for the non-sink states (used for transport costs).
    """

    lower: np.ndarray
    upper: np.ndarray
    labels: tuple[frozenset[str], ...]
    centers: np.ndarray | None = None
    sink: bool = True
    delta_cost: float | None = None

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float)
        hi = np.array(self.upper, dtype=float)
        if lo.ndim != 2 or lo.shape[0] != lo.shape[1] or lo.shape != hi.shape:
            raise ValueError("lower and upper must be equal-size square matrices")
        if len(self.labels) != lo.shape[0]:
            raise ValueError("one label set per state required")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "labels", tuple(frozenset(s) for s in self.labels))
        if self.centers is not None:
            c = np.array(self.centers, dtype=float)
            c.setflags(write=False)
            object.__setattr__(self, "centers", c)

    @property
    def n_states(self) -> int:
        return self.lower.shape[0]

    @property
    def sink_index(self) -> int | None:
        return self.n_states - 1 if self.sink else None

    def replace(self, lower=None, upper=None) -> Imc:
        return Imc(self.lower if lower is None else lower,
                   self.upper if upper is None else upper,
                   self.labels, self.centers, self.sink, self.delta_cost)


@dataclass
class ValidationReport:
    imc: Imc
    diagnostics: list[str] = field(default_factory=list)
    tightened: list[tuple[int, int, str, float, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.diagnostics


def tighten_rows(lower: np.ndarray, upper: np.ndarray):
    """One pass of coherence tightening on stacked rows.

    Raises :class:`Infeasible` when some row cannot carry a probability vector.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    s_lo = lower.sum(axis=-1, keepdims=True)
    s_hi = upper.sum(axis=-1, keepdims=True)
    bad = (s_hi < 1.0 - FEAS_TOL) | (s_lo > 1.0 + FEAS_TOL)
    if bad.any():
        rows = np.nonzero(bad.reshape(-1))[0]
        r = int(rows[0])
        raise Infeasible(
            f"row {r} has lower sum {float(s_lo.reshape(-1)[r])!r} and upper sum "
            f"{float(s_hi.reshape(-1)[r])!r}; no probability vector fits"
        )
    new_lo = np.maximum(lower, 1.0 - (s_hi - upper))
    new_hi = np.minimum(upper, 1.0 - (s_lo - lower))
    new_lo = np.clip(new_lo, 0.0, 1.0)
    new_hi = np.clip(new_hi, 0.0, 1.0)
    # rounding can cross the bounds by an ulp; keep the pair ordered
    new_lo = np.minimum(new_lo, new_hi)
    return new_lo, new_hi


def validate_imc(imc: Imc, report_tol: float = 1e-12) -> ValidationReport:
    """Check the IMC invariants and apply coherence tightening.

    Diagnostics list invariant violations; tightening changes larger than
    ``report_tol`` are listed separately as ``(row, col, which, old, new)``.
    """
    diags: list[str] = []
    lo, hi = imc.lower, imc.upper
    if np.any(lo < 0) or np.any(hi > 1):
        diags.append("bounds outside [0, 1]")
    if np.any(lo > hi):
        i, j = np.argwhere(lo > hi)[0]
        diags.append(f"lower > upper at ({i}, {j})")
    if imc.sink:
        d = imc.sink_index
        unit = np.zeros(imc.n_states)
        unit[d] = 1.0
        if not (np.array_equal(lo[d], unit) and np.array_equal(hi[d], unit)):
            diags.append("sink row is not absorbing")
        if "in" in imc.labels[d]:
            diags.append("sink label contains 'in'")
    new_lo, new_hi = tighten_rows(np.clip(lo, 0, 1), np.clip(hi, 0, 1))
    changes = []
    for which, old, new in (("lower", lo, new_lo), ("upper", hi, new_hi)):
        for i, j in np.argwhere(np.abs(new - old) > report_tol):
            changes.append((int(i), int(j), which, float(old[i, j]), float(new[i, j])))
    return ValidationReport(imc.replace(new_lo, new_hi), diags, changes)


# --- row polytope vertices ------------------------------------------------------


def _scaled_ints(values: Sequence[float]):
    fr = [Fraction(v) for v in values]
    den = max(f.denominator for f in fr) if fr else 1
    return [int(f * den) for f in fr], den


def row_vertices(lower_i: Sequence[float], upper_i: Sequence[float],
                 cap: int = VERTEX_STATE_CAP, exact: bool = False):
    """All vertices of ``{p : lower <= p <= upper, sum(p) = 1}``.

    A vertex has every coordinate at a bound except at most one (the pivot).
    Arithmetic is exact on the binary values of the inputs.  Returns tuples of
    :class:`Fraction` when ``exact`` is set, else float arrays.
    """
    n = len(lower_i)
    if len(upper_i) != n:
        raise ValueError("bound vectors differ in length")
    if n > cap:
        raise CombinatorialCap(f"vertex enumeration limited to {cap} states, row has {n}")
    ints, den = _scaled_ints(list(lower_i) + list(upper_i))
    lo, hi = ints[:n], ints[n:]
    one = den
    found: dict[tuple[int, ...], None] = {}
    for k in range(n):
        others = [j for j in range(n) if j != k]
        for choice in itertools.product((0, 1), repeat=n - 1):
            p = [0] * n
            total = 0
            for j, c in zip(others, choice):
                p[j] = hi[j] if c else lo[j]
                total += p[j]
            pk = one - total
            if lo[k] <= pk <= hi[k]:
                p[k] = pk
                found.setdefault(tuple(p), None)
    verts = sorted(found)
    if exact:
        return [tuple(Fraction(x, den) for x in v) for v in verts]
    return [np.array([x / den for x in v]) for v in verts]


def marginal_vertices(imc: Imc, mu0: Sequence[float], t: int,
                      cap: int = MARGINAL_CAP, exact: bool = False):
    """Images of ``mu0`` under every length-``t`` sequence of matrix vertices.

    Only rows in the support of the current distribution matter, so each step
    combines one row vertex per supported state.  Results are deduplicated.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = imc.n_states
    row_cache: dict[int, list] = {}

    def rows(i):
        if i not in row_cache:
            row_cache[i] = row_vertices(imc.lower[i], imc.upper[i], exact=True)
        return row_cache[i]

    current = {tuple(Fraction(x) for x in mu0)}
    for _ in range(t):
        nxt: set = set()
        for mu in current:
            support = [i for i in range(n) if mu[i] != 0]
            choices = [rows(i) for i in support]
            count = math.prod(len(c) for c in choices)
            if len(nxt) + count > cap:
                raise CombinatorialCap(f"marginal enumeration exceeds cap {cap}")
            for combo in itertools.product(*choices):
                acc = [Fraction(0)] * n
                for w, v in zip((mu[i] for i in support), combo):
                    for j in range(n):
                        if v[j]:
                            acc[j] += w * v[j]
                nxt.add(tuple(acc))
        current = nxt
    out = sorted(current)
    if exact:
        return out
    return [np.array([float(x) for x in v]) for v in out]


# --- distances -----------------------------------------------------------------


def tv_distance(mu, nu) -> float:
    """Discrete total variation as the plain l1 sum."""
    mu, nu = np.asarray(mu, dtype=float), np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise ValueError("dimension mismatch")
    return math.fsum(np.abs(mu - nu))


def cost_matrix(imc: Imc, delta_cost: float | None = None) -> np.ndarray:
    """Infinity-norm distances between cell centres; the sink sits at a fixed
    distance (``delta_cost``, default the IMC's recorded value) from every cell."""
    if imc.centers is None:
        raise ValueError("IMC carries no cell centres")
    c = imc.centers
    d = np.max(np.abs(c[:, None, :] - c[None, :, :]), axis=-1)
    if not imc.sink:
        return d
    dc = delta_cost if delta_cost is not None else imc.delta_cost
    if dc is None:
        raise ValueError("no transport cost configured for the sink")
    n = imc.n_states
    out = np.full((n, n), float(dc))
    out[:-1, :-1] = d
    out[-1, -1] = 0.0
    return out


def w1_discrete(mu, nu, cost) -> float:
    """Optimal transport cost between two discrete distributions (LP)."""
    mu, nu = np.asarray(mu, dtype=float), np.asarray(nu, dtype=float)
    cost = np.asarray(cost, dtype=float)
    src = np.nonzero(mu > 0)[0]
    dst = np.nonzero(nu > 0)[0]
    if len(src) == 0 or len(dst) == 0:
        return 0.0
    a, b = mu[src], nu[dst]
    b = b * (a.sum() / b.sum())  # absorb rounding so the LP stays feasible
    m, k = len(src), len(dst)
    if m == 1 or k == 1:
        return float(np.sum(cost[np.ix_(src, dst)] * (a[:, None] * b[None, :] / a.sum())))
    C = cost[np.ix_(src, dst)].ravel()
    A_eq = np.zeros((m + k, m * k))
    for i in range(m):
        A_eq[i, i * k:(i + 1) * k] = 1.0
    for j in range(k):
        A_eq[m + j, j::k] = 1.0
    res = linprog(C, A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


# --- extreme rows --------------------------------------------------------------


def extreme_rows(lower: np.ndarray, upper: np.ndarray, v: np.ndarray, mode: str) -> np.ndarray:
    """Rows ``p`` maximising (``mode='max'``) or minimising ``p @ v`` over
    each row polytope, by greedy filling in value order.  Works on stacked
    rows sharing the value vector ``v``."""
    lower = np.atleast_2d(np.asarray(lower, dtype=float))
    upper = np.atleast_2d(np.asarray(upper, dtype=float))
    v = np.asarray(v, dtype=float)
    if mode == "max":
        order = np.argsort(-v, kind="stable")
    elif mode == "min":
        order = np.argsort(v, kind="stable")
    else:
        raise ValueError("mode must be 'max' or 'min'")
    lo = lower[:, order]
    gaps = upper[:, order] - lo
    room = np.maximum(0.0, 1.0 - lo.sum(axis=1))
    before = np.cumsum(gaps, axis=1) - gaps
    add = np.clip(room[:, None] - before, 0.0, gaps)
    p = np.empty_like(lo)
    p[:, order] = lo + add
    return p


def extreme_row(lower_i, upper_i, v, mode: str) -> np.ndarray:
    return extreme_rows(lower_i, upper_i, v, mode)[0]


def row_gap(imc: Imc) -> float:
    """Largest per-row l1 width ``sum_j (upper - lower)``."""
    return float(np.max(np.sum(imc.upper - imc.lower, axis=1)))


def example_imc() -> Imc:
    """Three-state IMC with one uncertain row, used across tests and docs."""
    lo = np.array([[0.25, 0, 0.25], [0, 0, 1], [0, 1, 0]])
    hi = np.array([[0.75, 0, 0.75], [0, 0, 1], [0, 1, 0]])
    labels = (frozenset({"in", "a"}), frozenset({"in", "b"}), frozenset({"in", "c"}))
    return Imc(lo, hi, labels, sink=False)
