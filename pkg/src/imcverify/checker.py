"""Interval value iteration: per-state lower and upper satisfaction
probabilities against a time-varying adversary choosing a fresh transition
matrix from the IMC at every step."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence
from .imc import FEAS_TOL, Imc, extreme_rows
from .intervals import Interval
from .properties import BoundedUntil, Dfa, DfaSpec, Formula, Property, Safety, Until

DEFAULT_TOL = 1e-9
MAX_ITER = 10**6


@dataclass(frozen=True, eq=False)
class ProbInterval:
    """Per-state probability bounds ``lo <= hi``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.clip(np.asarray(self.lo, dtype=float), 0.0, 1.0)
        hi = np.clip(np.asarray(self.hi, dtype=float), 0.0, 1.0)
        # iterates of the two sides stop independently; never report lo > hi
        hi = np.maximum(hi, lo)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __len__(self) -> int:
        return len(self.lo)

    def __getitem__(self, i: int) -> Interval:
        return Interval(float(self.lo[i]), float(self.hi[i]))

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo


def state_mask(imc: Imc, formula: Formula) -> np.ndarray:
    return np.array([formula.holds(lab) for lab in imc.labels], dtype=bool)


def _step(lower, upper, rows, v, mode):
    p = extreme_rows(lower[rows], upper[rows], v, mode)
    return np.clip(p @ v, 0.0, 1.0)


def bounded_reach(lower, upper, A, B, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """``P(A U<=T B)`` bounds by backward iteration on masks."""
    rows = np.nonzero(A & ~B)[0]
    base = B.astype(float)
    lo, hi = base.copy(), base.copy()
    for _ in range(horizon):
        new_lo, new_hi = base.copy(), base.copy()
        if len(rows):
            new_lo[rows] = _step(lower, upper, rows, lo, "min")
            new_hi[rows] = _step(lower, upper, rows, hi, "max")
        lo, hi = new_lo, new_hi
    return lo, hi


def _backward(adj_rev, seeds, allowed):
    """States in ``allowed`` that reach ``seeds`` along edges (seeds included)."""
    seen = np.zeros(len(allowed), dtype=bool)
    seen[seeds] = True
    queue = deque(np.nonzero(seeds)[0].tolist())
    while queue:
        j = queue.popleft()
        for i in adj_rev[j]:
            if not seen[i] and allowed[i]:
                seen[i] = True
                queue.append(i)
    return seen


def _reverse_adjacency(support: np.ndarray):
    n = support.shape[0]
    rev = [[] for _ in range(n)]
    for i, j in zip(*np.nonzero(support)):
        rev[j].append(i)
    return rev


def _can_stay(lower, upper, rows, X):
    """For each row, whether some feasible distribution is supported in ``X``."""
    out = np.zeros(len(rows), dtype=bool)
    for k, i in enumerate(rows):
        out[k] = (not np.any(lower[i, ~X] > 0)) and upper[i, X].sum() >= 1.0 - FEAS_TOL
    return out


def qualitative_sets(lower, upper, A, B):
    """Prob-0 and prob-1 sets for the minimising and maximising adversary.

    Returns ``(lo0, lo1, hi0, hi1)`` boolean masks.
    """
    n = len(A)
    mid = A & ~B
    possible = upper > 0
    rev = _reverse_adjacency(possible)

    hi_pos = _backward(rev, B, mid)
    hi0 = ~hi_pos

    # largest set the minimiser can stay in forever without touching B
    Z = ~B.copy()
    while True:
        rows = np.nonzero(Z & mid)[0]
        stay = _can_stay(lower, upper, rows, Z)
        drop = rows[~stay]
        if len(drop) == 0:
            break
        Z[drop] = False
    lo0 = Z
    lo1 = ~_backward(rev, Z, mid) & (A | B)
    lo1 &= ~Z

    # maximiser: nested fixpoint, stay inside X while moving towards B
    X = np.ones(n, dtype=bool)
    X &= (A | B)
    while True:
        Y = B.copy()
        while True:
            grow = np.zeros(n, dtype=bool)
            for i in np.nonzero(X & mid & ~Y)[0]:
                if np.any(lower[i, ~X] > 0):
                    continue
                if upper[i, X].sum() < 1.0 - FEAS_TOL:
                    continue
                lo_in = lower[i, X].sum()
                room = np.minimum(upper[i], 1.0 - (lo_in - lower[i]))
                if np.any((room > 0) & Y & X):
                    grow[i] = True
            if not grow.any():
                break
            Y |= grow
        if np.array_equal(Y, X):
            break
        X = Y
    hi1 = X
    return lo0, lo1, hi0, hi1


def reach(lower, upper, A, B, tol=DEFAULT_TOL, max_iter=MAX_ITER):
    """Unbounded ``P(A U B)`` bounds on masks, iterating from below after
    qualitative preprocessing until the sup-norm change drops below ``tol``."""
    lo0, lo1, hi0, hi1 = qualitative_sets(lower, upper, A, B)
    lo = np.where(lo1, 1.0, 0.0)
    hi = np.where(hi1, 1.0, 0.0)
    lo_rows = np.nonzero(A & ~B & ~lo0 & ~lo1)[0]
    hi_rows = np.nonzero(A & ~B & ~hi0 & ~hi1)[0]
    for rows, v, mode in ((lo_rows, lo, "min"), (hi_rows, hi, "max")):
        if len(rows) == 0:
            continue
        for _ in range(max_iter):
            new = _step(lower, upper, rows, v, mode)
            delta = np.max(np.abs(new - v[rows]))
            v[rows] = np.maximum(new, v[rows])
            if delta < tol:
                break
        else:
            raise NonConvergence(f"{mode} value iteration did not settle within {max_iter} steps")
    return lo, hi


def bounded_until_interval(imc: Imc, prop: BoundedUntil) -> ProbInterval:
    A, B = state_mask(imc, prop.left), state_mask(imc, prop.right)
    return ProbInterval(*bounded_reach(imc.lower, imc.upper, A, B, prop.horizon))


def until_interval(imc: Imc, prop: Until, tol: float = DEFAULT_TOL,
                   max_iter: int = MAX_ITER) -> ProbInterval:
    A, B = state_mask(imc, prop.left), state_mask(imc, prop.right)
    return ProbInterval(*reach(imc.lower, imc.upper, A, B, tol, max_iter))


def safety_interval(imc: Imc, prop: Safety, tol: float = DEFAULT_TOL,
                    max_iter: int = MAX_ITER) -> ProbInterval:
    """Probability of staying in the safe set, via reaching its complement."""
    unsafe = ~state_mask(imc, prop.safe)
    every = np.ones(imc.n_states, dtype=bool)
    if prop.horizon is None:
        lo, hi = reach(imc.lower, imc.upper, every, unsafe, tol, max_iter)
    else:
        lo, hi = bounded_reach(imc.lower, imc.upper, every, unsafe, prop.horizon)
    return ProbInterval(1.0 - hi, 1.0 - lo)


def product(imc: Imc, dfa: Dfa):
    """Reachable product of the IMC with a DFA reading successor labels.

    Returns ``(lower, upper, accepting, entry)`` where ``entry[q]`` is the
    product index of the start pair for cell ``q``.
    """
    n = imc.n_states
    d_index = {d: k for k, d in enumerate(dfa.states)}
    label_step: dict[tuple[str, frozenset], str] = {}

    def step(d, q):
        key = (d, imc.labels[q])
        if key not in label_step:
            label_step[key] = dfa.step(d, imc.labels[q])
        return label_step[key]

    pairs: dict[tuple[int, int], int] = {}
    order: list[tuple[int, int]] = []

    def intern(q, d):
        key = (q, d_index[d])
        if key not in pairs:
            pairs[key] = len(order)
            order.append(key)
        return pairs[key]

    entry = np.array([intern(q, step(dfa.initial, q)) for q in range(n)])
    succ: list[np.ndarray] = []
    k = 0
    while k < len(order):
        q, di = order[k]
        d = dfa.states[di]
        succ.append(np.array([intern(q2, step(d, q2)) for q2 in range(n)]))
        k += 1
    m = len(order)
    lower = np.zeros((m, m))
    upper = np.zeros((m, m))
    for s, (q, _) in enumerate(order):
        np.add.at(lower[s], succ[s], imc.lower[q])
        np.add.at(upper[s], succ[s], imc.upper[q])
    accepting = np.array([dfa.states[di] in dfa.accepting for _, di in order])
    return lower, upper, accepting, entry


def dfa_product_interval(imc: Imc, dfa: Dfa, tol: float = DEFAULT_TOL,
                         max_iter: int = MAX_ITER) -> ProbInterval:
    lower, upper, accepting, entry = product(imc, dfa)
    every = np.ones(len(accepting), dtype=bool)
    lo, hi = reach(lower, upper, every, accepting, tol, max_iter)
    return ProbInterval(lo[entry], hi[entry])


def check_property(imc: Imc, prop: Property, tol: float = DEFAULT_TOL) -> ProbInterval:
    if isinstance(prop, BoundedUntil):
        return bounded_until_interval(imc, prop)
    if isinstance(prop, Until):
        return until_interval(imc, prop, tol)
    if isinstance(prop, Safety):
        return safety_interval(imc, prop, tol)
    if isinstance(prop, DfaSpec):
        return dfa_product_interval(imc, prop.dfa, tol)
    raise TypeError(f"unsupported property {prop!r}")


_OPS = ("ge", "gt", "le", "lt")


def winning_region(iv: ProbInterval, rho: float, op: str = "ge"):
    """Split states into those whose whole interval satisfies ``p op rho``,
    those where no point does, and the rest.  ``op`` is one of
    ``ge``, ``gt``, ``le``, ``lt`` (or the symbols ``>=``, ``>``, ``<=``, ``<``)."""
    op = {">=": "ge", ">": "gt", "<=": "le", "<": "lt"}.get(op, op)
    if op not in _OPS:
        raise ValueError(f"unknown comparison {op!r}")
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    lo, hi = iv.lo, iv.hi
    if op == "ge":
        good, bad = lo >= rho, hi < rho
    elif op == "gt":
        good, bad = lo > rho, hi <= rho
    elif op == "le":
        good, bad = hi <= rho, lo > rho
    else:
        good, bad = hi < rho, lo >= rho
    idx = np.arange(len(lo))
    return (set(idx[good].tolist()), set(idx[bad].tolist()),
            set(idx[~good & ~bad].tolist()))
