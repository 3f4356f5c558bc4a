"""Independent reference computations used by the tests.

Nothing here calls into the package under test; each oracle recomputes its
quantity by a different route (quadrature, enumeration, dense grids, LP
vertices).
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import mpmath
import numpy as np


# --- Gaussian masses ---------------------------------------------------------------


def normal_mass_quad(m: float, s: float, a: float, b: float) -> float:
    """``P(a <= N(m, s^2) <= b)`` by adaptive quadrature of the density."""
    if s == 0.0:
        return float(a <= m <= b)
    lo, hi = max(a, m - 40 * s), min(b, m + 40 * s)
    if lo >= hi:
        return 0.0
    with mpmath.workdps(30):
        pdf = lambda x: mpmath.exp(-((x - m) / s) ** 2 / 2) / (s * mpmath.sqrt(2 * mpmath.pi))
        pts = sorted({lo, hi, *(x for x in (m - s, m, m + s) if lo < x < hi)})
        return float(mpmath.quad(pdf, pts))


def normal_mass_erf(m: float, s: float, a: float, b: float) -> float:
    """Same quantity through the error function at 30 digits."""
    if s == 0.0:
        return float(a <= m <= b)
    with mpmath.workdps(30):
        r = mpmath.sqrt(2) * s
        return float((mpmath.erf((b - m) / r) - mpmath.erf((a - m) / r)) / 2)


# --- polytope vertices and adversaries --------------------------------------------------


def ordering_vertices(lower, upper):
    """Row polytope vertices by filling states to their upper bounds in every order."""
    lo = [Fraction(x) for x in lower]
    hi = [Fraction(x) for x in upper]
    out = set()
    for order in itertools.permutations(range(len(lo))):
        p = list(lo)
        rest = 1 - sum(lo)
        for i in order:
            add = min(hi[i] - lo[i], rest)
            p[i] += add
            rest -= add
        if rest == 0:
            out.add(tuple(p))
    return sorted(out)


def _bounded_reach_dp(lower, upper, A, B, T, pick):
    n = len(A)
    verts = [ordering_vertices(lower[i], upper[i]) for i in range(n)]
    v = [Fraction(int(b)) for b in B]
    for _ in range(T):
        new = []
        for i in range(n):
            if B[i]:
                new.append(Fraction(1))
            elif not A[i]:
                new.append(Fraction(0))
            else:
                new.append(pick(sum(p[j] * v[j] for j in range(n)) for p in verts[i]))
        v = new
    return [float(x) for x in v]


def bounded_reach_vertex_dp(lower, upper, A, B, T):
    """Backward recursion taking the extreme over every row vertex (exact rationals)."""
    return (_bounded_reach_dp(lower, upper, A, B, T, min),
            _bounded_reach_dp(lower, upper, A, B, T, max))


def bounded_reach_sequences(lower, upper, A, B, T, q0, limit=200000):
    """Exhaustive search over all length-``T`` sequences of matrix vertices.

    Returns ``None`` when the number of sequences exceeds ``limit``.  The
    probability for a fixed sequence is propagated forward from ``q0`` with
    ``B`` made absorbing-and-counted and states outside ``A`` killed.
    """
    n = len(A)
    verts = [ordering_vertices(lower[i], upper[i]) if A[i] and not B[i] else [None]
             for i in range(n)]
    mats = list(itertools.product(*verts))
    if len(mats) ** T > limit:
        return None
    best_lo, best_hi = None, None
    for seq in itertools.product(mats, repeat=T):
        mass = [Fraction(0)] * n
        mass[q0] = Fraction(1)
        hit = Fraction(0)
        for mat in seq:
            hit += sum(mass[i] for i in range(n) if B[i])
            nxt = [Fraction(0)] * n
            for i in range(n):
                if mass[i] and A[i] and not B[i]:
                    for j in range(n):
                        nxt[j] += mass[i] * mat[i][j]
            mass = nxt
        hit += sum(mass[i] for i in range(n) if B[i])
        best_lo = hit if best_lo is None else min(best_lo, hit)
        best_hi = hit if best_hi is None else max(best_hi, hit)
    if T == 0:
        best_lo = best_hi = Fraction(int(B[q0]))
    return float(best_lo), float(best_hi)


def bounded_reach_matrix_power(P, A, B, T):
    """Bounded until on a Markov chain via powers of an augmented matrix."""
    n = P.shape[0]
    M = np.zeros((n + 2, n + 2))
    win, lose = n, n + 1
    for i in range(n):
        if B[i]:
            M[i, win] = 1.0
        elif not A[i]:
            M[i, lose] = 1.0
        else:
            M[i, :n] = P[i]
    M[win, win] = M[lose, lose] = 1.0
    # B states reached at the last step still count: one extra absorbing hop
    return np.linalg.matrix_power(M, T + 1)[:n, win]


# --- transport ---------------------------------------------------------------------------


def w1_transport_vertices(mu, nu, cost):
    """Optimal transport cost by enumerating basic solutions of the transport polytope."""
    mu, nu, cost = np.asarray(mu, float), np.asarray(nu, float), np.asarray(cost, float)
    n, m = len(mu), len(nu)
    rows = []
    for i in range(n):
        r = np.zeros(n * m)
        r[i * m:(i + 1) * m] = 1
        rows.append(r)
    for j in range(m):
        r = np.zeros(n * m)
        r[j::m] = 1
        rows.append(r)
    Aeq = np.array(rows)[:-1]  # one marginal constraint is redundant
    rhs = np.concatenate([mu, nu])[:-1]
    k = Aeq.shape[0]
    best = math.inf
    for basis in itertools.combinations(range(n * m), k):
        Bm = Aeq[:, basis]
        if abs(np.linalg.det(Bm)) < 1e-12:
            continue
        xb = np.linalg.solve(Bm, rhs)
        if np.all(xb >= -1e-12):
            best = min(best, float(cost.ravel()[list(basis)] @ xb))
    return best


def w1_sorted_samples(m1, s1, m2, s2, n, rng):
    """Monotone-coupling estimate of the 1-D Wasserstein distance and its std error.

    Both sorted samples are driven by one normal draw, so pairs are exact
    quantile couplings and the mean of ``|x - y|`` is unbiased.  Sorting two
    independent samples would estimate the empirical distance instead, which
    is biased upward by order ``1 / sqrt(n)``.
    """
    z = np.sort(rng.standard_normal(n))
    x = m1 + s1 * z
    y = m2 + s2 * z
    d = np.abs(x - y)
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(n))


# --- dense-grid transfer operator ----------------------------------------------------------


def linear_1d_reach(a, s, lo, hi, goal, T, x0, M=4000):
    """``P(reach goal within T)`` for ``X+ = a X + s w`` stopped on leaving ``[lo, hi]``.

    Dense-grid backward recursion on midpoints; exit is absorbing failure.
    """
    from scipy.special import ndtr

    e = np.linspace(lo, hi, M + 1)
    c = 0.5 * (e[:-1] + e[1:])
    g = (c >= goal[0]) & (c <= goal[1])

    def kernel(x):
        mu = a * np.asarray(x)[:, None]
        return ndtr((e[1:] - mu) / s) - ndtr((e[:-1] - mu) / s)

    if goal[0] <= x0 <= goal[1]:
        return 1.0
    K = kernel(c)
    v = g.astype(float)
    for _ in range(T - 1):
        v = np.where(g, 1.0, K @ v)
    return float(kernel([x0])[0] @ v)


def linear_1d_exit(a, s, lo, hi, T, x0, M=4000):
    """``P(leave [lo, hi] within T steps)`` for ``X+ = a X + s w``."""
    from scipy.special import ndtr

    e = np.linspace(lo, hi, M + 1)
    c = 0.5 * (e[:-1] + e[1:])

    def stay(x):
        mu = a * np.asarray(x)[:, None]
        return ndtr((e[1:] - mu) / s) - ndtr((e[:-1] - mu) / s)

    K = stay(c)
    v = np.ones(M)
    for _ in range(T - 1):
        v = K @ v
    return 1.0 - float(stay([x0])[0] @ v)
