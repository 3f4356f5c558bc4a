"""Monte Carlo simulation of the stopped process and statistical checks.

Randomness is counter based: paths are grouped in fixed-size blocks and block
``c`` draws from ``Philox(key=(seed, 2c + stream))``.  A path's noise is
therefore fixed by ``(seed, path index, horizon)`` and does not change when
more paths are requested.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.stats import beta

from .errors import TruncationWarning, ValidationError
from .expr import eval_point
from .intervals import Interval
from .properties import BoundedUntil, DfaSpec, Property, Safety, Until
from .system import Partition, SystemSpec

BLOCK = 1024
_NOISE, _PERTURB = 0, 1


@dataclass(frozen=True)
class PerturbationPolicy:
    """How the bounded disturbance ``xi_t`` is chosen along a path.

    ``none``: ``xi = 0``.  ``corner``: a fixed point ``direction`` of the unit
    box.  ``random``: ``xi`` uniform on the unit box, fresh each step.
    ``two_point``: ``xi = points[0]`` with probability ``p``, else
    ``points[1]``, fresh each step, with mean norm at most one.
    """

    kind: str = "none"
    direction: tuple[float, ...] = ()
    p: float = 0.0
    points: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        if self.kind not in ("none", "corner", "random", "two_point"):
            raise ValueError(f"unknown perturbation policy {self.kind!r}")
        if self.kind == "corner":
            if not self.direction or max(abs(d) for d in self.direction) > 1:
                raise ValueError("corner direction must lie in the unit box")
        if self.kind == "two_point":
            if len(self.points) != 2 or not 0.0 <= self.p <= 1.0:
                raise ValueError("two_point needs two points and p in [0, 1]")
            mean_norm = (self.p * max(abs(v) for v in self.points[0])
                         + (1 - self.p) * max(abs(v) for v in self.points[1]))
            if mean_norm > 1.0 + 1e-12:
                raise ValueError(f"expected norm {mean_norm} exceeds 1")

    @classmethod
    def none(cls) -> PerturbationPolicy:
        return cls("none")

    @classmethod
    def corner(cls, direction: Sequence[float]) -> PerturbationPolicy:
        return cls("corner", direction=tuple(float(d) for d in direction))

    @classmethod
    def random(cls) -> PerturbationPolicy:
        return cls("random")

    @classmethod
    def two_point(cls, p: float, a: Sequence[float], b: Sequence[float]) -> PerturbationPolicy:
        return cls("two_point", p=float(p), points=(tuple(map(float, a)), tuple(map(float, b))))

    def describe(self) -> str:
        if self.kind == "corner":
            return f"corner{list(self.direction)}"
        if self.kind == "two_point":
            return f"two_point(p={self.p}, {list(self.points[0])}, {list(self.points[1])})"
        return self.kind

    def sample(self, u: np.ndarray, n: int) -> np.ndarray:
        """Map uniforms ``u`` of shape ``(..., n)`` to disturbances."""
        shape = u.shape[:-1] + (n,)
        if self.kind == "none":
            return np.zeros(shape)
        if self.kind == "corner":
            return np.broadcast_to(np.asarray(self.direction), shape).copy()
        if self.kind == "random":
            return 2.0 * u - 1.0
        pick = u[..., :1] < self.p
        return np.where(pick, np.asarray(self.points[0]), np.asarray(self.points[1]))


@dataclass(frozen=True)
class TraceSample:
    states: tuple[int, ...]
    stopped: bool
    horizon: int


@dataclass(frozen=True, eq=False)
class TraceBatch:
    """Cell-index traces, one row per path; the sink index repeats after a stop."""

    states: np.ndarray
    stopped: np.ndarray
    stop_time: np.ndarray
    sink: int

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    def __iter__(self) -> Iterator[TraceSample]:
        for row, s in zip(self.states, self.stopped):
            yield TraceSample(tuple(int(x) for x in row), bool(s), self.horizon)

    def to_lines(self) -> list[str]:
        return [",".join(str(int(x)) for x in row) for row in self.states]


def _block_draws(seed: int, block: int, horizon: int, n: int, k: int, need_u: bool):
    gn = np.random.Generator(np.random.Philox(key=[seed, 2 * block + _NOISE]))
    w = gn.standard_normal((BLOCK, horizon, k))
    u = None
    if need_u:
        gp = np.random.Generator(np.random.Philox(key=[seed, 2 * block + _PERTURB]))
        u = gp.random((BLOCK, horizon, n))
    return w, u


def _group_blocks(horizon: int, n: int, k: int) -> int:
    # keep one group's random draws around 128 MB
    per_block = BLOCK * max(horizon, 1) * (n + k) * 8
    return int(max(1, min(64, (1 << 27) // per_block)))


def _simulate_groups(spec: SystemSpec, partition: Partition, x0, horizon: int, count: int,
                     policy: PerturbationPolicy, seed: int, theta: float):
    """Yield ``(first_path, states, stop_time)`` for consecutive path groups."""
    n, k = spec.n, spec.k
    sink = partition.sink
    start_cell = partition.locate(x0)
    need_u = theta > 0 and policy.kind in ("random", "two_point")
    active_b = [(i, c, spec.b[i][c]) for i in range(n) for c in range(k) if not spec.b[i][c].is_zero()]
    n_blocks = math.ceil(count / BLOCK)
    per_group = _group_blocks(horizon, n, k)
    for g0 in range(0, n_blocks, per_group):
        blocks = range(g0, min(n_blocks, g0 + per_group))
        draws = [_block_draws(seed, blk, horizon, n, k, need_u) for blk in blocks]
        w = np.concatenate([d[0] for d in draws])
        u = np.concatenate([d[1] for d in draws]) if need_u else None
        first = g0 * BLOCK
        m = min(len(w), count - first)
        w = w[:m]
        if u is not None:
            u = u[:m]
        X = np.tile(x0, (m, 1))
        idx = np.arange(m)
        cells = np.full(m, start_cell, dtype=np.int32)
        states = np.empty((m, horizon + 1), dtype=np.int32)
        states[:, 0] = cells
        stop_time = np.full(m, -1, dtype=np.int32)
        for t in range(horizon):
            if len(idx):
                Xa = X[idx]
                cols = [Xa[:, i] for i in range(n)]
                step = np.empty_like(Xa)
                for i, e in enumerate(spec.f):
                    step[:, i] = eval_point(e, cols)
                wa = w[idx, t, :]
                for i, c, e in active_b:
                    step[:, i] += eval_point(e, cols) * wa[:, c]
                if theta > 0 and policy.kind != "none":
                    ua = u[idx, t, :] if u is not None else np.zeros((len(idx), n))
                    step += theta * policy.sample(ua, n)
                X[idx] = step
                new_cells = partition.locate_many(step)
                cells[idx] = new_cells
                exited = new_cells == sink
                stop_time[idx[exited]] = t + 1
                idx = idx[~exited]
            states[:, t + 1] = cells
        yield first, states, stop_time


def simulate_paths(spec: SystemSpec, partition: Partition, x0: Sequence[float], horizon: int,
                   count: int, policy: PerturbationPolicy | None = None, seed: int = 0,
                   theta: float | None = None) -> TraceBatch:
    """Simulate ``count`` stopped paths of length ``horizon`` from ``x0``.

    ``theta`` overrides the system's perturbation intensity.
    """
    x0, policy, th = _check_run(spec, x0, horizon, count, seed, policy, theta)
    states = np.empty((count, horizon + 1), dtype=np.int32)
    stop_time = np.empty(count, dtype=np.int32)
    for first, st, tau in _simulate_groups(spec, partition, x0, horizon, count, policy, seed, th):
        states[first:first + len(st)] = st
        stop_time[first:first + len(st)] = tau
    return TraceBatch(states, stop_time >= 0, stop_time, partition.sink)


def _check_run(spec, x0, horizon, count, seed, policy, theta):
    if count < 1:
        raise ValueError("count must be positive")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (spec.n,) or not spec.W.contains(x0):
        raise ValidationError(f"initial state {x0.tolist()} must lie in W", key="x0")
    policy = policy or PerturbationPolicy.none()
    th = spec.theta if theta is None else float(theta)
    return x0, policy, th


# --- property evaluation on traces ---------------------------------------------------


def _masks(formula, labels):
    return np.array([formula.holds(lab) for lab in labels], dtype=bool)


def _until_hits(states, A, B, horizon):
    """Per trace, whether ``A U<=horizon B`` holds on the recorded prefix."""
    sa, sb = A[states[:, :horizon + 1]], B[states[:, :horizon + 1]]
    ok = np.zeros(states.shape[0], dtype=bool)
    still = np.ones(states.shape[0], dtype=bool)
    for t in range(sa.shape[1]):
        ok |= still & sb[:, t]
        still &= sa[:, t] & ~sb[:, t]
    return ok


def trace_satisfaction(batch: TraceBatch, prop: Property, labels) -> tuple[np.ndarray, bool]:
    """Boolean satisfaction per trace and whether the verdict was truncated."""
    S = batch.states
    T = batch.horizon
    if isinstance(prop, BoundedUntil):
        if prop.horizon > T:
            raise ValueError(f"traces of length {T} cannot decide horizon {prop.horizon}")
        return _until_hits(S, _masks(prop.left, labels), _masks(prop.right, labels), prop.horizon), False
    if isinstance(prop, Until):
        return _until_hits(S, _masks(prop.left, labels), _masks(prop.right, labels), T), True
    if isinstance(prop, Safety):
        safe = _masks(prop.safe, labels)
        h = T if prop.horizon is None else prop.horizon
        if h > T:
            raise ValueError(f"traces of length {T} cannot decide horizon {h}")
        return safe[S[:, :h + 1]].all(axis=1), prop.horizon is None
    if isinstance(prop, DfaSpec):
        dfa = prop.dfa
        cache: dict = {}
        out = np.zeros(len(S), dtype=bool)
        for r, row in enumerate(S):
            d = dfa.initial
            for q in row:
                key = (d, int(q))
                if key not in cache:
                    cache[key] = dfa.step(d, labels[q])
                d = cache[key]
                if d in dfa.accepting:
                    out[r] = True
                    break
        return out, True
    raise TypeError(f"unsupported property {prop!r}")


def clopper_pearson(successes: int, n: int, confidence: float = 0.95) -> Interval:
    if n <= 0 or not 0 <= successes <= n:
        raise ValueError("need 0 <= successes <= n and n > 0")
    alpha = 1.0 - confidence
    lo = 0.0 if successes == 0 else float(beta.ppf(alpha / 2, successes, n - successes + 1))
    hi = 1.0 if successes == n else float(beta.ppf(1 - alpha / 2, successes + 1, n - successes))
    return Interval(lo, hi)


@dataclass(frozen=True)
class Estimate:
    point: float
    ci: Interval
    successes: int
    n: int
    confidence: float
    truncated: bool = False
    horizon: int | None = None


def estimate_probability(batch: TraceBatch, prop: Property, labels,
                         confidence: float = 0.95) -> Estimate:
    """Fraction of satisfying traces with a Clopper-Pearson interval.

    Unbounded properties are judged on the recorded prefix only; a
    :class:`TruncationWarning` is emitted in that case.
    """
    sat, truncated = trace_satisfaction(batch, prop, labels)
    k, n = int(sat.sum()), len(sat)
    if truncated:
        warnings.warn(f"unbounded property judged on {batch.horizon}-step prefixes",
                      TruncationWarning, stacklevel=2)
    return Estimate(k / n, clopper_pearson(k, n, confidence), k, n, confidence,
                    truncated, batch.horizon)


def property_horizon(prop: Property) -> int | None:
    """Trace length that decides ``prop`` exactly, or ``None`` if unbounded."""
    if isinstance(prop, BoundedUntil):
        return prop.horizon
    if isinstance(prop, Safety):
        return prop.horizon
    return None


def monte_carlo(spec: SystemSpec, partition: Partition, x0, prop: Property, count: int,
                seed: int, policy: PerturbationPolicy | None = None, confidence: float = 0.95,
                horizon: int | None = None, theta: float | None = None) -> Estimate:
    """Streaming estimate: paths are simulated and judged group by group, so
    large path counts never hold all traces in memory."""
    h = property_horizon(prop)
    truncated = h is None
    if truncated:
        if horizon is None:
            raise ValueError("unbounded property needs an explicit truncation horizon")
        h = horizon
    x0, policy, th = _check_run(spec, x0, h, count, seed, policy, theta)
    labels = partition.all_labels
    hits = 0
    for _, st, tau in _simulate_groups(spec, partition, x0, h, count, policy, seed, th):
        sat, _ = trace_satisfaction(TraceBatch(st, tau >= 0, tau, partition.sink), prop, labels)
        hits += int(sat.sum())
    if truncated:
        warnings.warn(f"unbounded property judged on {h}-step prefixes",
                      TruncationWarning, stacklevel=2)
    return Estimate(hits / count, clopper_pearson(hits, count, confidence), hits, count,
                    confidence, truncated, h)


def estimate_unbounded(spec, partition, x0, prop: Property, count: int, seed: int,
                       policy: PerturbationPolicy | None = None, confidence: float = 0.95,
                       start_horizon: int = 16, max_horizon: int = 4096,
                       change_tol: float = 1e-3, theta: float | None = None) -> Estimate:
    """Estimate an unbounded property by doubling the truncation horizon until
    the point estimate moves by less than ``change_tol``."""
    horizon = start_horizon
    prev = None
    while True:
        batch = simulate_paths(spec, partition, x0, horizon, count, policy, seed, theta)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            est = estimate_probability(batch, prop, partition.all_labels, confidence)
        if prev is not None and abs(est.point - prev.point) < change_tol:
            break
        if horizon >= max_horizon:
            break
        prev = est
        horizon *= 2
    warnings.warn(f"unbounded property estimated on {horizon}-step prefixes",
                  TruncationWarning, stacklevel=2)
    return est


PASS, INCONCLUSIVE, FAIL = "PASS", "INCONCLUSIVE", "FAIL"


def soundness_check(mc_ci: Interval, imc_iv: Interval, slack: float = 0.0) -> str:
    """Compare a Monte Carlo interval with an abstraction interval."""
    lo, hi = imc_iv.lo - slack, imc_iv.hi + slack
    if lo <= mc_ci.lo and mc_ci.hi <= hi:
        return PASS
    if mc_ci.hi < lo or mc_ci.lo > hi:
        return FAIL
    return INCONCLUSIVE
