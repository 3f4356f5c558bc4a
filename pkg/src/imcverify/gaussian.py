"""Bounds on Gaussian box probabilities under interval-valued mean and variance.

All box computations factor over axes (diagonal covariance).  Along one axis
the probability ``g(m, s) = P(a <= m + s Z <= b)`` is extremised exactly:

* over ``m`` it is symmetric and unimodal around the target midpoint, so the
  maximum sits at the midpoint clamped into ``[m]`` and the minimum at the
  endpoint of ``[m]`` farther from it;
* over ``s`` it is decreasing when ``m`` lies inside the target, otherwise it
  rises then falls with a single stationary point
  ``s*^2 = (b'^2 - a'^2) / (2 ln(|b'| / |a'|))`` where ``a' = a - m``,
  ``b' = b - m``.

Candidates are cross-checked against a 64-point parameter grid and the final
bounds are padded outward by ``PAD``.  Targets more than ``_BAND`` standard
deviations from every admissible mean hold less than ``_TAIL_PAD`` mass; their
bounds are padded by that amount instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .intervals import Interval, IntervalBox

PAD = 1e-9
_GRID = 64
_BAND = 12.0  # standard deviations beyond which the grid cross-check is skipped
_TAIL_PAD = 1e-30  # exceeds the normal mass beyond _BAND deviations (about 2e-33)


@dataclass(frozen=True)
class GaussianIntervalParams:
    """Axis-wise mean and variance intervals of a diagonal Gaussian family."""

    mean: IntervalBox
    var: tuple[Interval, ...]

    def __post_init__(self):
        var = tuple(v if isinstance(v, Interval) else Interval(*v) for v in self.var)
        if len(var) != len(self.mean):
            raise ValueError("mean and variance dimensions differ")
        if any(v.lo < 0 for v in var):
            raise ValueError("variance interval with negative lower bound")
        object.__setattr__(self, "var", var)


@dataclass(frozen=True)
class GaussianPoint:
    """A single Gaussian with diagonal covariance."""

    mean: tuple[float, ...]
    var: tuple[float, ...]

    def __post_init__(self):
        mean = tuple(float(x) for x in self.mean)
        var = tuple(float(x) for x in self.var)
        if len(mean) != len(var):
            raise ValueError("mean and variance dimensions differ")
        if any(v < 0 for v in var):
            raise ValueError("negative variance")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)


def std_normal_mass(lo, hi):
    """``P(lo <= Z <= hi)`` for standard normal ``Z``, accurate in both tails."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    # reflect right-tail intervals into the left tail where ndtr is precise
    flip = lo > 0
    x = np.where(flip, -hi, lo)
    y = np.where(flip, -lo, hi)
    return np.clip(ndtr(y) - ndtr(x), 0.0, 1.0)


def _inside(m, a, b, closed):
    """Indicator of ``m`` in ``[a, b)`` (or ``[a, b]`` where ``closed``)."""
    return (m >= a) & np.where(closed, m <= b, m < b)


def _mass(m, s, a, b, closed):
    """``g(m, s)`` with the point-mass convention at ``s = 0``."""
    if np.ndim(s) == 0:
        if s > 0:
            return std_normal_mass((a - m) / s, (b - m) / s)
        return np.broadcast_to(_inside(m, a, b, closed), np.broadcast(m, a).shape).astype(float)
    m, s, a, b = np.broadcast_arrays(*(np.asarray(z, dtype=float) for z in (m, s, a, b)))
    pos = s > 0
    safe = np.where(pos, s, 1.0)
    val = std_normal_mass((a - m) / safe, (b - m) / safe)
    return np.where(pos, val, _inside(m, a, b, closed).astype(float))


def _stationary_s(m, a, b, s_lo, s_hi):
    """Clamp of the stationary point in ``s`` where it exists, else ``s_hi``."""
    ap, bp = a - m, b - m
    same_sign = ((ap > 0) & (bp > 0)) | ((ap < 0) & (bp < 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.abs(bp) / np.abs(ap)
        s2 = (bp * bp - ap * ap) / (2.0 * np.log(ratio))
    ok = same_sign & np.isfinite(s2) & (s2 > 0)
    s_star = np.sqrt(np.where(ok, s2, s_hi * s_hi))
    return np.clip(s_star, s_lo, s_hi)


def axis_bounds(m: Interval, v: Interval, a, b, closed=None, grid_check: bool = True):
    """Bounds on ``P(N(m, v) in [a_j, b_j))`` over ``m in [m]``, ``v in [v]``.

    ``a``, ``b`` are arrays of target endpoints; ``closed`` marks targets whose
    upper end is included.  Returns ``(lo, hi)`` arrays.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    closed = np.zeros(a.shape, dtype=bool) if closed is None else np.broadcast_to(
        np.asarray(closed, dtype=bool), a.shape)
    m_lo, m_hi = m.lo, m.hi
    s_lo, s_hi = float(np.sqrt(max(v.lo, 0.0))), float(np.sqrt(max(v.hi, 0.0)))

    if s_hi == 0.0:
        # Dirac family: exact indicators, no padding
        lo = np.minimum(_inside(m_lo, a, b, closed), _inside(m_hi, a, b, closed))
        hit = (m_hi >= a) & np.where(closed, m_lo <= b, m_lo < b)
        return lo.astype(float), hit.astype(float)

    mid = 0.5 * (a + b)
    m_star = np.clip(mid, m_lo, m_hi)
    m_far = np.where(np.abs(m_lo - mid) >= np.abs(m_hi - mid), m_lo, m_hi)

    s_star = _stationary_s(m_star, a, b, s_lo, s_hi)
    hi = np.maximum(_mass(m_star, s_hi, a, b, closed), _mass(m_star, s_star, a, b, closed))
    lo = _mass(m_far, s_hi, a, b, closed)
    if s_lo > 0.0:
        hi = np.maximum(hi, _mass(m_star, s_lo, a, b, closed))
        lo = np.minimum(lo, _mass(m_far, s_lo, a, b, closed))
    else:
        touch = (m_hi >= a) & (m_lo <= b)
        hi = np.maximum(hi, touch.astype(float))
        lo = np.minimum(lo, np.minimum(_inside(m_lo, a, b, closed), _inside(m_hi, a, b, closed)))

    band = (b >= m_lo - _BAND * s_hi) & (a <= m_hi + _BAND * s_hi)
    if grid_check and band.any():
        g_lo, g_hi = _grid_extremes(m_lo, m_hi, s_lo, s_hi, a[band], b[band], closed[band])
        lo[band] = np.minimum(lo[band], g_lo)
        hi[band] = np.maximum(hi[band], g_hi)

    pad = np.where(band, PAD, _TAIL_PAD)
    return np.clip(lo - pad, 0.0, 1.0), np.clip(hi + pad, 0.0, 1.0)


def _param_grid(m_lo, m_hi, s_lo, s_hi):
    m_flat, s_flat = m_lo == m_hi, s_lo == s_hi
    if m_flat and s_flat:
        return np.array([m_lo]), np.array([s_lo])
    if m_flat:
        return np.full(_GRID, m_lo), np.linspace(s_lo, s_hi, _GRID)
    if s_flat:
        return np.linspace(m_lo, m_hi, _GRID), np.full(_GRID, s_lo)
    side = int(round(np.sqrt(_GRID)))
    mm, ss = np.meshgrid(np.linspace(m_lo, m_hi, side), np.linspace(s_lo, s_hi, side))
    return mm.ravel(), ss.ravel()


def _grid_extremes(m_lo, m_hi, s_lo, s_hi, a, b, closed):
    """Min and max of ``g`` over the parameter grid for each target.

    Targets that tile an axis share endpoints, so the normal CDF is evaluated
    once per distinct endpoint and grid point.
    """
    mg, sg = _param_grid(m_lo, m_hi, s_lo, s_hi)
    ends, inv = np.unique(np.concatenate([a, b]), return_inverse=True)
    ia, ib = inv[:len(a)], inv[len(a):]
    pos = sg > 0
    g_min = np.full(len(a), np.inf)
    g_max = np.full(len(a), -np.inf)
    if pos.any():
        z = (ends[:, None] - mg[None, pos]) / sg[None, pos]
        cdf = ndtr(z)
        sf = ndtr(-z)
        # pick the tail-accurate difference per (target, grid point)
        left = cdf[ib] - cdf[ia]
        right = sf[ia] - sf[ib]
        G = np.where(z[ia] > 0, right, left)
        g_min = np.minimum(g_min, G.min(axis=1))
        g_max = np.maximum(g_max, G.max(axis=1))
    if (~pos).any():
        G = _inside(mg[None, ~pos], a[:, None], b[:, None], closed[:, None]).astype(float)
        g_min = np.minimum(g_min, G.min(axis=1))
        g_max = np.maximum(g_max, G.max(axis=1))
    return np.clip(g_min, 0.0, 1.0), np.clip(g_max, 0.0, 1.0)


def box_prob_bounds(g: GaussianIntervalParams, target: IntervalBox,
                    upper_closed: Sequence[bool] | None = None) -> Interval:
    """Sound ``[lo, hi]`` on ``P(N(m, diag(v)) in target)`` over the family ``g``.

    The target is half-open on its upper faces unless ``upper_closed`` says
    otherwise for an axis.
    """
    if len(target) != len(g.mean):
        raise ValueError("target dimension mismatch")
    closed = upper_closed if upper_closed is not None else [False] * len(target)
    lo, hi = 1.0, 1.0
    for m, v, t, c in zip(g.mean, g.var, target, closed):
        l_ax, h_ax = axis_bounds(m, v, [t.lo], [t.hi], [c])
        lo *= float(l_ax[0])
        hi *= float(h_ax[0])
    return Interval(lo, hi)


def complement_prob_bounds(g: GaussianIntervalParams, W: IntervalBox) -> Interval:
    """Sound bounds on the mass falling outside the closed box ``W``."""
    inside = box_prob_bounds(g, W, upper_closed=[True] * len(W))
    out = Interval(1.0, 1.0) - inside
    return Interval(max(0.0, out.lo), min(1.0, out.hi))


def gaussian_w1_bounds(g1: GaussianPoint, g2: GaussianPoint) -> Interval:
    """Bracket on the 1-Wasserstein distance between two diagonal Gaussians.

    Lower end is the infinity-norm mean gap; upper end is
    ``sqrt(|m1 - m2|_2^2 + |s1 - s2|_2^2)`` with ``s`` the standard deviations.
    For ``n > 1`` the two norms can cross, in which case the lower end is
    clamped to the upper.
    """
    m1, m2 = np.asarray(g1.mean), np.asarray(g2.mean)
    s1, s2 = np.sqrt(np.asarray(g1.var)), np.sqrt(np.asarray(g2.var))
    if m1.shape != m2.shape:
        raise ValueError("dimension mismatch")
    lo = float(np.max(np.abs(m1 - m2)))
    hi = float(np.sqrt(np.sum((m1 - m2) ** 2) + np.sum((s1 - s2) ** 2)))
    return Interval(min(lo, hi), hi)
