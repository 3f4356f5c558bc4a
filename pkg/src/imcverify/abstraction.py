"""Build the IMC abstraction of a system over a grid partition, together with
the snapped reference parameters used by the completeness analysis."""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import BudgetError
from .expr import lipschitz_bound, subdivide_until
from .gaussian import GaussianPoint, axis_bounds, std_normal_mass
from .imc import Imc, row_gap, validate_imc
from .intervals import Interval
from .system import Partition, SystemSpec

__all__ = ["CellParams", "ReferenceLedger", "build_imc", "row_gap", "thread_count"]

LEDGER_CAP = 10**6


def thread_count(default: int = 1) -> int:
    """Worker cap from ``IMCVERIFY_THREADS`` (positive integer), else ``default``."""
    raw = os.environ.get("IMCVERIFY_THREADS", "").strip()
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        return default
    return max(1, n)


@dataclass(frozen=True)
class CellParams:
    """Mean and variance intervals of one accepted sub-box of a cell."""

    mean: tuple[Interval, ...]
    var: tuple[Interval, ...]


def piece_params(spec: SystemSpec, outs: list[Interval]) -> CellParams:
    n, k = spec.n, spec.k
    wobble = Interval(-spec.theta, spec.theta)
    mean = tuple(outs[a] + wobble if spec.theta > 0 else outs[a] for a in range(n))
    var = []
    for a in range(n):
        acc = Interval(0.0, 0.0)
        for c in range(k):
            acc = acc + outs[n + a * k + c].sqr()
        var.append(Interval(max(acc.lo, 0.0), acc.hi))
    return CellParams(mean, tuple(var))


def _axis_targets(partition: Partition, axis: int):
    e = partition.edges[axis]
    a = np.append(e[:-1], e[0])
    b = np.append(e[1:], e[-1])
    closed = np.zeros(len(a), dtype=bool)
    closed[-2:] = True  # last cell and the whole axis of W are closed
    return a, b, closed


def _outer(vectors: list[np.ndarray]) -> np.ndarray:
    return reduce(np.multiply.outer, vectors).ravel()


def _cell_row(spec: SystemSpec, partition: Partition, cell: int, kappa: float, targets):
    box = partition.cell(cell)
    exprs = list(spec.f) + [e for row in spec.b for e in row]
    groups = [list(range(spec.n)), list(range(spec.n, len(exprs)))]
    pieces = subdivide_until(exprs, box, kappa, groups)
    N = partition.N
    row_lo = np.full(N + 1, np.inf)
    row_hi = np.zeros(N + 1)
    params = []
    for _, outs in pieces:
        p = piece_params(spec, outs)
        params.append(p)
        lo_ax, hi_ax = [], []
        for axis in range(spec.n):
            a, b, closed = targets[axis]
            lo, hi = axis_bounds(p.mean[axis], p.var[axis], a, b, closed)
            lo_ax.append(lo)
            hi_ax.append(hi)
        lo_cells = _outer([l[:-1] for l in lo_ax])
        hi_cells = _outer([h[:-1] for h in hi_ax])
        in_lo = math.prod(float(l[-1]) for l in lo_ax)
        in_hi = math.prod(float(h[-1]) for h in hi_ax)
        out_lo, out_hi = max(0.0, 1.0 - in_hi), min(1.0, 1.0 - in_lo)
        np.minimum(row_lo[:N], lo_cells, out=row_lo[:N])
        np.maximum(row_hi[:N], hi_cells, out=row_hi[:N])
        row_lo[N] = min(row_lo[N], out_lo)
        row_hi[N] = max(row_hi[N], out_hi)
    return row_lo, row_hi, params


def build_imc(spec: SystemSpec, partition: Partition, kappa: float | None = None,
              threads: int | None = None, with_ledger: bool = True):
    """Abstract ``spec`` over ``partition``.

    Each cell is split until the drift and diffusion enclosures meet the
    ``kappa`` budget (default ``eta / 10``); every piece yields a family of
    Gaussians whose probability of landing in each target cell is bounded, and
    the row bounds are the extremes over pieces.  Mass leaving ``W`` goes to
    the sink.  Returns ``(imc, ledger)`` with the IMC already tightened.
    """
    if kappa is None:
        kappa = partition.eta / 10.0
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    workers = threads if threads is not None else thread_count()
    targets = [_axis_targets(partition, axis) for axis in range(spec.n)]
    N = partition.N

    def job(i):
        return _cell_row(spec, partition, i, kappa, targets)

    if workers > 1 and N > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(N)))
    else:
        results = [job(i) for i in range(N)]

    lower = np.zeros((N + 1, N + 1))
    upper = np.zeros((N + 1, N + 1))
    for i, (lo, hi, _) in enumerate(results):
        lower[i], upper[i] = lo, hi
    lower[N, N] = upper[N, N] = 1.0
    w_diam = max(d.width for d in spec.W)
    raw = Imc(lower, upper, tuple(partition.all_labels), partition.centers,
              sink=True, delta_cost=w_diam)
    report = validate_imc(raw)
    imc = report.imc

    ledger = None
    if with_ledger:
        ledger = ReferenceLedger.from_params(spec, partition, kappa,
                                             [r[2] for r in results])
        ledger.diagnostics.extend(report.diagnostics)
        ledger.tightened = len(report.tightened)
    return imc, ledger


def _snap_range(iv: Interval, step: float) -> tuple[int, int]:
    return math.floor(iv.lo / step), math.floor(iv.hi / step)


@dataclass
class ReferenceLedger:
    """Snapped reference Gaussians per cell and the completeness radii.

    For each cell and axis the ledger keeps the integer ranges of
    ``floor(m / eta)`` and ``floor(s^2 / eta^2)`` over the cell's mean and
    variance enclosures (hull over sub-boxes); the reference family of the
    cell is their product, ``m_l = eta * k`` and ``s_l^2 = eta^2 * j``.
    """

    spec: SystemSpec
    partition: Partition
    kappa: float
    mean_ranges: list[list[tuple[int, int]]]
    var_ranges: list[list[tuple[int, int]]]
    lipschitz: tuple[float, float] = (math.nan, math.nan)
    diagnostics: list[str] = field(default_factory=list)
    tightened: int = 0

    @classmethod
    def from_params(cls, spec, partition, kappa, per_cell: list[list[CellParams]]):
        eta = partition.eta
        mean_ranges, var_ranges = [], []
        total = 0
        for pieces in per_cell:
            m_hull = [reduce(Interval.hull, (p.mean[a] for p in pieces)) for a in range(spec.n)]
            v_hull = [reduce(Interval.hull, (p.var[a] for p in pieces)) for a in range(spec.n)]
            mr = [_snap_range(iv, eta) for iv in m_hull]
            vr = [_snap_range(iv, eta * eta) for iv in v_hull]
            total += math.prod((k1 - k0 + 1) * (j1 - j0 + 1) for (k0, k1), (j0, j1) in zip(mr, vr))
            if total > LEDGER_CAP:
                raise BudgetError(f"reference ledger exceeds {LEDGER_CAP} entries; "
                                  "build without the ledger or coarsen eta")
            mean_ranges.append(mr)
            var_ranges.append(vr)
        if spec.lipschitz_override is not None:
            lips = tuple(float(x) for x in spec.lipschitz_override)
        else:
            lips = (lipschitz_bound(list(spec.f), spec.W),
                    lipschitz_bound([e for row in spec.b for e in row], spec.W))
        diags = []
        for name, val in zip(("drift", "diffusion"), lips):
            if not math.isfinite(val):
                diags.append(f"{name} Lipschitz bound unavailable on W (derivative enclosure blew up)")
        return cls(spec, partition, kappa, mean_ranges, var_ranges, lips, diags)

    @property
    def N(self) -> int:
        return self.partition.N

    @property
    def eta(self) -> float:
        return self.partition.eta

    @property
    def ws(self) -> float:
        return (math.sqrt(2 * self.N) + 2) * self.eta

    @property
    def tv(self) -> float:
        return self.N * self.eta * self.ws

    @property
    def membership_radius(self) -> float:
        return math.sqrt(2 * self.N) * self.eta

    @property
    def recovery_radius(self) -> float:
        return 2 * self.eta + self.N * self.eta * self.tv

    def entry_count(self, cell: int) -> int:
        return math.prod((k1 - k0 + 1) * (j1 - j0 + 1)
                         for (k0, k1), (j0, j1) in zip(self.mean_ranges[cell], self.var_ranges[cell]))

    def axis_values(self, cell: int, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """Snapped means and variances available on ``axis`` for ``cell``."""
        (k0, k1), (j0, j1) = self.mean_ranges[cell][axis], self.var_ranges[cell][axis]
        eta = self.eta
        return eta * np.arange(k0, k1 + 1, dtype=float), eta * eta * np.arange(j0, j1 + 1, dtype=float)

    def entries(self, cell: int):
        """Iterate the cell's reference Gaussians."""
        axes = [self.axis_values(cell, a) for a in range(self.spec.n)]
        means = [m for m, _ in axes]
        vars_ = [v for _, v in axes]
        for ms in itertools.product(*means):
            for vs in itertools.product(*vars_):
                yield GaussianPoint(ms, vs)

    def reference_measure(self, g: GaussianPoint) -> np.ndarray:
        """Discrete image of a point Gaussian on the partition (sink last)."""
        part = self.partition
        per_axis = []
        for axis, (m, v) in enumerate(zip(g.mean, g.var)):
            e = part.edges[axis]
            a, b = e[:-1], e[1:]
            if v > 0:
                s = math.sqrt(v)
                per_axis.append(std_normal_mass((a - m) / s, (b - m) / s))
            else:
                hit = (m >= a) & np.where(np.arange(len(a)) == len(a) - 1, m <= b, m < b)
                per_axis.append(hit.astype(float))
        cells = _outer(per_axis)
        out = np.empty(part.N + 1)
        out[:-1] = cells
        out[-1] = max(0.0, 1.0 - math.fsum(cells))
        return out

    def reference_measures(self, cell: int) -> list[np.ndarray]:
        return [self.reference_measure(g) for g in self.entries(cell)]

    def nearest_w1_upper(self, g: GaussianPoint, cell: int) -> float:
        """Smallest Gaussian W1 upper bound between ``g`` and the cell's references."""
        total = 0.0
        for axis in range(self.spec.n):
            ms, vs = self.axis_values(cell, axis)
            total += float(np.min((g.mean[axis] - ms) ** 2))
            total += float(np.min((math.sqrt(g.var[axis]) - np.sqrt(vs)) ** 2))
        return math.sqrt(total)

    def summary(self) -> dict:
        return {
            "eta": self.eta,
            "N": self.N,
            "kappa": self.kappa,
            "ws": self.ws,
            "tv": self.tv,
            "membership_radius": self.membership_radius,
            "recovery_radius": self.recovery_radius,
            "lipschitz": list(self.lipschitz),
            "entries_per_cell": [self.entry_count(i) for i in range(self.N)],
            "diagnostics": list(self.diagnostics),
        }

