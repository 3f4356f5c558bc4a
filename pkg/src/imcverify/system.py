"""Concrete system description and the label-respecting grid partition."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import MisalignedLabels, ValidationError
from .expr import Expr, parse_expr
from .intervals import Interval, IntervalBox

IN = "in"
_ALIGN_TOL = 1e-12


@dataclass(frozen=True)
class Region:
    box: IntervalBox
    props: frozenset[str]


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """``X+ = f(X) + b(X) w + theta * xi`` on the working box ``W``.

    ``b`` is an ``n x k`` matrix of expressions and must yield a diagonal
    ``b b^T`` (checked structurally: for every pair of rows, each noise
    column has a literal zero in at least one of them).
    """

    f: tuple[Expr, ...]
    b: tuple[tuple[Expr, ...], ...]
    W: IntervalBox
    theta: float = 0.0
    regions: tuple[Region, ...] = ()
    name: str = ""
    lipschitz_override: tuple[float, float] | None = None

    def __post_init__(self):
        n = len(self.f)
        if n == 0:
            raise ValidationError("at least one state dimension required", key="f")
        if len(self.W) != n:
            raise ValidationError(f"expected {n} intervals, got {len(self.W)}", key="W")
        if any(d.width <= 0 for d in self.W):
            raise ValidationError("working box must have positive width on every axis", key="W")
        if len(self.b) != n:
            raise ValidationError(f"expected {n} rows, got {len(self.b)}", key="b")
        k = len(self.b[0])
        if k == 0 or any(len(row) != k for row in self.b):
            raise ValidationError("rows must all have the same positive length", key="b")
        if not self.theta >= 0:
            raise ValidationError("must be nonnegative", key="theta")
        for name, exprs in (("f", self.f), ("b", [e for row in self.b for e in row])):
            for e in exprs:
                if e.max_var() >= n:
                    raise ValidationError(f"expression {e} uses a variable beyond x{n}", key=name)
        for i in range(n):
            for j in range(i + 1, n):
                for c in range(k):
                    if not (self.b[i][c].is_zero() or self.b[j][c].is_zero()):
                        raise ValidationError(
                            f"b b^T must be diagonal; rows {i + 1} and {j + 1} share noise column {c + 1}",
                            key="b",
                        )
        for r in self.regions:
            if len(r.box) != n:
                raise ValidationError("region dimension mismatch", key="labels")

    @classmethod
    def from_text(cls, f: Sequence[str], b: Sequence[Sequence[str]], W, theta=0.0,
                  regions=(), name="") -> SystemSpec:
        n = len(f)
        box = W if isinstance(W, IntervalBox) else IntervalBox.from_bounds(W)
        regs = tuple(
            r if isinstance(r, Region) else Region(
                r[0] if isinstance(r[0], IntervalBox) else IntervalBox.from_bounds(r[0]),
                frozenset(r[1]))
            for r in regions
        )
        return cls(
            f=tuple(parse_expr(t, n) for t in f),
            b=tuple(tuple(parse_expr(t, n) for t in row) for row in b),
            W=box, theta=float(theta), regions=regs, name=name,
        )

    @property
    def n(self) -> int:
        return len(self.f)

    @property
    def k(self) -> int:
        return len(self.b[0])

    @property
    def props(self) -> frozenset[str]:
        out = {IN}
        for r in self.regions:
            out |= r.props
        return frozenset(out)

    def with_theta(self, theta: float) -> SystemSpec:
        return SystemSpec(self.f, self.b, self.W, float(theta), self.regions, self.name,
                          self.lipschitz_override)

    def label_of(self, x: Sequence[float]) -> frozenset[str]:
        """Labels of a concrete point (closed region boxes)."""
        if not self.W.contains(x):
            return frozenset()
        out = {IN}
        for r in self.regions:
            if r.box.contains(x):
                out |= r.props
        return frozenset(out)

    def drift(self, x):
        from .expr import eval_point
        return [eval_point(e, x) for e in self.f]

    def diffusion(self, x):
        from .expr import eval_point
        return [[eval_point(e, x) for e in row] for row in self.b]


def _axis_count(width: float, eta: float) -> int:
    r = width / eta
    nearest = round(r)
    if nearest >= 1 and abs(r - nearest) <= 1e-9 * max(1.0, r):
        return int(nearest)
    return int(math.ceil(r))


def _axis_edges(iv: Interval, eta: float) -> np.ndarray:
    count = _axis_count(iv.width, eta)
    edges = iv.lo + eta * np.arange(count + 1, dtype=float)
    edges[-1] = iv.hi
    return edges


def cell_count(spec: SystemSpec, eta: float) -> int:
    """Number of grid cells (excluding the sink) for grid size ``eta``."""
    return math.prod(_axis_count(d.width, eta) for d in spec.W)


def check_alignment(spec: SystemSpec, eta: float) -> None:
    """Raise :class:`MisalignedLabels` unless every labelled region boundary
    inside ``W`` lies on a grid line."""
    for reg in spec.regions:
        if reg.props <= {IN}:
            continue
        for axis, (d, w) in enumerate(zip(reg.box, spec.W)):
            edges = _axis_edges(w, eta)
            for bound in (d.lo, d.hi):
                if bound <= w.lo or bound >= w.hi:
                    continue
                gap = np.min(np.abs(edges - bound))
                if gap > _ALIGN_TOL * max(1.0, abs(bound)):
                    raise MisalignedLabels(
                        f"region {reg.box.as_list()} {sorted(reg.props)} boundary {bound} on axis "
                        f"{axis + 1} is not on the eta={eta} grid; some cell straddles it"
                    )


@dataclass(frozen=True, eq=False)
class Partition:
    """Uniform grid over ``W`` plus the sink state.

    Cells are half-open ``[lo, hi)`` along each axis except the last cell,
    which is closed, so every point of ``W`` has exactly one cell.  Cells are
    numbered in C order of their grid coordinates; the sink has index ``N``.
    """

    eta: float
    W: IntervalBox
    edges: tuple[np.ndarray, ...]
    labels: tuple[frozenset[str], ...]
    sink_labels: frozenset[str] = field(default_factory=frozenset)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(e) - 1 for e in self.edges)

    @property
    def N(self) -> int:
        return math.prod(self.shape)

    @property
    def sink(self) -> int:
        return self.N

    @property
    def n_states(self) -> int:
        return self.N + 1

    @property
    def all_labels(self) -> list[frozenset[str]]:
        return list(self.labels) + [self.sink_labels]

    def coords(self, index: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(index, self.shape))

    def index(self, coords: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(coords), self.shape))

    def cell(self, index: int) -> IntervalBox:
        c = self.coords(index)
        return IntervalBox(tuple(Interval(e[i], e[i + 1]) for e, i in zip(self.edges, c)))

    def upper_closed(self, index: int) -> tuple[bool, ...]:
        c = self.coords(index)
        return tuple(i == s - 1 for i, s in zip(c, self.shape))

    @property
    def cells(self) -> list[IntervalBox]:
        return [self.cell(i) for i in range(self.N)]

    @property
    def centers(self) -> np.ndarray:
        mids = [0.5 * (e[:-1] + e[1:]) for e in self.edges]
        grids = np.meshgrid(*mids, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @property
    def diam(self) -> float:
        """Largest infinity-norm distance between two cell centres."""
        spans = []
        for e in self.edges:
            mids = 0.5 * (e[:-1] + e[1:])
            spans.append(mids[-1] - mids[0])
        return float(max(spans))

    def locate(self, x: Sequence[float]) -> int:
        return int(self.locate_many(np.asarray(x, dtype=float)[None, :])[0])

    def locate_many(self, X: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`locate` for an ``(m, n)`` array of points."""
        X = np.asarray(X, dtype=float)
        inside = np.ones(X.shape[0], dtype=bool)
        coords = []
        for axis, e in enumerate(self.edges):
            col = X[:, axis]
            inside &= (col >= e[0]) & (col <= e[-1])
            last = len(e) - 2
            with np.errstate(invalid="ignore"):
                guess = np.floor((col - e[0]) / self.eta)
            k = np.clip(np.nan_to_num(guess, nan=0.0), 0, last).astype(np.intp)
            # settle on the edge array itself so the result matches [e_k, e_k+1)
            k -= (col < e[k]) & (k > 0)
            k += (col >= e[np.minimum(k + 1, last + 1)]) & (k < last)
            coords.append(k)
        idx = np.ravel_multi_index(tuple(coords), self.shape)
        return np.where(inside, idx, self.N)


def build_partition(spec: SystemSpec, eta: float) -> Partition:
    """Grid ``W`` with cell size ``eta`` and label every cell.

    Raises :class:`MisalignedLabels` when a labelled region boundary cuts
    through a cell.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    check_alignment(spec, eta)
    edges = tuple(_axis_edges(d, eta) for d in spec.W)
    shape = tuple(len(e) - 1 for e in edges)
    mids = [0.5 * (e[:-1] + e[1:]) for e in edges]
    grids = np.meshgrid(*mids, indexing="ij")
    centers = np.stack([g.ravel() for g in grids], axis=1)
    labels = []
    for c in centers:
        labels.append(spec.label_of(c))
    return Partition(eta=float(eta), W=spec.W, edges=edges, labels=tuple(labels))
