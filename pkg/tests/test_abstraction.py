import math

import numpy as np
import pytest
from scipy.special import ndtr

from oracles import normal_mass_erf
from imcverify.abstraction import build_imc, thread_count
from imcverify.expr import eval_point
from imcverify.gaussian import GaussianPoint
from imcverify.imc import row_gap, validate_imc
from imcverify.io import parse_config
from imcverify.system import SystemSpec, build_partition


def spec_1d(f="0.5*x1", b="0.5", theta=0.0, regions=()):
    return SystemSpec.from_text([f], [[b]], [(-1.0, 1.0)], theta=theta, regions=regions)


def test_constant_drift_point_rows():
    spec = spec_1d(f="0", b="0")
    imc, _ = build_imc(spec, build_partition(spec, 1.0))
    assert np.array_equal(imc.lower, imc.upper)
    # zero sits on the shared face and belongs to the upper cell (index 1)
    np.testing.assert_array_equal(imc.lower[:2], [[0, 1, 0], [0, 1, 0]])
    np.testing.assert_array_equal(imc.lower[2], [0, 0, 1])


def test_unit_grid_bounds_against_erf():
    spec = spec_1d()
    imc, _ = build_imc(spec, build_partition(spec, 1.0))
    hi_ref = max(normal_mass_erf(m, 0.5, -1, 0) for m in np.linspace(-0.5, 0, 201))
    lo_ref = min(normal_mass_erf(m, 0.5, -1, 0) for m in np.linspace(-0.5, 0, 201))
    assert lo_ref == pytest.approx(0.4772499, abs=1e-6)
    # the maximum is at the target midpoint m = -0.5, i.e. P(|Z| <= 1)
    assert hi_ref == pytest.approx(0.6826895, abs=1e-6)
    assert imc.lower[0, 0] == pytest.approx(lo_ref, abs=1e-3) and imc.lower[0, 0] <= lo_ref
    assert imc.upper[0, 0] == pytest.approx(hi_ref, abs=1e-3) and imc.upper[0, 0] >= hi_ref


def test_theta_widens_bounds():
    spec = spec_1d()
    part = build_partition(spec, 0.5)
    base, _ = build_imc(spec, part)
    wide, _ = build_imc(spec.with_theta(0.1), part)
    assert np.all(wide.upper >= base.upper - 1e-12)
    assert np.all(wide.lower <= base.lower + 1e-12)
    assert row_gap(wide) > row_gap(base)


def _exact_row(spec, part, x):
    m = [eval_point(e, x) for e in spec.f]
    s = [math.sqrt(sum(eval_point(e, x) ** 2 for e in row)) for row in spec.b]
    per_axis = []
    for axis, e in enumerate(part.edges):
        per_axis.append(np.array([normal_mass_erf(m[axis], s[axis], lo, hi)
                                  for lo, hi in zip(e[:-1], e[1:])]))
    cells = per_axis[0]
    for p in per_axis[1:]:
        cells = np.multiply.outer(cells, p).ravel()
    return np.append(cells, 1.0 - cells.sum())


@pytest.mark.parametrize("name,eta,per_cell", [("benchmark1d.toml", 0.25, 1000),
                                               ("logistic1d.toml", 0.125, 1000)])
def test_kernel_soundness(configs_dir, name, eta, per_cell):
    spec = parse_config(configs_dir / name)
    part = build_partition(spec, eta)
    imc, _ = build_imc(spec, part)
    rng = np.random.default_rng(17)
    for i in range(part.N):
        cell = part.cell(i)
        xs = rng.uniform(cell[0].lo, cell[0].hi, per_cell)
        m = np.array([eval_point(spec.f[0], [x]) for x in xs])
        s = np.abs(np.array([eval_point(spec.b[0][0], [x]) for x in xs]))
        e = part.edges[0]
        probs = ndtr((e[None, 1:] - m[:, None]) / s[:, None]) - ndtr((e[None, :-1] - m[:, None]) / s[:, None])
        out = 1.0 - probs.sum(axis=1)
        assert np.all(probs >= imc.lower[i, :-1] - 1e-12)
        assert np.all(probs <= imc.upper[i, :-1] + 1e-12)
        assert np.all(out >= imc.lower[i, -1] - 1e-12) and np.all(out <= imc.upper[i, -1] + 1e-12)


def test_kernel_soundness_2d_spot_checks(configs_dir):
    spec = SystemSpec.from_text(["0.5*x1 + 0.2*x2", "0.1*x1*x1 - 0.3*x2"],
                                [["0.3", "0"], ["0", "0.2 + 0.1*x1"]], [(-1, 1), (-1, 1)])
    part = build_partition(spec, 0.5)
    imc, _ = build_imc(spec, part)
    rng = np.random.default_rng(3)
    for i in range(part.N):
        cell = part.cell(i)
        for _ in range(20):
            x = [rng.uniform(d.lo, d.hi) for d in cell]
            row = _exact_row(spec, part, x)
            assert np.all(row >= imc.lower[i] - 1e-9) and np.all(row <= imc.upper[i] + 1e-9)


def test_row_gap_refines():
    # unlabelled copy of the benchmark, so the unit grid is admissible
    spec = spec_1d()
    gaps = []
    for eta in (1.0, 0.5, 0.25, 0.125):
        imc, _ = build_imc(spec, build_partition(spec, eta))
        gaps.append(row_gap(imc))
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_built_imc_validates(benchmark):
    imc, ledger = build_imc(benchmark, build_partition(benchmark, 0.25))
    rep = validate_imc(imc)
    assert rep.ok and rep.diagnostics == [] and rep.tightened == []
    assert ledger.diagnostics == []
    assert imc.sink and imc.lower[-1, -1] == 1.0


def test_thread_count_and_determinism(benchmark, monkeypatch):
    part = build_partition(benchmark, 0.125)
    monkeypatch.setenv("IMCVERIFY_THREADS", "4")
    assert thread_count() == 4
    a, _ = build_imc(benchmark, part)
    monkeypatch.setenv("IMCVERIFY_THREADS", "1")
    b, _ = build_imc(benchmark, part)
    assert np.array_equal(a.lower, b.lower) and np.array_equal(a.upper, b.upper)
    monkeypatch.setenv("IMCVERIFY_THREADS", "zero")
    assert thread_count() == 1


def test_ledger_snapping_and_measures(benchmark):
    part = build_partition(benchmark, 0.25)
    _, ledger = build_imc(benchmark, part)
    # cell 0 = [-1, -0.75): mean in [-0.5, -0.375], variance 0.25
    ms, vs = ledger.axis_values(0, 0)
    np.testing.assert_array_equal(ms, [-0.5])
    assert ms[0] == 0.25 * math.floor(-0.5 / 0.25)
    assert vs[0] == 0.0625 * math.floor(0.25 / 0.0625)
    for i in range(part.N):
        for mu in ledger.reference_measures(i):
            assert math.fsum(mu) == pytest.approx(1.0, abs=1e-12) and np.all(mu >= 0)


def test_ledger_radii(benchmark):
    _, ledger = build_imc(benchmark, build_partition(benchmark, 0.25))
    N, eta = 8, 0.25
    assert ledger.ws == (math.sqrt(2 * N) + 2) * eta
    assert ledger.tv == N * eta * ledger.ws
    assert ledger.membership_radius == math.sqrt(2 * N) * eta
    g = GaussianPoint((-0.5,), (0.25,))
    assert ledger.nearest_w1_upper(g, 0) == 0.0
