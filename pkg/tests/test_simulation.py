import warnings

import numpy as np
import pytest

from oracles import linear_1d_exit, linear_1d_reach
from imcverify.abstraction import build_imc
from imcverify.checker import check_property
from imcverify.errors import TruncationWarning, ValidationError
from imcverify.intervals import Interval
from imcverify.io import load_config
from imcverify.properties import parse_property
from imcverify.simulation import (BLOCK, FAIL, INCONCLUSIVE, PASS, PerturbationPolicy,
                                  clopper_pearson, estimate_probability, estimate_unbounded,
                                  monte_carlo, simulate_paths, soundness_check)
from imcverify.system import SystemSpec, build_partition


def spec_1d(f="0.5*x1", b="0.5", theta=0.0, regions=()):
    return SystemSpec.from_text([f], [[b]], [(-1.0, 1.0)], theta=theta, regions=regions)


def test_fixed_point_trace():
    spec = spec_1d(f="x1", b="0")
    part = build_partition(spec, 0.25)
    batch = simulate_paths(spec, part, [0.3], 12, 5, seed=1)
    assert not batch.stopped.any()
    assert np.all(batch.states == part.locate([0.3]))


def test_certain_exit_at_first_step():
    spec = spec_1d(f="x1 + 10", b="0")
    part = build_partition(spec, 0.5)
    batch = simulate_paths(spec, part, [0.0], 6, 50, seed=2)
    assert batch.stopped.all() and np.all(batch.stop_time == 1)
    assert np.all(batch.states[:, 1:] == part.sink)


def test_exit_probability_against_transfer_operator():
    spec = spec_1d()
    part = build_partition(spec, 0.25)
    batch = simulate_paths(spec, part, [0.0], 10, 10 ** 5, seed=3)
    p_hat = batch.stopped.mean()
    p_ref = linear_1d_exit(0.5, 0.5, -1.0, 1.0, 10, 0.0)
    sigma = np.sqrt(p_ref * (1 - p_ref) / len(batch))
    assert abs(p_hat - p_ref) <= 3 * sigma


def test_reach_probability_against_transfer_operator(benchmark):
    part = build_partition(benchmark, 0.25)
    prop = parse_property("P[ true U<=10 goal ]")
    est = monte_carlo(benchmark, part, [0.0], prop, 10 ** 5, seed=4)
    p_ref = linear_1d_reach(0.5, 0.5, -1.0, 1.0, (0.5, 1.0), 10, 0.0)
    assert abs(est.point - p_ref) <= 3 * np.sqrt(p_ref * (1 - p_ref) / est.n)


def test_no_reentry_after_sink(benchmark):
    part = build_partition(benchmark, 0.25)
    batch = simulate_paths(benchmark, part, [0.9], 15, 4000, seed=5)
    sink = batch.states == part.sink
    # once in the sink a trace stays there
    assert np.all(np.diff(sink.astype(int), axis=1) >= 0)
    first = np.where(batch.stopped, batch.stop_time, -1)
    for row, tau in zip(batch.states[:200], first[:200]):
        if tau >= 0:
            assert np.all(row[tau:] == part.sink) and np.all(row[:tau] != part.sink)


def test_reproducible_and_prefix_stable(benchmark):
    part = build_partition(benchmark, 0.25)
    a = simulate_paths(benchmark, part, [0.0], 8, 3000, seed=9)
    b = simulate_paths(benchmark, part, [0.0], 8, 3000, seed=9)
    assert np.array_equal(a.states, b.states)
    more = simulate_paths(benchmark, part, [0.0], 8, 3000 + 2 * BLOCK, seed=9)
    assert np.array_equal(more.states[:3000], a.states)
    other = simulate_paths(benchmark, part, [0.0], 8, 3000, seed=10)
    assert not np.array_equal(other.states, a.states)


def test_streaming_matches_batch(benchmark):
    part = build_partition(benchmark, 0.25)
    prop = parse_property("P[ true U<=10 goal ]")
    batch = simulate_paths(benchmark, part, [0.0], 10, 5000, seed=6)
    e1 = estimate_probability(batch, prop, part.all_labels)
    e2 = monte_carlo(benchmark, part, [0.0], prop, 5000, seed=6)
    assert e1.successes == e2.successes


def test_trace_lines(benchmark):
    part = build_partition(benchmark, 0.5)
    batch = simulate_paths(benchmark, part, [0.0], 3, 2, seed=0)
    lines = batch.to_lines()
    assert len(lines) == 2 and all(len(l.split(",")) == 4 for l in lines)
    assert [t.states for t in batch] == [tuple(int(x) for x in l.split(",")) for l in lines]


def test_initial_state_outside_w(benchmark):
    part = build_partition(benchmark, 0.5)
    with pytest.raises(ValidationError):
        simulate_paths(benchmark, part, [2.0], 3, 2, seed=0)


# --- estimates --------------------------------------------------------------------------


def test_clopper_pearson_zero_of_hundred():
    ci = clopper_pearson(0, 100, 0.95)
    assert ci.lo == 0.0
    assert ci.hi == pytest.approx(1 - 0.025 ** (1 / 100), abs=1e-12)
    assert ci.hi == pytest.approx(0.036217, abs=1e-6)


def test_clopper_pearson_all_successes():
    ci = clopper_pearson(50, 50, 0.99)
    assert ci.hi == 1.0 and ci.lo == pytest.approx(0.005 ** (1 / 50), abs=1e-12)


def test_start_cell_goal_gives_one():
    spec = spec_1d(f="x1", b="0", regions=[([(0.0, 0.5)], {"goal"})])
    part = build_partition(spec, 0.25)
    batch = simulate_paths(spec, part, [0.1], 5, 100, seed=0)
    est = estimate_probability(batch, parse_property("P[ true U<=3 goal ]"), part.all_labels)
    assert est.point == 1.0 and est.ci.hi == 1.0 and not est.truncated


def test_unbounded_truncation_warning(benchmark):
    part = build_partition(benchmark, 0.25)
    prop = parse_property("P[ true U goal ]")
    batch = simulate_paths(benchmark, part, [0.0], 10, 500, seed=0)
    with pytest.warns(TruncationWarning):
        est = estimate_probability(batch, prop, part.all_labels)
    assert est.truncated
    with pytest.warns(TruncationWarning):
        est = estimate_unbounded(benchmark, part, [0.0], prop, 2000, seed=1)
    # long-horizon transfer-operator value stands in for the unbounded event
    p_ref = linear_1d_reach(0.5, 0.5, -1.0, 1.0, (0.5, 1.0), 200, 0.0)
    assert abs(est.point - p_ref) <= 3 * np.sqrt(p_ref * (1 - p_ref) / est.n) + 1e-3


def test_soundness_check_examples():
    imc = Interval(0.25, 0.75)
    assert soundness_check(Interval(0.40, 0.44), imc) == PASS
    assert soundness_check(Interval(0.80, 0.84), imc) == FAIL
    assert soundness_check(Interval(0.74, 0.78), imc) == INCONCLUSIVE
    assert soundness_check(Interval(0.74, 0.78), imc, slack=0.05) == PASS


# --- perturbation policies ------------------------------------------------------------


def test_policy_validation():
    with pytest.raises(ValueError):
        PerturbationPolicy.corner([1.5])
    with pytest.raises(ValueError):
        PerturbationPolicy.two_point(0.5, [2.0], [0.5])
    PerturbationPolicy.two_point(0.25, [2.0], [0.5])  # mean norm 0.875
    with pytest.raises(ValueError):
        PerturbationPolicy("gaussian")


def test_policy_draws_respect_norms():
    u = np.random.default_rng(0).random((20000, 2))
    assert np.max(np.abs(PerturbationPolicy.random().sample(u, 2))) <= 1.0
    xi = PerturbationPolicy.two_point(0.25, [2.0, 0.0], [0.0, 0.5]).sample(u, 2)
    assert np.mean(np.max(np.abs(xi), axis=1)) <= 1.0 + 0.02


def test_corner_perturbation_shifts_path():
    spec = spec_1d(f="0", b="0", theta=0.3)
    part = build_partition(spec, 0.25)
    batch = simulate_paths(spec, part, [0.0], 2, 3, PerturbationPolicy.corner([1.0]), seed=0)
    assert np.all(batch.states[:, 1:] == part.locate([0.3]))
    batch = simulate_paths(spec, part, [0.0], 2, 3, PerturbationPolicy.none(), seed=0)
    assert np.all(batch.states[:, 1:] == part.locate([0.0]))


# --- soundness suite ---------------------------------------------------------------------


SUITE = [("benchmark1d.toml", "P[ true U<=10 goal ]"), ("benchmark1d.toml", "P[ G<=6 in ]"),
         ("logistic1d.toml", "P[ true U<=5 goal ]"), ("logistic1d.toml", "P[ G<=5 in & !goal ]"),
         ("rotation2d.toml", "P[ true U<=5 goal ]"), ("rotation2d.toml", "P[ G<=4 in ]")]


@pytest.fixture(scope="module")
def built(configs_dir):
    cache = {}

    def get(name):
        if name not in cache:
            cfg = load_config(configs_dir / name)
            part = build_partition(cfg.spec, cfg.verify["eta"])
            imc, _ = build_imc(cfg.spec, part)
            cache[name] = cfg, part, imc
        return cache[name]
    return get


@pytest.mark.parametrize("name,text", SUITE)
def test_soundness_suite(built, name, text):
    cfg, part, imc = built(name)
    prop = parse_property(text)
    iv = check_property(imc, prop)
    q0 = part.locate(cfg.verify["x0"])
    with warnings.catch_warnings():
        warnings.simplefilter("error", TruncationWarning)
        est = monte_carlo(cfg.spec, part, cfg.verify["x0"], prop, 10 ** 5, seed=2024,
                          confidence=0.99)
    verdict = soundness_check(est.ci, Interval(iv.lo[q0], iv.hi[q0]))
    assert verdict == PASS, (est.ci, iv.lo[q0], iv.hi[q0])
