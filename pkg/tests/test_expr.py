import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from imcverify.errors import BudgetError, DomainError, ParseError
from imcverify.expr import (eval_interval, eval_point, lipschitz_bound, parse_expr,
                            subdivide_until)
from imcverify.intervals import Interval, IntervalBox


def box(*pairs):
    return IntervalBox.from_bounds(pairs)


# --- point evaluation -------------------------------------------------------------


@pytest.mark.parametrize("text,x,expected", [
    ("0.8*x1", (0.5,), 0.4),
    ("x1*x2", (2.0, 3.0), 6.0),
    ("exp(x1)", (0.0,), 1.0),
    ("x1^2 - 3*x1 + 2", (1.0,), 0.0),
    ("-x1 + sin(0)", (2.0,), -2.0),
    ("cos(pi)", (), -1.0),
    ("2**3", (), 8.0),
    ("min(x1, x2) + max(x1, x2)", (1.0, 4.0), 5.0),
])
def test_eval_point(text, x, expected):
    assert eval_point(parse_expr(text), x) == pytest.approx(expected, abs=1e-15)


def test_eval_point_vectorised():
    e = parse_expr("0.5*x1 + x2^2")
    x = np.array([[1.0, 2.0], [3.0, -1.0]])
    np.testing.assert_allclose(eval_point(e, x.T), [4.5, 2.5])


def test_division_by_zero():
    with pytest.raises(DomainError):
        eval_point(parse_expr("1/x1"), (0.0,))


def test_fractional_power_of_negative():
    with pytest.raises(DomainError):
        eval_point(parse_expr("x1^0.5"), (-1.0,))


@pytest.mark.parametrize("text,column", [("0.5**", 6), ("x1 +", 5), ("(x1", 4), ("x1 $ 2", 4)])
def test_parse_error_has_column(text, column):
    with pytest.raises(ParseError) as info:
        parse_expr(text)
    assert info.value.column == column


def test_variable_beyond_dimension_rejected():
    with pytest.raises(ParseError):
        parse_expr("x3", 2)


# --- interval evaluation -------------------------------------------------------------


def test_linear_enclosure_is_exact():
    iv = eval_interval(parse_expr("0.8*x1"), box((-1, 1)))
    assert iv.lo == pytest.approx(-0.8, abs=1e-15) and iv.hi == pytest.approx(0.8, abs=1e-15)
    assert iv.lo <= -0.8 and iv.hi >= 0.8


def test_square_contains_true_range():
    iv = eval_interval(parse_expr("x1^2"), box((-1, 2)))
    assert iv.lo <= 0 and iv.hi >= 4


def test_logistic_enclosure_by_sampling():
    e = parse_expr("x1*(1 - x1)")
    iv = eval_interval(e, box((0, 1)))
    xs = np.linspace(0, 1, 1000)
    vals = eval_point(e, [xs])
    assert iv.lo <= vals.min() and vals.max() <= iv.hi
    assert iv.lo <= 0 and iv.hi >= 0.25


def test_singular_denominator():
    with pytest.raises(DomainError):
        eval_interval(parse_expr("1/x1"), box((-1, 1)))


EXPRS = ["0.5*x1", "x1*x2", "x1^2 - x2", "exp(0.3*x1) - x2", "sin(x1) * cos(x2)",
         "x1/(2 + x2^2)", "min(x1, 0.5*x2) + max(x2, -x1)", "x1^3 - 2*x1*x2 + 0.1"]


@st.composite
def box_and_point(draw):
    bounds = []
    for _ in range(2):
        a = draw(st.floats(-3, 3))
        w = draw(st.floats(0, 3))
        bounds.append((a, a + w))
    t = [draw(st.floats(0, 1)) for _ in range(2)]
    x = tuple(lo + ti * (hi - lo) for (lo, hi), ti in zip(bounds, t))
    x = tuple(min(max(xi, lo), hi) for xi, (lo, hi) in zip(x, bounds))
    return box(*bounds), x


@given(st.sampled_from(EXPRS), box_and_point())
def test_containment(text, bp):
    b, x = bp
    e = parse_expr(text, 2)
    assert eval_interval(e, b).contains(eval_point(e, x))


@given(st.sampled_from(EXPRS), box_and_point(), st.floats(0, 1), st.floats(0, 1))
def test_inclusion_monotone(text, bp, s1, s2):
    outer, _ = bp
    inner = box(*[(d.lo + s1 * d.width / 2, d.hi - s2 * d.width / 2) for d in outer])
    e = parse_expr(text, 2)
    assert eval_interval(e, inner).subset_of(eval_interval(e, outer))


def test_random_containment_sweep():
    rng = np.random.default_rng(7)
    exprs = [parse_expr(t, 2) for t in EXPRS]
    for _ in range(10_000):
        e = exprs[rng.integers(len(exprs))]
        lo = rng.uniform(-3, 3, 2)
        hi = lo + rng.uniform(0, 2, 2)
        x = lo + rng.uniform(0, 1, 2) * (hi - lo)
        assert eval_interval(e, box(*zip(lo, hi))).contains(eval_point(e, x))


def test_halving_never_widens():
    exprs = [parse_expr(t, 2) for t in EXPRS]
    for e in exprs:
        widths = []
        for k in range(8):
            h = 2.0 ** -k
            widths.append(eval_interval(e, box((0.2, 0.2 + h), (-0.3, -0.3 + h))).width)
        assert all(b <= a for a, b in zip(widths, widths[1:]))


# --- Lipschitz and subdivision ---------------------------------------------------------


def test_lipschitz_linear():
    assert lipschitz_bound([parse_expr("0.5*x1 - 2*x2", 2)], box((-1, 1), (-1, 1))) == pytest.approx(2.5)


def test_lipschitz_singular_is_infinite():
    assert math.isinf(lipschitz_bound([parse_expr("1/x1")], box((-1, 1))))


def test_subdivide_constant_single_piece():
    pieces = subdivide_until([parse_expr("1")], box((0, 1)), 0.1)
    assert len(pieces) == 1
    assert pieces[0][1][0] == Interval(1.0, 1.0)


def test_subdivide_identity_widths():
    pieces = subdivide_until([parse_expr("x1")], box((0, 1)), 0.25)
    assert len(pieces) >= 4
    assert all(b[0].width <= 0.25 for b, _ in pieces)


def test_subdivide_outputs_meet_budget():
    e = parse_expr("2*x1")
    pieces = subdivide_until([e], box((0, 1)), 0.25)
    for b, outs in pieces:
        assert outs[0].width < 0.25
        assert eval_interval(e, b).width < 0.25


def _covers(pieces, whole):
    vol = math.fsum(b.volume() for b, _ in pieces)
    return math.isclose(vol, whole.volume(), rel_tol=1e-12)


@given(st.sampled_from(EXPRS), st.floats(0.05, 0.5))
def test_subdivide_covers_box(text, kappa):
    whole = box((-1, 0.5), (0, 1))
    pieces = subdivide_until([parse_expr(text, 2)], whole, kappa)
    assert _covers(pieces, whole)
    assert all(b.subset_of(whole) for b, _ in pieces)


def test_subdivide_one_dimensional_chain():
    pieces = subdivide_until([parse_expr("x1^2")], box((-1, 1)), 0.1)
    ivs = sorted((b[0].lo, b[0].hi) for b, _ in pieces)
    assert ivs[0][0] == -1 and ivs[-1][1] == 1
    assert all(a[1] == b[0] for a, b in zip(ivs, ivs[1:]))


def test_subdivide_budget():
    with pytest.raises(BudgetError):
        subdivide_until([parse_expr("x1")], box((0, 1)), 1e-3, max_boxes=16)


def test_grouped_budget():
    exprs = [parse_expr("x1"), parse_expr("0.5*x1")]
    pieces = subdivide_until(exprs, box((0, 1)), 0.2, groups=[[0], [1]])
    for _, outs in pieces:
        assert math.hypot(outs[0].width, outs[1].width) < 0.2


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_interval_arithmetic_contains_exact(a, b, c, d):
    assume(a <= b and c <= d)
    x, y = Interval(a, b), Interval(c, d)
    for p in (a, b):
        for q in (c, d):
            for res, exact in ((x + y, Fraction(p) + Fraction(q)),
                               (x - y, Fraction(p) - Fraction(q)),
                               (x * y, Fraction(p) * Fraction(q))):
                assert Fraction(res.lo) <= exact <= Fraction(res.hi)


def test_nested_box_tiny_offset():
    # 1 - 6.7e-129 rounds up to exactly 1, so the inner enclosure must not exceed the outer one
    e = parse_expr("x1^2 - x2", 2)
    inner = eval_interval(e, box((6.685829449150744e-129, 1.0), (6.685829449150744e-129, 1.0)))
    assert inner.subset_of(eval_interval(e, box((0.0, 1.0), (0.0, 1.0))))
    assert inner.hi == 1.0


finite = st.floats(-1e6, 1e6)


@given(finite, finite, st.sampled_from(["add", "sub", "mul", "div"]))
def test_point_operations_are_directed_roundings(a, b, op):
    """Point operands give the two floats adjacent to the exact rational result."""
    assume(op != "div" or b != 0.0)
    fa, fb = Fraction(a), Fraction(b)
    exact = {"add": fa + fb, "sub": fa - fb, "mul": fa * fb, "div": fa / fb if b else 0}[op]
    x, y = Interval.point(a), Interval.point(b)
    r = {"add": x + y, "sub": x - y, "mul": x * y, "div": x / y if b else x}[op]
    assert Fraction(r.lo) <= exact <= Fraction(r.hi)
    assert math.nextafter(r.lo, math.inf) > exact or Fraction(r.lo) == exact
    assert math.nextafter(r.hi, -math.inf) < exact or Fraction(r.hi) == exact
