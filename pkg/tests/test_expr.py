import math

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from agm.expr import (ONE, ZERO, Add, Const, CoordinateRangeError, ExprSyntaxError, add, const,
                      diff, diff_fd, evaluate, max_coordinate, mul, neg, parse, to_text)


def test_precedence_and_unary_minus():
    x = np.array([0.5, 2.0])
    assert evaluate(parse("1 + 2*x1^2", 2), x) == pytest.approx(1.5)
    # unary minus binds tighter than ^: (-x1)^2
    assert evaluate(parse("-x1^2", 2), x) == pytest.approx(0.25)
    assert evaluate(parse("2*-x2", 2), x) == pytest.approx(-4.0)
    assert evaluate(parse("x1 - x2 - 1", 2), x) == pytest.approx(-2.5)
    assert evaluate(parse("1.5e-1*x2", 2), x) == pytest.approx(0.3)


def test_functions():
    x = np.array([0.3, -0.7])
    assert evaluate(parse("sin(x1)*cos(x2) + exp(x1)", 2), x) == pytest.approx(
        math.sin(0.3) * math.cos(-0.7) + math.exp(0.3))


@pytest.mark.parametrize("text, pos", [("x1 +", 4), ("(x1", 3), ("x1 $ 2", 3), ("sin x1", 4), ("", 0)])
def test_syntax_errors_report_position(text, pos):
    with pytest.raises(ExprSyntaxError) as info:
        parse(text, 2)
    assert info.value.position == pos


def test_coordinate_out_of_range():
    with pytest.raises(CoordinateRangeError):
        parse("x3 + 1", 2)
    with pytest.raises(CoordinateRangeError):
        parse("x0", 2)


def test_constant_folding():
    x1, x2 = parse("x1", 2), parse("x2", 2)
    assert to_text(add(ZERO, x1)) == "x1"
    assert mul(ZERO, x1) is ZERO
    assert to_text(mul(ONE, x2)) == "x2"
    assert to_text(neg(neg(x1))) == "x1"
    folded = add(const(2), const(3))
    assert isinstance(folded, Const) and folded.value == 5


def test_nodes_are_immutable():
    e = parse("x1 + x2", 2)
    assert isinstance(e, Add)
    with pytest.raises(AttributeError):
        e.left = ONE


def test_max_coordinate():
    assert max_coordinate(parse("sin(x3)*x1", 4)) == 3
    assert max_coordinate(parse("2", 4)) == 0


def test_diff_known():
    e = parse("x1^3*sin(x2)", 2)
    x = np.array([0.4, 1.1])
    assert evaluate(diff(e, 1), x) == pytest.approx(3 * 0.16 * math.sin(1.1))
    assert evaluate(diff(e, 2), x) == pytest.approx(0.064 * math.cos(1.1))
    assert diff(e, 3) is ZERO


# random expression trees for property checks
_leaf = st.one_of(
    st.sampled_from(["x1", "x2", "x3"]),
    st.floats(min_value=-3, max_value=3, allow_nan=False).map(lambda v: repr(round(v, 4))),
)


def _grow(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda t: f"{t[0]}(0.3*{t[1]})"),
        st.tuples(children, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}"),
        children.map(lambda c: f"-{c}"),
    )


expr_text = st.recursive(_leaf, _grow, max_leaves=8)


@settings(max_examples=60, deadline=None)
@given(expr_text)
@example("-((-2.0 * x1))^1")
def test_print_parse_round_trip(text):
    e = parse(text, 3)
    again = parse(to_text(e), 3)
    assert to_text(again) == to_text(e)
    x = np.array([[0.2, -0.4, 0.7], [-0.5, 0.1, 0.3]])
    np.testing.assert_array_equal(np.nan_to_num(evaluate(again, x)), np.nan_to_num(evaluate(e, x)))


@settings(max_examples=60, deadline=None)
@given(expr_text, st.integers(1, 3))
def test_exact_derivative_matches_central_difference(text, k):
    e = parse(text, 3)
    x = np.array([0.21, -0.37, 0.52])
    exact = evaluate(diff(e, k), x)
    approx = diff_fd(e, k, x, 1e-5)
    assert exact == pytest.approx(approx, rel=1e-5, abs=1e-6)
