import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from perstab.expr import ExpressionError, compile_expression, parse_expression


@pytest.mark.parametrize(
    "text, value",
    [
        ("1 + 2*3", 7),
        ("2^3^2", 512),
        ("2**3", 8),
        ("-2^2", -4),
        ("(1 + 2) * 3", 9),
        ("sin(pi/2)", 1),
        ("cos(0) + exp(0)", 2),
        ("π", math.pi),
        ("e", math.e),
        ("1.5e2 / 3", 50),
        ("sqrt(4) - abs(-3)", -1),
        ("2 ^ -1", 0.5),
    ],
)
def test_constant_expressions(text, value):
    assert float(parse_expression(text, ())) == pytest.approx(value, rel=1e-14)


def test_variables_and_derivatives():
    e = parse_expression("r^2 * sin(t)")
    r, t = sp.symbols("r t", real=True)
    assert sp.simplify(sp.diff(e, r) - 2 * r * sp.sin(t)) == 0
    f = compile_expression(e, ("r", "t"))
    assert f(np.array([2.0]), np.array([np.pi / 2]))[0] == pytest.approx(4.0)


def test_compiled_constant_broadcasts():
    f = compile_expression(parse_expression("3", ("r",)), ("r",))
    assert f(np.zeros((4, 2))).shape == (4, 2)


@pytest.mark.parametrize(
    "text, column",
    [("1 +", 4), ("foo(1)", 1), ("r + q", 5), ("(1 + 2", 7), ("1 $ 2", 3), ("sin 1", 1), ("2 3", 3)],
)
def test_errors_carry_columns(text, column):
    with pytest.raises(ExpressionError) as info:
        parse_expression(text, ("r",))
    assert info.value.column == column


def test_unknown_variable_rejected():
    with pytest.raises(ExpressionError, match="unknown name 'u'"):
        parse_expression("u + 1", ("r", "t"))


def test_numbers_pass_through():
    assert parse_expression(2.5, ()) == sp.Float(2.5)
    assert parse_expression(3, ()) == 3


_atoms = st.one_of(
    st.integers(0, 9).map(str),
    st.sampled_from(["r", "t", "pi", "1.5", "0.25"]),
)


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda x: f"({x[0]} {x[1]} {x[2]})"),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "tanh"]), children).map(lambda x: f"{x[0]}({x[1]})"),
        children.map(lambda c: f"-{c}"),
    )


_expressions = st.recursive(_atoms, _combine, max_leaves=12)


@settings(max_examples=150, deadline=None)
@given(_expressions, st.floats(-2, 2), st.floats(-2, 2))
def test_fuzz_matches_python_evaluation(text, r, t):
    """Generated expressions parse and agree with Python's own evaluation."""
    env = {"r": r, "t": t, "pi": math.pi, "sin": math.sin, "cos": math.cos, "exp": math.exp, "tanh": math.tanh}
    try:
        expected = eval(text, {"__builtins__": {}}, env)
    except OverflowError:
        return
    got = compile_expression(parse_expression(text), ("r", "t"))(np.array(r), np.array(t))
    if math.isfinite(expected) and abs(expected) < 1e100:
        assert float(got) == pytest.approx(expected, rel=1e-9, abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="rt0123456789.+-*/^()sincoxp ", max_size=20))
def test_fuzz_garbage_never_crashes(text):
    """Arbitrary input either parses or raises ExpressionError; nothing else escapes."""
    try:
        parse_expression(text)
    except ExpressionError as exc:
        assert 1 <= exc.column <= len(text) + 1
    except (ZeroDivisionError, OverflowError, ValueError, TypeError):
        # sympy arithmetic on constant subexpressions (e.g. 0^-1) may still fail
        pass
