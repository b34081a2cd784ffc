import numpy as np
import pytest

from degensolve.basics import ExpressionEvaluationError, ExpressionSyntaxError, ValidationError
from degensolve.funcdsl import evaluate, parse, unparse


def test_precedence():
    assert parse("1+2*3")() == 7
    assert parse("(1+2)*3")() == 9
    assert parse("-2^2")() == -4
    assert parse("2^3^2")() == 512
    assert parse("2^-1")() == 0.5
    assert parse("8/4/2")() == 1
    assert parse("1 - 2 - 3")() == -4


def test_functions():
    assert parse("exp(0)")() == 1
    assert parse("min(3, 1, 2)")() == 1
    assert parse("max(3, 1, 2)")() == 3
    assert parse("pow(2, 10)")() == 1024
    assert parse("abs(-3)")() == 3
    assert parse("sqrt(4)")() == 2
    assert parse("log(1)")() == 0
    assert parse("sin(0) + cos(0)")() == 1


def test_numbers():
    assert parse("1e3")() == 1000
    assert parse(".5")() == 0.5
    assert parse("2.5E-1")() == 0.25


def test_variables():
    e = parse("x*y + exp(m) - u")
    assert e.variables() == {"x", "y", "m", "u"}
    assert evaluate(e, {"x": 2, "y": 3, "m": 0, "u": 1}) == 6


def test_array_broadcast():
    x = np.array([1.0, 2.0, 3.0])
    m = np.array([1.0, 2.0])
    v = parse("x*m").evaluate_on((3, 2), {"x": x[:, None], "m": m[None, :]})
    assert v.shape == (3, 2)
    assert v[2, 1] == 6
    c = parse("7").evaluate_on((2, 2), {})
    assert np.all(c == 7)


def test_coupling_law():
    e = parse("2^-abs(m-j)")
    m = np.arange(1, 5, dtype=float)
    v = e.evaluate({"m": m[:, None], "j": m[None, :]})
    assert v[0, 0] == 1
    assert v[0, 3] == 0.125
    assert np.array_equal(v, v.T)


def test_unparse():
    e = parse("2^-abs(m-j) + x*3")
    assert unparse(e) == "((2.0 ^ (-abs((m - j)))) + (x * 3.0))"
    m = np.arange(1, 4, dtype=float)
    b = {"m": m[:, None], "j": m[None, :], "x": 0.5}
    assert np.array_equal(parse(unparse(e)).evaluate(b), e.evaluate(b))


CATALOG = [
    "x^2 + 1",
    "2^-abs(m-j)",
    "0.1*2^(-abs(m-j))",
    "-2^2",
    "2^3^2",
    "8/4/2",
    "1 - 2 - 3",
    "- -x",
    "+x",
    "min(x, y, 0.5)",
    "max(x, 2*y)",
    "pow(x, 3)",
    "sqrt(abs(x - y))*log(1 + x)",
    "exp(X)*exp(Y)/m",
    "-(2+X)*Y*exp(X+Y) - X*(2+Y)*exp(X+Y)",
    "1e-3*u^2 + ux*uy",
    "sin(t1*x)/cos(t2*y)",
    ".5*s + 2.5E-1",
]


def test_unparse_catalog():
    for source in CATALOG:
        e = parse(source)
        text = unparse(e)
        again = parse(text)
        assert again.root == e.root, source
        assert unparse(again) == text


def test_unbound_variable():
    with pytest.raises(ExpressionEvaluationError, match="unbound variable 'z'"):
        parse("x + z")(x=1)


def test_syntax_errors():
    with pytest.raises(ExpressionSyntaxError) as e:
        parse("1 + * 2")
    assert e.value.position == 4
    with pytest.raises(ExpressionSyntaxError) as e:
        parse("sin(1")
    assert e.value.position == 5
    with pytest.raises(ExpressionSyntaxError, match="unknown function 'foo'"):
        parse("foo(1)")
    with pytest.raises(ExpressionSyntaxError) as e:
        parse("1 $ 2")
    assert e.value.position == 2
    with pytest.raises(ExpressionSyntaxError, match="wrong number of arguments"):
        parse("exp(1, 2)")
    with pytest.raises(ExpressionSyntaxError, match="expected '\\(' after function"):
        parse("exp + 1")
    with pytest.raises(ExpressionSyntaxError):
        parse("")


def test_syntax_error_is_validation():
    with pytest.raises(ValidationError):
        parse("(1 + 2")


def test_domain_errors():
    with pytest.raises(ExpressionEvaluationError, match="division by zero"):
        parse("1/x")(x=0)
    with pytest.raises(ExpressionEvaluationError):
        parse("sqrt(x)")(x=-1)
    with pytest.raises(ExpressionEvaluationError):
        parse("log(x)")(x=0)
    with pytest.raises(ExpressionEvaluationError, match="non-integer exponent"):
        parse("x^0.5")(x=-2)
    with pytest.raises(ExpressionEvaluationError, match="non-finite"):
        parse("exp(x)")(x=1e4)
    assert parse("x^3")(x=-2) == -8
