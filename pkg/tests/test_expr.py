"""Expression language: parsing, printing, differentiation, compilation."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subcart.expr import (
    Const,
    DomainError,
    ExprError,
    ParseError,
    Var,
    add,
    as_expr,
    compile_scalar,
    compile_vector,
    cut,
    diff,
    div,
    eval_jet,
    fn,
    gradient_exprs,
    max_var_index,
    mul,
    neg,
    parse,
    pow_int,
    sub,
    to_text,
)

FD_TOL = 1e-6


def ev(e, *xs: float) -> float:
    return compile_scalar(e)(xs)


def test_parse_polynomial_values():
    e = parse("x1^2+x2^2", 2)
    assert ev(e, 3.0, 4.0) == 25.0
    assert ev(parse("2*x1+3", 1), 5.0) == 13.0
    assert ev(parse("x1*(x1-1)*(x1+1)", 1), 2.0) == 6.0
    assert ev(parse("1/(1+x1^2)", 1), 1.0) == 0.5


def test_parse_aliases_positional():
    e = parse("x^2+(y-1)^2-1", 2, aliases=("x", "y"))
    assert ev(e, 0.0, 0.0) == 0.0
    assert ev(e, 0.0, 2.0) == 0.0
    assert ev(e, 1.0, 1.0) == 0.0
    # alias list shorter than the dimension is fine, x<k> names still work
    e2 = parse("a+x2", 2, aliases=("a",))
    assert ev(e2, 1.0, 2.0) == 3.0


def test_parse_functions():
    assert ev(parse("sin(x1)", 1), 0.5) == pytest.approx(math.sin(0.5), abs=1e-15)
    assert ev(parse("exp(x1)*log(x1)", 1), 2.0) == pytest.approx(
        math.exp(2.0) * math.log(2.0), abs=1e-12
    )
    assert ev(parse("sqrt(x1)", 1), 9.0) == 3.0
    assert ev(parse("tanh(x1)", 1), 0.3) == pytest.approx(math.tanh(0.3), abs=1e-15)


def test_unary_minus_binds_to_the_base():
    # "-x1^2" is (-x1)^2 by the grammar, not -(x1^2)
    assert ev(parse("-x1^2", 1), 2.0) == 4.0
    assert ev(parse("0-x1^2", 1), 2.0) == -4.0
    assert ev(parse("-(x1^2)", 1), 2.0) == -4.0
    assert ev(parse("-x1*x2", 2), 2.0, 3.0) == -6.0


def test_parse_errors():
    with pytest.raises(ParseError):
        parse("x1^0.5", 1)
    with pytest.raises(ParseError):
        parse("x3", 2)
    with pytest.raises(ParseError):
        parse("(x1+1", 1)
    with pytest.raises(ParseError):
        parse("x1 @ x2", 2)
    with pytest.raises(ParseError):
        parse("bogus(x1)", 1)
    with pytest.raises(ParseError):
        parse("", 1)


def test_cutexp_values_and_derivative():
    c = parse("cutexp(x1)", 1)
    f = compile_scalar(c)
    assert f((1.0,)) == pytest.approx(math.exp(-1.0), abs=1e-16)
    assert f((0.0,)) == 0.0
    assert f((-2.0,)) == 0.0
    # d/dt exp(-1/t) = exp(-1/t)/t^2, the shift-2 member of the family
    d = diff(c, 0)
    assert to_text(d) == "cutexp2(x1)"
    assert compile_scalar(d)((1.0,)) == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert compile_scalar(d)((-1.0,)) == 0.0
    with pytest.raises(ExprError):
        cut(-1, Var(0))


def test_print_parse_round_trip():
    texts = [
        "x1^2+x2^2",
        "-x1*x2",
        "2-x1",
        "cutexp(x1)",
        "cutexp2(x1+x2)",
        "sin(x1)*cos(x2)",
        "x1/x2",
        "(x1+x2)^3",
        "1/(1+x1^2)",
        "x1*x2-x1^2/(2+x2)",
    ]
    pts = [(0.7, 1.3), (2.0, 3.0), (-0.4, 0.9)]
    for s in texts:
        e = parse(s, 2)
        rt = parse(to_text(e), 2)
        assert to_text(rt) == to_text(e)
        for p in pts:
            assert compile_scalar(rt)(p) == compile_scalar(e)(p)


def test_diff_known_formulas():
    e = parse("x1^3", 1)
    assert ev(diff(e, 0), 2.0) == 12.0
    e = parse("x1*x2", 2)
    assert ev(diff(e, 0), 5.0, 7.0) == 7.0
    assert ev(diff(e, 1), 5.0, 7.0) == 5.0
    e = parse("sin(x1)", 1)
    assert ev(diff(e, 0), 0.3) == pytest.approx(math.cos(0.3), abs=1e-15)
    e = parse("1/x1", 1)
    assert ev(diff(e, 0), 2.0) == pytest.approx(-0.25, abs=1e-15)
    assert ev(diff(parse("x2", 2), 0), 1.0, 1.0) == 0.0


poly_coeff = st.integers(min_value=-3, max_value=3)


@st.composite
def poly_exprs(draw):
    """Random bivariate polynomial built from the expression constructors."""
    terms = draw(st.lists(st.tuples(poly_coeff, st.integers(0, 3), st.integers(0, 3)),
                          min_size=1, max_size=4))
    e = as_expr(0.0)
    for c, i, j in terms:
        term = mul(as_expr(float(c)), mul(pow_int(Var(0), i), pow_int(Var(1), j)))
        e = add(e, term)
    return e


@given(poly_exprs(), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
@settings(max_examples=60, deadline=None)
def test_diff_matches_finite_differences(e, x, y):
    h = 1e-5
    f = compile_scalar(e)
    for var in (0, 1):
        g = compile_scalar(diff(e, var))
        step = [0.0, 0.0]
        step[var] = h
        fd = (f((x + step[0], y + step[1])) - f((x - step[0], y - step[1]))) / (2 * h)
        assert abs(g((x, y)) - fd) <= FD_TOL * (1.0 + abs(fd))


@given(poly_exprs(), poly_exprs(), st.floats(-1.2, 1.2), st.floats(-1.2, 1.2))
@settings(max_examples=40, deadline=None)
def test_diff_product_rule(f, g, x, y):
    p = (x, y)
    lhs = compile_scalar(diff(mul(f, g), 0))(p)
    rhs = compile_scalar(diff(f, 0))(p) * compile_scalar(g)(p) + compile_scalar(f)(
        p
    ) * compile_scalar(diff(g, 0))(p)
    assert abs(lhs - rhs) <= 1e-9 * (1.0 + abs(rhs))


def test_gradient_and_max_var_index():
    e = parse("x1^2+x3", 3)
    grads = gradient_exprs(e, 3)
    assert len(grads) == 3
    assert ev(grads[0], 2.0, 0.0, 0.0) == 4.0
    assert ev(grads[1], 2.0, 0.0, 0.0) == 0.0
    assert ev(grads[2], 2.0, 0.0, 0.0) == 1.0
    assert max_var_index(e) == 2
    assert max_var_index(Const(1.0)) == -1


def test_eval_jet_first_order():
    e = parse("x1^2*x2", 2)
    jet = eval_jet(e, (2.0, 3.0), order=1)
    assert jet.value == 12.0
    assert list(jet.gradient) == [12.0, 4.0]


def test_domain_guards_raise():
    with pytest.raises(DomainError):
        compile_scalar(parse("sqrt(x1)", 1))((-1.0,))
    with pytest.raises(DomainError):
        compile_scalar(parse("log(x1)", 1))((0.0,))
    with pytest.raises(DomainError):
        compile_scalar(parse("1/x1", 1))((0.0,))


def test_constructor_simplifications_preserve_value():
    x = Var(0)
    pt = (1.7,)
    assert compile_scalar(add(x, as_expr(0.0)))(pt) == 1.7
    assert compile_scalar(mul(x, as_expr(1.0)))(pt) == 1.7
    assert compile_scalar(mul(x, as_expr(0.0)))(pt) == 0.0
    assert compile_scalar(sub(x, x))(pt) == 0.0
    assert compile_scalar(neg(neg(x)))(pt) == 1.7
    assert compile_scalar(pow_int(x, 0))(pt) == 1.0
    assert compile_scalar(pow_int(x, 1))(pt) == 1.7
    assert compile_scalar(div(x, as_expr(2.0)))(pt) == 0.85
    assert compile_scalar(fn("sin", as_expr(0.0)))(()) == 0.0


def test_compile_vector_matches_scalars():
    es = [parse("x1+x2", 2), parse("x1*x2", 2), parse("cutexp(x1)", 2)]
    v = compile_vector(es)
    pt = (0.8, -0.3)
    got = v(pt)
    assert got == [compile_scalar(e)(pt) for e in es]
