import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cartan_lab.dsl import (DomainError, MetricSyntaxError, PhasePoint, UnknownIdentifierError,
                            VariableIndexError, differentiate, euler_defect, evaluate, parse_expression,
                            parse_metric, poisson_bracket)
from cartan_lab.dsl import expr as E
from cartan_lab.dsl.metric import diff_expr, hessian_exprs
from cartan_lab.oracle import fd_partial

from conftest import pp

coord = st.floats(-1.5, 1.5, allow_nan=False)
mom = st.floats(0.2, 2.0, allow_nan=False)

EXPRS = [
    "x2^2*(p1^2+p2^2)",
    "sqrt(p1^2+p2^2)+0.1*p1",
    "exp(x1)*p1^2 + sin(x2)*p1*p2 + cos(x1*x2)*p2^2",
    "(p1^2 + p2^2)/(1 + x1^2) - log(2 + x2)*p1*p2",
    "2^p1 * x1",
]


@pytest.mark.parametrize("text,dim,kind,pt,expected", [
    ("p1^2 + p2^2", 2, "K-squared", ((0, 0), (1, 0)), 1.0),
    ("x2^2 * (p1^2 + p2^2)", 2, "K-squared", ((0, 1), (1, 0)), 1.0),
    ("x2^2*(p1^2+p2^2)", 2, "K-squared", ((0, 2), (1, 1)), 8.0),
    ("sqrt(p1^2+p2^2) + 0.1*p1", 2, "K", ((0, 0), (1, 0)), 1.21),
])
def test_parse_and_evaluate(text, dim, kind, pt, expected):
    m = parse_metric(text, dim, kind)
    assert evaluate(m.ast, pp(*pt)) == pytest.approx(expected, abs=1e-15)


def test_kind_k_stores_square():
    m = parse_metric("sqrt(p1^2+p2^2)+0.1*p1", 2, "K")
    assert m.kind == "K-squared" or m.kind == "K"
    assert m.ast == E.mul(m.user_root, m.user_root)


@pytest.mark.parametrize("text,err,col", [
    ("p1 + q2", UnknownIdentifierError, 6),
    ("p3 * p1", VariableIndexError, 1),
    ("p1 ^^ 2", MetricSyntaxError, 5),
    ("(p1 + p2", MetricSyntaxError, None),
    ("x1 ^ p1", MetricSyntaxError, 4),
    ("tan(p1)", MetricSyntaxError, None),
])
def test_parse_errors(text, err, col):
    with pytest.raises(err) as info:
        parse_metric(text, 2)
    if col is not None:
        assert info.value.column == col
        assert info.value.line == 1


def test_dim_must_be_at_least_two():
    with pytest.raises(ValueError):
        parse_metric("p1^2", 1)


def test_power_is_right_associative():
    e = parse_expression("2^3^2", 2)
    assert evaluate(e, pp((0, 0), (1, 0))) == 512.0


def test_unary_minus_binds_tighter_than_power():
    # unary sits below "^" in the grammar, so -p1^2 is (-p1)^2
    e = parse_expression("  - p1 ^ 2 +\n 3*p2 ", 2)
    assert evaluate(e, pp((0, 0), (2, 1))) == 7.0
    assert evaluate(parse_expression("-(p1^2)", 2), pp((0, 0), (2, 1))) == -4.0


def test_domain_error_names_subexpression():
    with pytest.raises(DomainError) as info:
        evaluate(parse_expression("p1 + log(x1)", 2), pp((0, 1), (1, 0)))
    assert "log" in str(info.value)


def test_evaluate_dimension_mismatch():
    with pytest.raises(ValueError):
        evaluate(parse_expression("p1", 2), PhasePoint((0, 0, 0), (1, 0, 0)), dim=2)
    with pytest.raises(ValueError):
        evaluate(parse_expression("p3", 3), pp((0, 0), (1, 0)))


def test_phase_point_rejects_zero_section():
    with pytest.raises(ValueError):
        PhasePoint((0, 0), (0, 0))


@pytest.mark.parametrize("mi,pt,expected", [
    ([("p1", 1)], ((0, 1), (1.5, 0)), 3.0),
    ([("p1", 2)], ((0, 3), (1, 0)), 18.0),
    ([("x2", 1), ("p1", 1)], ((0, 1), (1, 0)), 4.0),
    ([("p1", 1), ("x2", 1)], ((0, 1), (1, 0)), 4.0),
])
def test_differentiate_hyp2(mi, pt, expected):
    m = parse_metric("x2^2*(p1^2+p2^2)", 2)
    assert evaluate(differentiate(m, mi), pp(*pt)) == pytest.approx(expected)


def test_mixed_derivative_matches_fd():
    m = parse_metric("x2^2*(p1^2+p2^2)", 2)
    d_p1 = differentiate(m, [("p1", 1)])
    fd = fd_partial(lambda z: evaluate(d_p1, PhasePoint.from_z(z)), pp((0, 1), (1, 0)), [("x2", 1)])
    assert fd == pytest.approx(4.0, abs=1e-6)


def test_derivative_cache_is_coherent():
    m = parse_metric(EXPRS[2], 2)
    pt = pp((0.3, -0.2), (0.7, 1.1))
    key = [("x1", 1), ("p2", 2), ("x2", 1)]
    cached = evaluate(differentiate(m, key), pt)
    again = evaluate(differentiate(m, list(reversed(key))), pt)
    fresh = evaluate(diff_expr(m.ast, key, 2), pt)
    assert cached == again == fresh


def test_order_limit():
    m = parse_metric("p1^2+p2^2", 2)
    with pytest.raises(ValueError):
        differentiate(m, [("p1", 7)])


@pytest.mark.parametrize("text", EXPRS)
@given(x1=coord, x2=st.floats(0.1, 1.5), p1=mom, p2=mom, a=st.integers(0, 3), b=st.integers(0, 3))
def test_mixed_partials_commute(text, x1, x2, p1, p2, a, b):
    e = parse_expression(text, 2)
    pt = pp((x1, x2), (p1, p2))
    ab = evaluate(E.diff(E.diff(e, E.var(*"xxpp"[a:a + 1], a % 2 + 1)), E.var(*"xxpp"[b:b + 1], b % 2 + 1)), pt)
    ba = evaluate(E.diff(E.diff(e, E.var(*"xxpp"[b:b + 1], b % 2 + 1)), E.var(*"xxpp"[a:a + 1], a % 2 + 1)), pt)
    assert ab == pytest.approx(ba, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("text", EXPRS)
@given(x1=coord, x2=st.floats(0.1, 1.5), p1=mom, p2=mom, var=st.sampled_from(["x1", "x2", "p1", "p2"]))
def test_symbolic_matches_finite_difference(text, x1, x2, p1, p2, var):
    e = parse_expression(text, 2)
    pt = pp((x1, x2), (p1, p2))
    exact = evaluate(diff_expr(e, [var], 2), pt)
    fd = fd_partial(lambda z: evaluate(e, PhasePoint.from_z(z)), pt, [var])
    if abs(exact) > 1e-3:
        assert fd == pytest.approx(exact, rel=1e-5)


def test_evaluation_is_bit_deterministic():
    e = parse_expression(EXPRS[3], 2)
    pt = pp((0.123456789, 0.987654321), (1.1, -0.3))
    vals = {evaluate(e, pt) for _ in range(5)}
    vals.add(evaluate(parse_expression(EXPRS[3], 2), pt))
    assert len(vals) == 1


def test_fingerprint_is_stable():
    a = parse_metric("p2^2 + p1^2", 2)
    b = parse_metric("p1^2+p2^2", 2)
    assert a.fingerprint == b.fingerprint
    assert a.fingerprint != parse_metric("p1^2+2*p2^2", 2).fingerprint


# -- Poisson bracket -------------------------------------------------------------

def test_poisson_canonical_pair():
    pb = poisson_bracket(E.var("p", 1), E.var("x", 1), 2)
    assert evaluate(pb, pp((0.3, 0.4), (1, 2))) == 1.0


def test_poisson_antisymmetric_zero():
    f = parse_expression("x2*p1", 2)
    assert evaluate(poisson_bracket(f, f, 2), pp((0.3, 0.4), (1, 2))) == 0.0


@pytest.mark.parametrize("x,p,expected", [((0, 1), (1, 0), 0.0), ((0, 2), (0.5, 0.3), 0.6)])
def test_poisson_g11_k2_hyp2(x, p, expected):
    # {g_11, K^2} = -(dK^2/dp2)(dg_11/dx2) = -(2 x2^2 p2)(-2/x2^3) = 4 p2 / x2
    g11 = parse_expression("1/x2^2", 2)
    k2 = parse_expression("x2^2*(p1^2+p2^2)", 2)
    assert evaluate(poisson_bracket(g11, k2, 2), pp(x, p)) == pytest.approx(expected, abs=1e-14)


@given(a=coord, b=coord, c=coord, d=coord)
def test_poisson_jacobi_like_antisymmetry(a, b, c, d):
    f = parse_expression("x1*p2^2 + sin(x2)*p1", 2)
    g = parse_expression("exp(x1)*p1*p2", 2)
    pt = pp((a, b), (c + 2, d))
    assert evaluate(poisson_bracket(f, g, 2), pt) == pytest.approx(-evaluate(poisson_bracket(g, f, 2), pt))


# -- Euler defects ----------------------------------------------------------------

@pytest.mark.parametrize("text,kind", [("p1^2+p2^2", "K-squared"), ("x2^2*(p1^2+p2^2)", "K-squared"),
                                       ("sqrt(p1^2+p2^2)+0.1*p1", "K"),
                                       ("sqrt(exp(x1)*p1^2+p2^2+x2*p1*p2)+0.2*sin(x2)*p1", "K")])
def test_euler_defects_vanish(text, kind):
    m = parse_metric(text, 2, kind)
    rng = np.random.default_rng(3)
    g = hessian_exprs(m)
    for _ in range(50):
        pt = pp(rng.uniform(-1, 1, 2) + [0, 1.5], rng.uniform(0.3, 1.5, 2))
        assert abs(euler_defect(m.ast, 2, pt)) < 1e-9 * max(1, evaluate(m.ast, pt))
        assert abs(euler_defect(g[0][0], 0, pt)) < 1e-9


def test_euler_defect_inhomogeneous():
    e = parse_expression("p1^2+p2^2+1", 2)
    assert euler_defect(e, 2, pp((0, 0), (math.cos(0.3), math.sin(0.3)))) == pytest.approx(-2.0)
