import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cartan_lab.core import levi_civita_natural, nonlinear_connection
from cartan_lab.dsl import PhasePoint, evaluate
from cartan_lab.dsl.metric import diff_expr, hessian_exprs
from cartan_lab.oracle import (FDConfig, OracleDomainError, directional, fd_partial, koszul_oracle,
                               lie_bracket_numeric, point_evaluator, riemann_oracle)

from conftest import close, metric, points, pp


def test_fd_simple_derivative():
    f = lambda z: z[2] ** 2  # noqa: E731  p1^2 in n = 2
    assert fd_partial(f, pp((0, 0), (1, 0)), [("p1", 1)]) == pytest.approx(2.0, abs=1e-8)


def test_fd_constant_is_zero():
    f = lambda z: 3.5  # noqa: E731
    assert abs(fd_partial(f, pp((0.2, 0.1), (1, 0)), ["x1"])) < 1e-9
    assert abs(fd_partial(f, pp((0.2, 0.1), (1, 0)), ["x1", "p2"])) < 1e-4


def test_fd_against_symbolic_randers_g11():
    m = metric("RAND2")
    g11 = hessian_exprs(m)[0][0]
    pt = pp((0, 0), (1, 0))
    exact = evaluate(diff_expr(g11, ["p2"], 2), pt)
    fd = fd_partial(lambda z: evaluate(g11, PhasePoint.from_z(z)), pt, ["p2"])
    assert fd == pytest.approx(exact, abs=1e-5)


def test_fd_rejects_third_order_and_bad_config():
    with pytest.raises(ValueError):
        fd_partial(lambda z: 0.0, pp((0, 0), (1, 0)), ["x1", "x1", "x2"])
    with pytest.raises(ValueError):
        FDConfig(step=0)
    with pytest.raises(ValueError):
        FDConfig(scheme="forward")


def test_fd_domain_error():
    f = lambda z: np.log(z[0]) if z[0] > 0 else float("nan")  # noqa: E731
    with pytest.raises(OracleDomainError):
        fd_partial(f, pp((0, 1), (1, 0)), ["x1"])


def test_step_scaling():
    assert close(FDConfig().h(np.array([0.5, -3.0])), [1e-5, 3e-5], 1e-20)
    assert close(FDConfig(scaling=False).h(np.array([0.5, -3.0])), [1e-5, 1e-5], 0)


@pytest.mark.parametrize("var", ["x1", "p2"])
def test_richardson_consistency(var):
    f = lambda z: np.exp(z[0]) * np.sin(z[3]) + z[0] ** 3 * z[3] ** 2  # noqa: E731
    pt = pp((0.4, 0.0), (0.0, 0.7))
    x, p = 0.4, 0.7
    exact = np.exp(x) * np.sin(p) + 3 * x ** 2 * p ** 2 if var == "x1" else np.exp(x) * np.cos(p) + 2 * x ** 3 * p
    r1 = abs(fd_partial(f, pt, [var], FDConfig(step=1e-2)) - exact)
    r2 = abs(fd_partial(f, pt, [var], FDConfig(step=5e-3)) - exact)
    assert 3.0 <= r1 / r2 <= 5.0


@given(x=st.floats(-1, 1), p=st.floats(0.3, 1.5))
def test_oracle_is_deterministic(x, p):
    m = metric("WARPED")
    pt = pp((x, 1.0), (p, 0.5))
    pe = point_evaluator(m)
    a, b = pe.at(pt.z), pe.at(pt.z)
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_point_evaluator_matches_pipeline():
    m = metric("WARPED")
    pe = point_evaluator(m)
    for pt in points("WARPED", 5):
        N, _ = nonlinear_connection(m, pt)
        assert close(pe.at(pt.z)["N"], N, 1e-9)


def test_koszul_euclidean_is_zero():
    assert close(koszul_oracle(metric("EUC"), pp((0.3, -0.1), (0.6, 0.8))), 0, 1e-7)


@pytest.mark.parametrize("name", ["HYP2", "RAND3"])
def test_koszul_matches_closed_form(name):
    m = metric(name)
    for pt in points(name, 2, seed=11):
        assert close(koszul_oracle(m, pt), levi_civita_natural(m, pt), 1e-4)


def test_koszul_torsion_reproduces_bracket():
    m = metric("HYP2")
    pt = pp((0.2, 1.3), (0.5, -0.7))
    T = koszul_oracle(m, pt)
    pe = point_evaluator(m)
    B = [pe.adapted_field(a) for a in range(4)]
    for a in range(4):
        for b in range(4):
            nat = lie_bracket_numeric(B[a], B[b], pt)
            h, v = pe.to_adapted(pt.z, nat)
            assert close(T[a, b] - T[b, a], np.concatenate([h, v]), 1e-4)


def test_coordinate_fields_commute():
    e = [lambda z, i=i: np.eye(4)[i] for i in range(4)]
    assert close(lie_bracket_numeric(e[0], e[3], np.array([0.1, 0.2, 1.0, 0.0])), 0, 1e-7)


def test_vertical_horizontal_bracket_sign_hyp2():
    # [d^j, delta_i] = d^j N_ik d^k
    m = metric("HYP2")
    pt = pp((0.2, 1.3), (0.5, -0.7))
    pe = point_evaluator(m)
    _, Nu = nonlinear_connection(m, pt)
    for i in range(2):
        for j in range(2):
            nat = lie_bracket_numeric(pe.adapted_field(2 + j), pe.adapted_field(i), pt)
            h, v = pe.to_adapted(pt.z, nat)
            assert close(h, 0, 1e-5)
            assert close(v, Nu[j, i], 1e-5)


def test_directional_along_coordinate():
    f = lambda z: z[0] * z[1]  # noqa: E731
    assert directional(f, [2.0, 3.0], [1.0, 0.0]) == pytest.approx(3.0)


@pytest.mark.parametrize("a_up,x,k", [
    ([[1, 0], [0, 1]], (0.3, 0.2), 0.0),
    ([["x2**2", 0], [0, "x2**2"]], (0.0, 1.0), -1.0),
    ([["x2**2/4", 0], [0, "x2**2/4"]], (0.0, 1.0), -0.25),
    ([["4*x2**2", 0], [0, "4*x2**2"]], (0.5, 1.7), -4.0),
])
def test_riemann_oracle_curvature(a_up, x, k):
    gamma, curv = riemann_oracle(a_up, x)
    assert curv == pytest.approx(k, abs=1e-8)
    if k == 0:
        assert close(gamma, 0, 0)


def test_riemann_oracle_singular():
    with pytest.raises(ValueError):
        riemann_oracle([["x2**2", 0], [0, "x2**2"]], (0.0, 0.0))
