import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cartan_lab.core import sasaki_metric_apply, tensor_set
from cartan_lab.frame import (BRACKET_ROWS, CONNECTION_ROWS, DegenerateFrame, PivotMarginError,
                              PivotMarginWarning, build_frame, choose_pivot, connection_projected,
                              frame_brackets, frame_connection, frame_geometry, frame_tensors)

from conftest import close, metric, points, pp

s = 1 / math.sqrt(2)


@pytest.mark.filterwarnings("ignore::cartan_lab.frame.PivotMarginWarning")
@pytest.mark.parametrize("p,pivot,E,g11", [
    ((1, 0), 0, [[0, 1]], 1.0),
    ((s, s), 0, [[-1, 1]], 2.0),
    ((0.2, 1.0), 1, [[1, -0.2]], 1.04),
])
def test_euclidean_frames(p, pivot, E, g11):
    f = build_frame(metric("EUC"), pp((0, 0), p))
    assert f.pivot == pivot
    assert close(f.E, E, 1e-15)
    assert f.g_frame_up[0, 0] == pytest.approx(g11)
    assert close(f.xi.h, p, 1e-15) and close(f.xi.v, 0, 0)


def test_pivot_ties_and_degenerate():
    assert choose_pivot(np.array([1.0, -1.0]))[0] == 0
    assert choose_pivot(np.array([0.2, 0.0, -0.7])) == (2, pytest.approx(0.2 / 0.7))
    with pytest.raises(DegenerateFrame):
        choose_pivot(np.zeros(3))


def test_pivot_margin():
    m = metric("EUC")
    with pytest.warns(PivotMarginWarning):
        fg = frame_geometry(m, pp((0, 0), (s, s)))
    with pytest.raises(PivotMarginError):
        fg.require_margin()
    with pytest.raises(PivotMarginError):
        frame_geometry(m, pp((0, 0), (s, s)), strict=True)


@pytest.mark.parametrize("name", ["EUC", "HYP2", "RAND2", "WARPED", "RAND3", "CONF3"])
@pytest.mark.parametrize("alternate", [False, True])
def test_frame_structure(name, alternate):
    m = metric(name)
    for pt in points(name, 5, seed=1):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PivotMarginWarning)
            fg = frame_geometry(m, pt, order=3, alternate=alternate)
        f = fg.ortho_frame()
        ts = tensor_set(m, pt)
        assert close(f.E @ ts.ell, 0, 1e-10)
        assert np.linalg.matrix_rank(f.E) == m.dim - 1
        assert close(f.E_bar.T @ f.E.T, np.eye(m.dim - 1), 1e-10)
        assert close(fg.gram(), fg.gram_expected(), 1e-8 * (1 + ts.K ** 2))
        assert sasaki_metric_apply(ts, f.xi, f.xi) == pytest.approx(ts.K ** 2, rel=1e-9)
        assert sasaki_metric_apply(ts, f.Cstar, f.Cstar) == pytest.approx(ts.K ** 2, rel=1e-9)


def test_hyperbolic_gram_example():
    fg = frame_geometry(metric("HYP2"), pp((0, 1), (0.6, 0.8)), order=3)
    assert close(fg.gram(), fg.gram_expected(), 1e-9)


@pytest.mark.parametrize("name", ["HYP2", "RAND2", "WARPED", "RAND3"])
def test_brackets_match_numeric(name):
    m = metric(name)
    for pt in points(name, 3, seed=2):
        for alternate in (False, True):
            rows = frame_brackets(m, pt, alternate=alternate)
            assert set(rows) == set(BRACKET_ROWS)
            for r in rows.values():
                assert r.max_residual <= 1e-5, (r.row, r.max_residual)
                assert r.max_exact_residual <= 1e-9, (r.row, r.max_exact_residual)


def test_euclidean_brackets():
    rows = frame_brackets(metric("EUC"), pp((0.1, 0.2), (1, 0)))
    e = rows["xi_cstar"].entries[("xi", "cstar")]
    assert close(e["formula"], 0, 1e-12) and close(e["numeric"], 0, 1e-7)
    for v in rows["dbar_dbar"].entries.values():
        assert close(v["formula"], 0, 0)


@pytest.mark.parametrize("name", ["EUC", "HYP2", "SPHERE", "CONF3"])
def test_connection_rows_agree_on_riemannian_duals(name):
    m = metric(name)
    for pt in points(name, 3, seed=3):
        rows = frame_connection(m, pt)
        assert set(rows) == set(CONNECTION_ROWS)
        for r in rows.values():
            assert r.residual <= 1e-5, (r.row, r.residual)


def test_connection_rows_on_randers():
    # g_abc enters three closed-form rows with the opposite sign to the projection
    m = metric("WARPED")
    pt = points("WARPED", 1, seed=4)[0]
    rows = frame_connection(m, pt)
    bad = {"dbar_dbar", "dbar_pbar", "pbar_dbar"}
    for name, r in rows.items():
        if name not in bad:
            assert r.residual <= 1e-5, (name, r.residual)
    g = np.max(np.abs(frame_tensors(m, pt).g_abc))
    assert g > 1e-3
    assert max(rows[b].residual for b in bad) >= 0.25 * g


def test_special_connection_values():
    m = metric("EUC")
    for pt in points("EUC", 10, seed=5):
        fg = frame_geometry(m, pt, order=4)
        pr = connection_projected(fg)
        n = fg.n
        assert close(pr["xi_xi"], 0, 1e-12)
        assert close(pr["cstar_cstar"], np.eye(2 * n)[n], 1e-12)
        K2 = float(fg.geo.k2.value)
        gu = np.array(fg.gab_up.value)
        assert close(pr["pbar_pbar"][:, :, n], -gu / K2, 1e-6)


def test_frame_tensors_vanish_for_euclidean():
    ft = frame_tensors(metric("EUC"), pp((0.3, 0.1), (0.6, 0.8)))
    for t in (ft.R_abc, ft.R_ab, ft.g_abc, ft.Gamma_abc, ft.N_abc):
        assert close(t, 0, 0)


def test_frame_curvature_hyperbolic_unit_shell():
    # R_ij = +K^2 h_ij on the hyperbolic plane (see test_core), so R_ab = g_ab on K = 1
    pt = pp((0.2, 1.0), (0.6, 0.8))
    fg = frame_geometry(metric("HYP2"), pt, order=4)
    assert close(fg.tensors.R_ab, np.array(fg.gab_down.value), 1e-9)


@given(lam=st.sampled_from([0.5, 2.0, 3.0]), seed=st.integers(0, 1000))
def test_frame_scaling(lam, seed):
    m = metric("WARPED")
    pt = points("WARPED", 1, seed=seed)[0]
    a, b = build_frame(m, pt), build_frame(m, pt.scaled(lam))
    assert close(a.E, b.E, 1e-9)
    assert close(b.g_frame_up, a.g_frame_up, 1e-9 * (1 + np.max(np.abs(a.g_frame_up))))
