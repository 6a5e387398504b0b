"""Independent numeric ground truth.

Nothing here goes through the expression-DAG derivatives or the jet
machinery: derivatives of K^2 are taken by sympy, inverses by
``numpy.linalg.inv``, and everything else by central finite differences.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as sp

from .dsl import expr as E
from .dsl.metric import MetricExpression, PhasePoint, normalize_multi_index


class SingularGram(ValueError):
    pass


class OracleDomainError(ArithmeticError):
    pass


@dataclass(frozen=True)
class FDConfig:
    step: float = 1e-5
    scheme: str = "central"
    scaling: bool = True

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.scheme != "central":
            raise ValueError("only the central scheme is implemented")

    def h(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.scaling:
            return self.step * np.maximum(1.0, np.abs(z))
        return np.full(z.shape, self.step)


# ---------------------------------------------------------------------------
# finite differences

def _call(f, z):
    try:
        v = f(z)
    except (ValueError, ZeroDivisionError, OverflowError, ArithmeticError) as exc:
        raise OracleDomainError(f"stencil point {list(z)} outside the domain: {exc}") from None
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise OracleDomainError(f"non-finite value at stencil point {list(z)}")
    return v


def fd_partial(f, pt, multi_index, cfg: FDConfig = FDConfig()):
    """Central-difference partial derivative of ``f(z)`` at ``pt``.

    ``pt`` is a PhasePoint or flat vector; ``multi_index`` as for
    ``differentiate`` (variables with orders), total order 1 or 2.  Mixed
    second derivatives use the four-point stencil.
    """
    z0 = pt.z if isinstance(pt, PhasePoint) else np.asarray(pt, dtype=float)
    dim = len(z0) // 2
    flat = normalize_multi_index(multi_index, dim)
    h = cfg.h(z0)
    if len(flat) == 0:
        return _call(f, z0)
    if len(flat) == 1:
        i = flat[0]
        e = np.zeros_like(z0)
        e[i] = h[i]
        return (_call(f, z0 + e) - _call(f, z0 - e)) / (2 * h[i])
    if len(flat) == 2:
        i, j = flat
        ei = np.zeros_like(z0)
        ei[i] = h[i]
        if i == j:
            return (_call(f, z0 + ei) - 2 * _call(f, z0) + _call(f, z0 - ei)) / h[i] ** 2
        ej = np.zeros_like(z0)
        ej[j] = h[j]
        return (_call(f, z0 + ei + ej) - _call(f, z0 + ei - ej) - _call(f, z0 - ei + ej)
                + _call(f, z0 - ei - ej)) / (4 * h[i] * h[j])
    raise ValueError("fd_partial supports total order 1 or 2")


def directional(f, z0, direction, cfg: FDConfig = FDConfig()):
    """d/dt f(z0 + t direction) at t = 0 by a central difference."""
    z0 = np.asarray(z0, dtype=float)
    d = np.asarray(direction, dtype=float)
    t = cfg.step * max(1.0, float(np.max(np.abs(z0)))) / max(1.0, float(np.max(np.abs(d))))
    return (_call(f, z0 + t * d) - _call(f, z0 - t * d)) / (2 * t)


def lie_bracket_numeric(X, Y, pt, cfg: FDConfig = FDConfig()) -> np.ndarray:
    """[X, Y] at ``pt`` for fields given as maps z -> natural components.

    [X, Y] = DY . X - DX . Y with both directional derivatives taken by
    central differences.
    """
    z0 = pt.z if isinstance(pt, PhasePoint) else np.asarray(pt, dtype=float)
    x0, y0 = _call(X, z0), _call(Y, z0)
    return directional(Y, z0, x0, cfg) - directional(X, z0, y0, cfg)


# ---------------------------------------------------------------------------
# sympy-based point evaluator

def to_sympy(e: E.Expr, dim: int):
    xs = sp.symbols(f"x1:{dim + 1}", real=True)
    ps = sp.symbols(f"p1:{dim + 1}", real=True)
    memo: dict[int, sp.Expr] = {}
    funcs = {"sqrt": sp.sqrt, "exp": sp.exp, "log": sp.log, "sin": sp.sin, "cos": sp.cos}
    for node in E.topo_order([e]):
        op = node.op
        a = [memo[id(x)] for x in node.args]
        if op == "const":
            v = node.value
            r = sp.Integer(int(v)) if float(v).is_integer() else sp.Float(v, 17)
        elif op == "var":
            k, i = node.value
            r = (xs if k == "x" else ps)[i - 1]
        elif op == "add":
            r = a[0] + a[1]
        elif op == "mul":
            r = a[0] * a[1]
        elif op == "pow":
            v = node.value
            r = a[0] ** (sp.Integer(int(v)) if float(v).is_integer() else sp.Float(v, 17))
        elif op == "exppow":
            r = sp.exp(a[0] * sp.log(sp.Float(node.value, 17)))
        else:
            r = funcs[op](a[0])
        memo[id(node)] = r
    return memo[id(e)], xs, ps


class PointEvaluator:
    """K^2, g^ij, g_ij, l^i and N_ij at arbitrary points, from sympy derivatives.

    N_ij needs first derivatives of g_ij; these come from the identity
    d g_down = -g_down (d g_up) g_down with d g_up from third derivatives of
    K^2, so no symbolic inverse is formed.
    """

    def __init__(self, m: MetricExpression):
        self.metric = m
        n = self.n = m.dim
        k2, xs, ps = to_sympy(m.ast, n)
        zs = list(xs) + list(ps)
        self._syms = zs
        hess = [[sp.diff(k2, ps[i], ps[j]) / 2 for j in range(n)] for i in range(n)]
        d_hess = [[[sp.diff(hess[i][j], zs[a]) for j in range(n)] for i in range(n)] for a in range(2 * n)]
        mixed = [[sp.diff(k2, xs[j], ps[k]) for k in range(n)] for j in range(n)]
        dk2 = [sp.diff(k2, z) for z in zs]
        self._f = sp.lambdify(zs, [k2, dk2, hess, d_hess, mixed], modules="math")

    def raw(self, z):
        z = [float(v) for v in z]
        try:
            k2, dk2, hess, d_hess, mixed = self._f(*z)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise OracleDomainError(str(exc)) from None
        return float(k2), np.array(dk2, float), np.array(hess, float), np.array(d_hess, float), np.array(mixed, float)

    def at(self, z) -> dict:
        n = self.n
        k2, dk2, gu, dgu, mixed = self.raw(z)
        gd = np.linalg.inv(gu)
        dgd = -np.einsum("ij,ajk,kl->ail", gd, dgu, gd)  # [a, i, j] = d_a g_ij
        k2x, k2p = dk2[:n], dk2[n:]
        pb = np.einsum("kij,k->ij", dgd[n:], k2x) - np.einsum("k,kij->ij", k2p, dgd[:n])
        t = gd @ mixed.T  # t[i, j] = g_ik d^2K^2/dp_k dx^j
        N = 0.25 * pb - 0.25 * (t + t.T)
        p = np.asarray(z[n:], dtype=float)
        return {"K2": k2, "g_up": gu, "g_down": gd, "N": N, "ell": gu @ p}

    # adapted <-> natural components
    def to_adapted(self, z, U):
        n = self.n
        N = self.at(z)["N"]
        return U[:n], U[n:] - U[:n] @ N

    def G(self, z, U, W) -> float:
        d = self.at(z)
        n = self.n
        uh, uv = U[:n], U[n:] - U[:n] @ d["N"]
        wh, wv = W[:n], W[n:] - W[:n] @ d["N"]
        return float(uh @ d["g_down"] @ wh + uv @ d["g_up"] @ wv)

    def adapted_field(self, a: int):
        """B_a as a map z -> natural components (delta_a for a < n, d^(a-n) otherwise)."""
        n = self.n

        def f(z):
            out = np.zeros(2 * n)
            if a < n:
                out[a] = 1.0
                out[n:] = self.at(z)["N"][a]
            else:
                out[a] = 1.0
            return out
        return f


@lru_cache(maxsize=64)
def _point_evaluator(m: MetricExpression) -> PointEvaluator:
    return PointEvaluator(m)


_PE_LOCK = threading.Lock()


def point_evaluator(m: MetricExpression) -> PointEvaluator:
    with _PE_LOCK:
        return _point_evaluator(m)


def koszul_oracle(m: MetricExpression, pt: PhasePoint, cfg: FDConfig = FDConfig()) -> np.ndarray:
    """Levi-Civita coefficients of G on the adapted basis from the Koszul formula.

    2G(nabla_X Y, Z) = X G(Y,Z) + Y G(X,Z) - Z G(X,Y)
                       + G([X,Y],Z) - G([X,Z],Y) - G([Y,Z],X)

    Returns T[a, b, c] with the same layout as ``levi_civita_natural``.
    """
    pe = point_evaluator(m)
    n = m.dim
    z0 = pt.z
    B = [pe.adapted_field(a) for a in range(2 * n)]
    B0 = [b(z0) for b in B]
    gram = np.array([[pe.G(z0, B0[a], B0[b]) for b in range(2 * n)] for a in range(2 * n)])
    if np.linalg.cond(gram) > 1e10:
        raise SingularGram(f"Gram matrix condition {np.linalg.cond(gram):.3g}")

    def Gfun(a, b):
        return lambda z: pe.G(z, B[a](z), B[b](z))

    dG = np.zeros((2 * n, 2 * n, 2 * n))  # dG[c, a, b] = B_c G(B_a, B_b)
    for a in range(2 * n):
        for b in range(a, 2 * n):
            g = Gfun(a, b)
            for c in range(2 * n):
                dG[c, a, b] = dG[c, b, a] = float(directional(g, z0, B0[c], cfg))
    br = {}
    for a in range(2 * n):
        for b in range(a + 1, 2 * n):
            v = lie_bracket_numeric(B[a], B[b], z0, cfg)
            br[a, b] = v
            br[b, a] = -v
    zero = np.zeros(2 * n)
    G0 = lambda U, W: pe.G(z0, U, W)  # noqa: E731
    T = np.zeros((2 * n, 2 * n, 2 * n))
    for a in range(2 * n):
        for b in range(2 * n):
            rhs = np.zeros(2 * n)
            for c in range(2 * n):
                rhs[c] = 0.5 * (dG[a, b, c] + dG[b, a, c] - dG[c, a, b]
                                + G0(br.get((a, b), zero), B0[c])
                                - G0(br.get((a, c), zero), B0[b])
                                - G0(br.get((b, c), zero), B0[a]))
            T[a, b] = np.linalg.solve(gram, rhs)
    return T


# ---------------------------------------------------------------------------
# Riemannian oracle

def riemann_oracle(a_up, x):
    """Christoffel symbols (and Gaussian curvature for n = 2) of a Riemannian metric.

    ``a_up`` is the inverse metric a^ij(x) as an n x n nested list of sympy
    expressions or strings in x1..xn.  Returns ``(gamma, curvature)`` with
    ``gamma[h, i, j] = gamma^h_ij`` at ``x``; curvature is None for n != 2.
    """
    n = len(a_up)
    xs = sp.symbols(f"x1:{n + 1}", real=True)
    loc = {f"x{i + 1}": xs[i] for i in range(n)}
    A_up = sp.Matrix(n, n, lambda i, j: sp.sympify(a_up[i][j], locals=loc))
    subs = {xs[i]: sp.Float(float(x[i]), 30) for i in range(n)}
    if abs(float(A_up.subs(subs).det())) < 1e-14:
        raise ValueError("singular metric")
    a = sp.simplify(A_up.inv())
    gam = [[[sp.Rational(1, 2) * sum(A_up[h, s] * (sp.diff(a[s, i], xs[j]) + sp.diff(a[s, j], xs[i])
                                                     - sp.diff(a[i, j], xs[s])) for s in range(n))
             for j in range(n)] for i in range(n)] for h in range(n)]
    gamma = np.array([[[float(sp.N(gam[h][i][j].subs(subs), 20)) for j in range(n)] for i in range(n)]
                      for h in range(n)])
    curvature = None
    if n == 2:
        # R^h_{kij} = d_i gam^h_jk - d_j gam^h_ik + gam^h_is gam^s_jk - gam^h_js gam^s_ik
        def riem(h, k, i, j):
            return (sp.diff(gam[h][j][k], xs[i]) - sp.diff(gam[h][i][k], xs[j])
                    + sum(gam[h][i][s] * gam[s][j][k] - gam[h][j][s] * gam[s][i][k] for s in range(n)))
        # R_1212 = a_1h R^h_{212}; K = R_1212 / det a
        r1212 = sum(a[0, h] * riem(h, 1, 0, 1) for h in range(n))
        curvature = float(sp.N((r1212 / a.det()).subs(subs), 20))
    return gamma, curvature

