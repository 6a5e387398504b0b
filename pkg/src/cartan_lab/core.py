"""Fundamental tensors of a Cartan space and of the Sasaki-lifted metric on T*M.

Everything here is computed at a single phase point from a jet of K^2 whose
Taylor coefficients come from exact symbolic derivatives.  Derived objects
(g_ij, N_ij, R_ijk, connection coefficients, vector fields) are themselves
jets, so any further derivative the geometry needs is exact.

Index conventions
-----------------
* flat coordinates z = (x^1..x^n, p_1..p_n)
* ``Gamma[k, i, j]`` is Gamma^k_ij, ``C_up[i, j, k]`` is d^k g^ij,
  ``N_up[j, i, k]`` is d^j N_ik, ``R3[i, j, k]`` is R_ijk
* a tangent vector in the adapted basis has horizontal components ``h``
  (coefficients of delta/delta x^i) and vertical components ``v``
  (coefficients of d/dp_i)
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dsl import expr as E
from .dsl.metric import MetricExpression, PhasePoint, hessian_exprs, poisson_bracket
from .jets import Jet, einsum, jet_space, seed_from_derivatives


class GeometryError(ValueError):
    pass


class NonPositiveK(GeometryError):
    """K^2 <= 0 at the requested point."""


class SingularMetric(GeometryError):
    """g^ij is singular or too ill-conditioned (Cartan axiom 3 fails)."""


class BasePointMismatch(GeometryError):
    pass


SINGULAR_COND = 1e12


# ---------------------------------------------------------------------------
# jets of K^2

def k2_jet_keys(m: MetricExpression, order: int):
    space = jet_space(2 * m.dim, order)
    keys = []
    for mono in space.monomials:
        flat = []
        for var, e in enumerate(mono):
            flat.extend([var] * e)
        keys.append(tuple(flat))
    return space, keys


def k2_jet(m: MetricExpression, pt: PhasePoint, order: int) -> Jet:
    if pt.dim != m.dim:
        raise BasePointMismatch(f"point dimension {pt.dim} != metric dimension {m.dim}")
    space, keys = k2_jet_keys(m, order)
    values = np.array(m.compiled(keys)(pt.z.tolist()))
    return seed_from_derivatives(space, order, values)


# ---------------------------------------------------------------------------
# field jets

@dataclass
class Field:
    """Vector field near a point, adapted components as jets of shape (n,)."""

    h: Jet
    v: Jet

    @property
    def order(self):
        return min(self.h.order, self.v.order)

    def __add__(self, other):
        return Field(self.h + other.h, self.v + other.v)

    def __sub__(self, other):
        return Field(self.h - other.h, self.v - other.v)

    def __neg__(self):
        return Field(-self.h, -self.v)

    def scale(self, f) -> "Field":
        """Multiply by a scalar jet or float."""
        return Field(self.h * f, self.v * f)

    def at(self, base: PhasePoint) -> "TangentVector":
        return TangentVector(np.array(self.h.value), np.array(self.v.value), base)


@dataclass
class TangentVector:
    """A tangent vector at ``base`` in the adapted basis {delta/delta x^i, d^i}."""

    h: np.ndarray
    v: np.ndarray
    base: PhasePoint

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.h.shape != (self.base.dim,) or self.v.shape != (self.base.dim,):
            raise ValueError("component arrays must have length n")

    def __add__(self, other):
        _same_base(self.base, other.base)
        return TangentVector(self.h + other.h, self.v + other.v, self.base)

    def __sub__(self, other):
        _same_base(self.base, other.base)
        return TangentVector(self.h - other.h, self.v - other.v, self.base)

    def __mul__(self, s):
        return TangentVector(self.h * s, self.v * s, self.base)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.h, self.v])

    def natural(self, N: np.ndarray) -> np.ndarray:
        """Components on (d/dx^i, d/dp_i): delta_i = d/dx^i + N_ij d/dp_j."""
        return np.concatenate([self.h, self.v + self.h @ N])


def _same_base(a: PhasePoint, b: PhasePoint):
    if a != b:
        raise BasePointMismatch("tangent vectors live at different base points")


# ---------------------------------------------------------------------------
# point-wise geometry

class CartanGeometry:
    """All Cartan-space objects at one point, as jets derived from a K^2 jet.

    ``order`` is the jet order of K^2; each object loses one order per
    derivative it contains (g: 2, N: 3, R and the connection: 4), and one
    more for each derivative taken of it.
    """

    def __init__(self, m: MetricExpression, pt: PhasePoint, order: int = 4):
        if order < 2:
            raise ValueError("need at least second derivatives of K^2")
        self.metric = m
        self.pt = pt
        self.n = m.dim
        self.order = order
        self.k2 = k2_jet(m, pt, order)
        self.space = self.k2.space
        if self.k2.value <= 0:
            raise NonPositiveK(f"K^2 = {float(self.k2.value)} <= 0 at {pt}")

    # -- coordinates ------------------------------------------------------------
    def coord(self, var: int, order: int | None = None) -> Jet:
        order = self.order if order is None else order
        return Jet.coordinate(self.space, order, var, float(self.pt.z[var]))

    @cached_property
    def p(self) -> Jet:
        return Jet.stack([self.coord(self.n + i) for i in range(self.n)])

    def const(self, value, order: int | None = None) -> Jet:
        return Jet.constant(self.space, self.order if order is None else order, value)

    # -- derivatives --------------------------------------------------------------
    def dx(self, f: Jet) -> Jet:
        """Stack of d f / d x^i, shape (n, *f.shape)."""
        return Jet.stack([f.d(i) for i in range(self.n)])

    def dp(self, f: Jet) -> Jet:
        """Stack of d f / d p_i, shape (n, *f.shape)."""
        return Jet.stack([f.d(self.n + i) for i in range(self.n)])

    def delta(self, f: Jet) -> Jet:
        """delta f / delta x^i = d_i f + N_ij d^j f, shape (n, *f.shape)."""
        spec = _letters(len(f.shape))
        return self.dx(f) + einsum(f"ij,j{spec}->i{spec}", self.N, self.dp(f))

    # -- fundamental tensors ------------------------------------------------------
    @cached_property
    def K(self) -> float:
        return float(np.sqrt(self.k2.value))

    @cached_property
    def g_up(self) -> Jet:
        n = self.n
        rows = [Jet.stack([self.k2.d(n + i).d(n + j) * 0.5 for j in range(n)]) for i in range(n)]
        g = Jet.stack(rows)
        # exact symmetrisation; mixed partials agree symbolically up to rounding
        return (g + g.T()) * 0.5

    @cached_property
    def g_down(self) -> Jet:
        g0 = np.asarray(self.g_up.value)
        cond = np.linalg.cond(g0)
        if not np.isfinite(cond) or cond > SINGULAR_COND:
            raise SingularMetric(f"condition number {cond:.3g} of g^ij at {self.pt}")
        gd = self.g_up.inv()
        return (gd + gd.T()) * 0.5

    @cached_property
    def ell(self) -> Jet:
        """l^i = g^ij p_j."""
        return einsum("ij,j->i", self.g_up, self.p)

    @cached_property
    def k2_recip(self) -> Jet:
        return self.k2.reciprocal()

    @cached_property
    def N(self) -> Jet:
        """Canonical nonlinear connection N_ij."""
        gd = self.g_down
        k2x = self.dx(self.k2)  # d K^2/dx^k
        k2p = self.dp(self.k2)
        # {g_ij, K^2} = d g_ij/dp_k dK^2/dx^k - dK^2/dp_k d g_ij/dx^k
        pb = einsum("kij,k->ij", self.dp(gd), k2x) - einsum("k,kij->ij", k2p, self.dx(gd))
        mixed = self.dx(self.dp(self.k2))  # mixed[j, k] = d^2 K^2 / dx^j dp_k
        t = einsum("ik,jk->ij", gd, mixed)  # g_ik d^2K^2/dp_k dx^j
        return pb * 0.25 - (t + t.T()) * 0.25

    @cached_property
    def N_up(self) -> Jet:
        """N_up[j, i, k] = d^j N_ik."""
        return self.dp(self.N)

    @cached_property
    def R3(self) -> Jet:
        """R_ijk = delta_i N_jk - delta_j N_ik."""
        dN = self.delta(self.N)  # dN[i, j, k] = delta_i N_jk
        return dN - dN.T(1, 0, 2)

    @cached_property
    def R2(self) -> Jet:
        """R_ij = p_h g^hk R_ikj."""
        return einsum("k,ikj->ij", self.ell, self.R3)

    @cached_property
    def C_up(self) -> Jet:
        """C_up[i, j, k] = d^k g^ij."""
        return self.dp(self.g_up).T(1, 2, 0)

    @cached_property
    def C_down(self) -> Jet:
        """g_ijk = g_is g_jt g_kh d^h g^st."""
        gd = self.g_down
        t = einsum("is,stk->itk", gd, self.C_up)
        t = einsum("jt,itk->ijk", gd, t)
        return einsum("kh,ijh->ijk", gd, t)

    @cached_property
    def C_mixed(self) -> Jet:
        """g_k^{ij} = g_kh d^h g^ij, stored as [k, i, j]."""
        return einsum("kh,ijh->kij", self.g_down, self.C_up)

    @cached_property
    def Gamma(self) -> Jet:
        """Gamma[k, i, j] = 1/2 g^kh (delta_j g_ih + delta_i g_jh - delta_h g_ij)."""
        dg = self.delta(self.g_down)  # dg[a, i, j] = delta_a g_ij
        # t[i, j, h] = delta_j g_ih + delta_i g_jh - delta_h g_ij
        t = dg.T(1, 0, 2) + dg - dg.T(1, 2, 0)
        return einsum("kh,ijh->kij", self.g_up, t) * 0.5

    @cached_property
    def delta_g_up(self) -> Jet:
        """[k, i, j] = delta g^ij / delta x^k."""
        return self.delta(self.g_up)

    @cached_property
    def h_ang(self) -> Jet:
        """Angular metric h_ij = g_ij - p_i p_j / K^2."""
        pp = einsum("i,j->ij", self.p, self.p)
        return self.g_down - pp * self.k2_recip

    @cached_property
    def ang(self) -> Jet:
        """Angular curvature R_ij + h_ij."""
        return self.R2 + self.h_ang

    # -- Levi-Civita connection of G in the adapted basis -------------------------
    @cached_property
    def conn(self) -> dict:
        """Coefficient jets of nabla on {delta_i, d^i}.

        Keys ``hh``, ``hv``, ``vh``, ``vv`` name (direction, field) pairs; each
        maps to (horizontal [a, b, k], vertical [a, b, k]) component jets of
        nabla_{B_a} B_b.
        """
        gu, gd = self.g_up, self.g_down
        hh_h = self.Gamma.T(1, 2, 0)  # [i, j, k] = Gamma^k_ij
        hh_v = (self.R3 + self.C_down) * 0.5
        # nabla_{delta_i} d^j
        Rgg = einsum("ish,hj->isj", self.R3, gu)
        Rgg = einsum("isj,sk->ijk", Rgg, gu)  # R_ish g^hj g^sk
        gi_jk = self.C_mixed  # [i, j, k] = g_i^{jk}
        hv_h = (gi_jk + Rgg) * -0.5
        Q = einsum("is,sj->ij", self.N, gu)  # N_is g^sj
        dQ = self.dp(Q)  # dQ[k, i, j] = d^k (N_is g^sj)
        inner = self.delta_g_up + dQ.T(1, 2, 0) - dQ.T(1, 0, 2)
        hv_v = einsum("ijk,kh->ijh", inner, gd) * 0.5
        # nabla_{d^j} delta_i = nabla_{delta_i} d^j + N^j_ih d^h, stored [j, i, .]
        vh_h = hv_h.T(1, 0, 2)
        vh_v = hv_v.T(1, 0, 2) + self.N_up
        # nabla_{d^i} d^j
        Ng = einsum("iks,sj->kij", self.N_up, gu)  # N^i_ks g^sj as [k, i, j]
        inner = self.delta_g_up + Ng + Ng.T(0, 2, 1)
        vv_h = einsum("kij,kh->ijh", inner, gu) * -0.5
        vv_v = self.C_mixed.T(1, 2, 0) * 0.5
        return {"hh": (hh_h, hh_v), "hv": (hv_h, hv_v), "vh": (vh_h, vh_v), "vv": (vv_h, vv_v)}

    # -- vector-field calculus ------------------------------------------------------
    def field(self, h=None, v=None) -> Field:
        zero = self.const(np.zeros(self.n))
        return Field(zero if h is None else h, zero if v is None else v)

    def basis_field(self, a: int) -> Field:
        """B_a: delta_{a} for a < n, d^{a-n} otherwise."""
        e = np.zeros(self.n)
        e[a % self.n] = 1.0
        c = self.const(e)
        return self.field(h=c) if a < self.n else self.field(v=c)

    @cached_property
    def cstar(self) -> Field:
        return self.field(v=self.p)

    @cached_property
    def xi(self) -> Field:
        return self.field(h=self.ell)

    def apply(self, X: Field, f: Jet) -> Jet:
        """X(f) = X^i delta_i f + X_i d^i f."""
        spec = _letters(len(f.shape))
        return einsum(f"i,i{spec}->{spec}", X.h, self.delta(f)) + \
            einsum(f"i,i{spec}->{spec}", X.v, self.dp(f))

    def nabla(self, X: Field, Y: Field) -> Field:
        c = self.conn
        h = self.apply(X, Y.h)
        v = self.apply(X, Y.v)
        for key, A, B in (("hh", X.h, Y.h), ("hv", X.h, Y.v), ("vh", X.v, Y.h), ("vv", X.v, Y.v)):
            ch, cv = c[key]
            h = h + einsum("j,jk->k", B, einsum("i,ijk->jk", A, ch))
            v = v + einsum("j,jk->k", B, einsum("i,ijk->jk", A, cv))
        return Field(h, v)

    def bracket(self, X: Field, Y: Field) -> Field:
        h = self.apply(X, Y.h) - self.apply(Y, X.h)
        v = self.apply(X, Y.v) - self.apply(Y, X.v)
        v = v + einsum("j,jk->k", Y.h, einsum("i,ijk->jk", X.h, self.R3))
        # [d^i, delta_j] = N^i_jk d^k
        v = v + einsum("j,jk->k", Y.h, einsum("i,ijk->jk", X.v, self.N_up))
        v = v - einsum("j,jk->k", X.h, einsum("i,ijk->jk", Y.v, self.N_up))
        return Field(h, v)

    def G(self, X: Field, Y: Field) -> Jet:
        return einsum("i,i->", X.h, einsum("ij,j->i", self.g_down, Y.h)) + \
            einsum("i,i->", X.v, einsum("ij,j->i", self.g_up, Y.v))

    def J(self, X: Field) -> Field:
        """J(d^k) = g^kj delta_j,  J(delta_i) = -g_ij d^j."""
        return Field(einsum("k,kj->j", X.v, self.g_up), -einsum("i,ij->j", X.h, self.g_down))

    def omega(self, X: Field) -> Jet:
        """Liouville form p_i dx^i."""
        return einsum("i,i->", self.p, X.h)

    def curvature(self, X: Field, Y: Field, Z: Field, nabla=None) -> Field:
        """R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z."""
        nb = nabla or self.nabla
        return nb(X, nb(Y, Z)) - nb(Y, nb(X, Z)) - nb(self.bracket(X, Y), Z)

    # -- numeric snapshot -------------------------------------------------------------
    def tensor_set(self) -> "CartanTensorSet":
        v = lambda j: np.array(j.value)  # noqa: E731
        return CartanTensorSet(
            at=self.pt, K=self.K, g_up=v(self.g_up), g_down=v(self.g_down), ell=v(self.ell),
            N=v(self.N), N_up=v(self.N_up), R3=v(self.R3), R2=v(self.R2), Gamma=v(self.Gamma),
            C_up=v(self.C_up), C_down=v(self.C_down), h=v(self.h_ang), ang=v(self.ang))


def _letters(k: int) -> str:
    return "abcdefgh"[:k]


@dataclass
class CartanTensorSet:
    """Numeric values of the point-wise fundamental tensors."""

    at: PhasePoint
    K: float
    g_up: np.ndarray
    g_down: np.ndarray
    ell: np.ndarray
    N: np.ndarray
    N_up: np.ndarray
    R3: np.ndarray
    R2: np.ndarray
    Gamma: np.ndarray
    C_up: np.ndarray
    C_down: np.ndarray
    h: np.ndarray
    ang: np.ndarray


# ---------------------------------------------------------------------------
# operation-level API

def geometry(m: MetricExpression, pt: PhasePoint, order: int = 4) -> CartanGeometry:
    return CartanGeometry(m, pt, order)


def fundamental_metrics(m: MetricExpression, pt: PhasePoint):
    """(K, g^ij, g_ij, l^i) at ``pt``."""
    geo = CartanGeometry(m, pt, order=2)
    return geo.K, np.array(geo.g_up.value), np.array(geo.g_down.value), np.array(geo.ell.value)


def nonlinear_connection(m: MetricExpression, pt: PhasePoint):
    """(N_ij, N_up[j, i, k] = d^j N_ik) at ``pt``."""
    geo = CartanGeometry(m, pt, order=4)
    return np.array(geo.N.value), np.array(geo.N_up.value)


def hv_curvature(m: MetricExpression, pt: PhasePoint):
    """(R_ijk, R_ij) at ``pt``."""
    geo = CartanGeometry(m, pt, order=4)
    return np.array(geo.R3.value), np.array(geo.R2.value)


def christoffel_h(m: MetricExpression, pt: PhasePoint) -> np.ndarray:
    """Gamma[k, i, j] = Gamma^k_ij."""
    geo = CartanGeometry(m, pt, order=3)
    return np.array(geo.Gamma.value)


def c_tensors(m: MetricExpression, pt: PhasePoint):
    """(C_up[i, j, k] = d^k g^ij, g_ijk)."""
    geo = CartanGeometry(m, pt, order=3)
    return np.array(geo.C_up.value), np.array(geo.C_down.value)


def tensor_set(m: MetricExpression, pt: PhasePoint) -> CartanTensorSet:
    return CartanGeometry(m, pt, order=4).tensor_set()


def angular_tensors(ts: CartanTensorSet):
    """(h_ij, angular curvature R_ij + h_ij) from a tensor set."""
    p = np.array(ts.at.p)
    h = ts.g_down - np.outer(p, p) / ts.K ** 2
    return h, ts.R2 + h


def sasaki_metric_apply(ts: CartanTensorSet, X: TangentVector, Y: TangentVector) -> float:
    """G(X, Y) = g_ij X^i Y^j + g^ij X_i Y_j."""
    _same_base(ts.at, X.base)
    _same_base(ts.at, Y.base)
    return float(X.h @ ts.g_down @ Y.h + X.v @ ts.g_up @ Y.v)


def almost_complex_apply(ts: CartanTensorSet, X: TangentVector) -> TangentVector:
    """J(d^k) = g^kj delta_j, J(delta_i) = -g_ij d^j, extended linearly."""
    _same_base(ts.at, X.base)
    return TangentVector(X.v @ ts.g_up, -(X.h @ ts.g_down), X.base)


def levi_civita_natural(m: MetricExpression, pt: PhasePoint) -> np.ndarray:
    """Table T[a, b, c]: c-th adapted component of nabla_{B_a} B_b.

    B = (delta_1..delta_n, d^1..d^n); components ordered (h_1..h_n, v_1..v_n).
    """
    geo = CartanGeometry(m, pt, order=4)
    return connection_table(geo)


def connection_table(geo: CartanGeometry) -> np.ndarray:
    n = geo.n
    T = np.zeros((2 * n, 2 * n, 2 * n))
    c = {k: (np.array(a.value), np.array(b.value)) for k, (a, b) in geo.conn.items()}
    T[:n, :n, :n], T[:n, :n, n:] = c["hh"]
    T[:n, n:, :n], T[:n, n:, n:] = c["hv"]
    T[n:, :n, :n], T[n:, :n, n:] = c["vh"]
    T[n:, n:, :n], T[n:, n:, n:] = c["vv"]
    return T


# ---------------------------------------------------------------------------
# symbolic route (n <= 3): g_ij by adjugate, N_ij and delta derivatives as trees

class SymbolicCartan:
    """Expression trees for g^ij, g_ij and N_ij (adjugate inverse, n <= 3)."""

    def __init__(self, m: MetricExpression):
        if m.dim > 3:
            raise NotImplementedError("symbolic inversion is limited to n <= 3")
        self.metric = m
        n = self.n = m.dim
        self.g_up = hessian_exprs(m)
        self.g_down = _adjugate_inverse(self.g_up)
        k2 = m.ast
        N = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                t = poisson_bracket(self.g_down[i][j], k2, n) * E.const(0.25)
                s = E.ZERO
                for k in range(n):
                    s = s + self.g_down[i][k] * m.derivative((n + k, j)) \
                        + self.g_down[j][k] * m.derivative((n + k, i))
                N[i][j] = t - E.const(0.25) * s
        self.N = N

    def delta(self, f: E.Expr, i: int) -> E.Expr:
        """delta f / delta x^i (0-based i) as an expression."""
        n = self.n
        out = E.diff(f, E.var("x", i + 1))
        for j in range(n):
            out = out + self.N[i][j] * E.diff(f, E.var("p", j + 1))
        return out


def _adjugate_inverse(a):
    n = len(a)
    if n == 1:
        return [[E.div(E.ONE, a[0][0])]]
    if n == 2:
        det = a[0][0] * a[1][1] - a[0][1] * a[1][0]
        inv = E.div(E.ONE, det)
        return [[a[1][1] * inv, -(a[0][1] * inv)], [-(a[1][0] * inv), a[0][0] * inv]]
    cof = [[None] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            r = [k for k in range(3) if k != i]
            c = [k for k in range(3) if k != j]
            minor = a[r[0]][c[0]] * a[r[1]][c[1]] - a[r[0]][c[1]] * a[r[1]][c[0]]
            cof[i][j] = minor if (i + j) % 2 == 0 else -minor
    det = a[0][0] * cof[0][0] + a[0][1] * cof[0][1] + a[0][2] * cof[0][2]
    inv = E.div(E.ONE, det)
    return [[cof[j][i] * inv for j in range(3)] for i in range(3)]


_SYMBOLIC: dict = {}


def symbolic_cartan(m: MetricExpression) -> SymbolicCartan:
    s = _SYMBOLIC.get(id(m))
    if s is None or s.metric is not m:
        s = _SYMBOLIC[id(m)] = SymbolicCartan(m)
    return s


def delta_derivative(m: MetricExpression, f: E.Expr, i: int) -> E.Expr:
    """delta f/delta x^i = df/dx^i + N_ij df/dp_j as an expression (1-based ``i``)."""
    if not 1 <= i <= m.dim:
        raise ValueError("index out of range")
    return symbolic_cartan(m).delta(f, i - 1)


def identity_residuals(geo: CartanGeometry) -> dict:
    """Algebraic identities every Cartan space satisfies, as relative max-abs residuals.

    Also reports two measured (not asserted) quantities: asymmetry of N_ij and
    delta K^2 / delta x^i.
    """
    v = lambda j: np.array(j.value)  # noqa: E731
    R3, R2, ell = v(geo.R3), v(geo.R2), v(geo.ell)
    Cu, h, p = v(geo.C_up), v(geo.h_ang), np.array(geo.pt.p)
    N = v(geo.N)
    r3 = 1.0 + float(np.max(np.abs(R3)))
    cyc = R3 + R3.transpose(1, 2, 0) + R3.transpose(2, 0, 1)
    return {
        "R_ijk cyclic": float(np.max(np.abs(cyc))) / r3,
        "R_ijk l^k": float(np.max(np.abs(R3 @ ell))) / (r3 * (1.0 + float(np.max(np.abs(ell))))),
        "R_ij symmetric": float(np.max(np.abs(R2 - R2.T))) / (1.0 + float(np.max(np.abs(R2)))),
        "p_k d^k g^ij": float(np.max(np.abs(Cu @ p))),
        "h_ij l^j": float(np.max(np.abs(h @ ell))),
        "measured: N_ij - N_ji": float(np.max(np.abs(N - N.T))),
        "measured: delta K^2": float(np.max(np.abs(v(geo.delta(geo.k2))))),
    }
