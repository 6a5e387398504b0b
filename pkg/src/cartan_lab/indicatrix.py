"""Level sets I*M(c) = {K = c}: Gauss formula, induced curvature, contact structure.

All frame fields are tangent to every level set of K, so the induced
connection is computed field-wise as nabla_X Y - G(nabla_X Y, C*) C* / K^2,
which is the Gauss formula on each level set simultaneously.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CartanGeometry, Field, GeometryError, TangentVector
from .dsl.metric import MetricExpression, PhasePoint
from .frame import FrameGeometry, OrthoFrame
from .jets import einsum


class NotTangent(GeometryError):
    pass


def project_to_shell(m: MetricExpression, pt: PhasePoint, c: float) -> PhasePoint:
    """Scale the momentum so that K = c (uses 1-homogeneity of K)."""
    if not c > 0:
        raise ValueError("shell level must be positive")
    from .dsl.metric import evaluate
    k2 = evaluate(m.ast, pt)
    if not k2 > 0:
        raise GeometryError(f"K^2 = {k2} <= 0")
    return pt.scaled(c / np.sqrt(k2))


@dataclass
class IndicatrixPoint:
    pt: PhasePoint
    c: float
    frame: OrthoFrame


@dataclass
class ContactData:
    """phi = -J on D, phi(xi) = 0; omega = p_i dx^i; D = {G(X, xi) = G(X, C*) = 0}."""

    phi: object
    omega: object
    D: np.ndarray  # rows: frame components of a basis of D


class IndicatrixGeometry:
    """Frame geometry at a point of a level set, with induced (barred) operators."""

    def __init__(self, m: MetricExpression, pt: PhasePoint, c: float | None = None, order: int = 5,
                 alternate: bool = False, strict: bool = False):
        if c is not None:
            pt = project_to_shell(m, pt, c)
        self.geo = CartanGeometry(m, pt, order)
        self.c = self.geo.K if c is None else float(c)
        self.fg = FrameGeometry(self.geo, alternate=alternate, strict=strict)
        self.n = self.geo.n

    @property
    def point(self) -> IndicatrixPoint:
        return IndicatrixPoint(self.geo.pt, self.c, self.fg.ortho_frame())

    # -- Gauss formula ------------------------------------------------------------
    def normal_part(self, F: Field) -> Field:
        geo = self.geo
        s = einsum("i,i->", F.v, geo.ell) * geo.k2_recip
        return geo.cstar.scale(s)

    def nabla_bar(self, X: Field, Y: Field) -> Field:
        D = self.geo.nabla(X, Y)
        return D - self.normal_part(D)

    def H(self, X: Field, Y: Field) -> Field:
        return self.normal_part(self.geo.nabla(X, Y))

    def R(self, X, Y, Z) -> Field:
        return self.geo.curvature(X, Y, Z)

    def R_bar(self, X, Y, Z) -> Field:
        return self.geo.curvature(X, Y, Z, nabla=self.nabla_bar)

    # -- tangent vectors as fields ---------------------------------------------------
    def tangent_field(self, X: TangentVector, tol: float = 1e-8) -> Field:
        """Extend X as a constant-coefficient combination of tangent frame fields."""
        fg = self.fg
        h, v = X.h, X.v
        ell = np.array(self.geo.ell.value)
        scale = max(1.0, float(np.max(np.abs(np.concatenate([h, v])))))
        if abs(v @ ell) > tol * scale * max(1.0, float(np.linalg.norm(ell))):
            raise NotTangent(f"G(X, C*) = {v @ ell:.3g} is not zero")
        c = fg.frame_values(Field(self.geo.const(h), self.geo.const(v)))
        out = self.geo.field()
        for coef, F in zip(c, fg.basis):
            if coef != 0.0:
                out = out + F.scale(float(coef))
        return out

    # -- contact structure ------------------------------------------------------------
    def omega(self, X: Field):
        return self.geo.omega(X)

    def phi(self, X: Field) -> Field:
        """-J of the D-part of X; the xi-part is sent to zero."""
        geo = self.geo
        a = self.omega(X) * geo.k2_recip
        return -geo.J(X - geo.xi.scale(a))

    def d_omega(self, X: Field, Y: Field):
        """delta p_i ^ dx^i evaluated on (X, Y)."""
        return einsum("i,i->", X.v, Y.h) - einsum("i,i->", Y.v, X.h)

    def lie_xi_G(self, X: Field, Y: Field):
        nb, G, xi = self.nabla_bar, self.geo.G, self.geo.xi
        return G(nb(X, xi), Y) + G(X, nb(Y, xi))

    def nabla_tilde(self, X: Field, Y: Field) -> Field:
        """nabla_bar_X Y - w(X) nabla_bar_Y xi - w(Y) nabla_bar_X xi + (dw + L_xi G / 2)(X, Y) xi."""
        nb, xi, w = self.nabla_bar, self.geo.xi, self.omega
        s = self.d_omega(X, Y) + self.lie_xi_G(X, Y) * 0.5
        return nb(X, Y) - nb(Y, xi).scale(w(X)) - nb(X, xi).scale(w(Y)) + xi.scale(s)

    def nabla_tilde_phi(self, X: Field, Y: Field) -> Field:
        return self.nabla_tilde(X, self.phi(Y)) - self.phi(self.nabla_tilde(X, Y))

    def values(self, F: Field) -> np.ndarray:
        return self.fg.frame_values(F)

    def norm(self, F: Field) -> float:
        return float(np.sqrt(max(float(self.geo.G(F, F).value), 0.0)))


def indicatrix_geometry(m, pt, c=None, order=5, alternate=False, strict=False) -> IndicatrixGeometry:
    return IndicatrixGeometry(m, pt, c=c, order=order, alternate=alternate, strict=strict)


def indicatrix_point(m: MetricExpression, pt: PhasePoint, c: float) -> IndicatrixPoint:
    return IndicatrixGeometry(m, pt, c=c, order=3).point


def _ig(m, ip, order=4) -> IndicatrixGeometry:
    if isinstance(ip, IndicatrixGeometry):
        return ip
    return IndicatrixGeometry(m, ip.pt, c=ip.c, order=order)


def second_fundamental_form(m: MetricExpression, ip, X: TangentVector, Y: TangentVector) -> float:
    """Coefficient s with H(X, Y) = s C*, for X, Y tangent to the level set."""
    ig = _ig(m, ip)
    H = ig.H(ig.tangent_field(X), ig.tangent_field(Y))
    return float(ig.values(H)[ig.n])


def induced_connection(m: MetricExpression, ip, X: TangentVector, Y: TangentVector) -> TangentVector:
    """nabla_bar_X Y with Y extended by constant frame coefficients."""
    ig = _ig(m, ip)
    return ig.nabla_bar(ig.tangent_field(X), ig.tangent_field(Y)).at(ig.geo.pt)


def symplectic_eval(X: TangentVector, Y: TangentVector, N: np.ndarray | None = None) -> float:
    """X_v . Y_h - Y_v . X_h.

    With adapted components this is (delta p ^ dx)(X, Y) = d omega(X, Y); it
    equals dp ^ dx on natural components because N_ij is symmetric.  Pass
    ``N`` to evaluate with natural components instead.
    """
    if X.base != Y.base:
        raise GeometryError("tangent vectors live at different base points")
    xv, yv = X.v, Y.v
    if N is not None:
        xv, yv = xv + X.h @ N, yv + Y.h @ N
    return float(xv @ Y.h - yv @ X.h)


# ---------------------------------------------------------------------------
# Gauss relations

GAUSS_ROWS = ("dd_p", "dp_d", "pp_p", "dp_p", "dp_xi", "pxi_d", "dxi_p")


@dataclass
class GaussRow:
    row: str
    residual: float
    difference: np.ndarray
    correction: np.ndarray


def gauss_relations_check(m: MetricExpression, ip, extra: bool = False) -> dict:
    """R(X,Y)Z - R_bar(X,Y)Z against the seven stated corrections.

    Frame components are compared; the residual of a row is the max-abs
    entry of (difference - correction).  With ``extra`` a row ``other``
    collects every remaining frame triple, where R and R_bar should agree.
    """
    ig = ip if isinstance(ip, IndicatrixGeometry) else IndicatrixGeometry(m, ip.pt, c=ip.c, order=5)
    if ig.geo.order < 5:
        raise ValueError("curvature needs a K^2 jet of order >= 5")
    fg, geo = ig.fg, ig.geo
    fg.require_margin()
    n, k = ig.n, ig.n - 1
    K2 = float(geo.k2.value)
    gu_f = np.array(fg.gab_up.value)
    ft = fg.tensors
    Ev, Ebv = np.array(fg.E.value), np.array(fg.Ebar.value)
    gu = np.array(geo.g_up.value)
    Nup = np.array(geo.N_up.value)
    Ng = np.einsum("ikh,hj->kij", Nup, gu)
    W = np.array(geo.delta_g_up.value) + Ng + Ng.transpose(0, 2, 1)
    db, pb, xi = fg.dbar, fg.pbar, fg.xi
    CS = n
    PB = slice(n + 1, 2 * n)

    def diff(X, Y, Z):
        return ig.values(ig.R(X, Y, Z)) - ig.values(ig.R_bar(X, Y, Z))

    rows = {}

    def put(name, d, c):
        rows[name] = GaussRow(name, float(np.max(np.abs(d - c))) if d.size else 0.0, d, c)

    shape3, shape2 = (k, k, k, 2 * n), (k, k, 2 * n)
    d1, c1 = np.zeros(shape3), np.zeros(shape3)
    d2, c2 = np.zeros(shape3), np.zeros(shape3)
    d3, c3 = np.zeros(shape3), np.zeros(shape3)
    d4, c4 = np.zeros(shape3), np.zeros(shape3)
    for a in range(k):
        for b in range(k):
            for c in range(k):
                d1[a, b, c] = diff(db[a], db[b], pb[c])
                c1[a, b, c, CS] = ft.R_abc[a, b] @ gu_f[:, c] / K2
                d2[a, b, c] = diff(db[a], pb[b], db[c])
                c2[a, b, c, CS] = (ft.R_abc[a, c] - ft.g_abc[a, c]) @ gu_f[:, b] / (2 * K2)
                d3[a, b, c] = diff(pb[a], pb[b], pb[c])
                c3[a, b, c, PB] = (gu_f[a, c] * np.eye(k)[b] - gu_f[b, c] * np.eye(k)[a]) / K2
                d4[a, b, c] = diff(db[a], pb[b], pb[c])
                c4[a, b, c, CS] = -np.einsum("k,i,j,kij->", Ebv[:, a], Ev[b], Ev[c], W) / (2 * K2)
    put("dd_p", d1, c1)
    put("dp_d", d2, c2)
    put("pp_p", d3, c3)
    put("dp_p", d4, c4)
    d5, c5 = np.zeros(shape2), np.zeros(shape2)
    d6, c6 = np.zeros(shape2), np.zeros(shape2)
    d7, c7 = np.zeros(shape2), np.zeros(shape2)
    for a in range(k):
        for b in range(k):
            d5[a, b] = diff(db[a], pb[b], xi)
            c5[a, b, CS] = ft.R_ab[a] @ gu_f[:, b] / (2 * K2)
            d6[a, b] = diff(pb[a], xi, db[b])
            c6[a, b, CS] = ft.R_ab[b] @ gu_f[:, a] / (2 * K2)
            d7[a, b] = diff(db[a], xi, pb[b])
            c7[a, b, CS] = ft.R_ab[a] @ gu_f[:, b] / K2
    put("dp_xi", d5, c5)
    put("pxi_d", d6, c6)
    put("dxi_p", d7, c7)
    if extra:
        tang = [("xi", xi)] + [("d", f) for f in db] + [("p", f) for f in pb]
        listed = {("d", "d", "p"), ("d", "p", "d"), ("p", "p", "p"), ("d", "p", "p"), ("d", "p", "xi"),
                  ("p", "xi", "d"), ("d", "xi", "p")}
        worst = 0.0
        for i, (nx, X) in enumerate(tang):
            for j, (ny, Y) in enumerate(tang):
                if j <= i:
                    continue
                for nz, Z in tang:
                    key = (nx, ny, nz)
                    rev = (ny, nx, nz)
                    if key in listed or rev in listed:
                        continue
                    worst = max(worst, float(np.max(np.abs(diff(X, Y, Z)))))
        rows["other"] = GaussRow("other", worst, np.zeros(0), np.zeros(0))
    return rows


# ---------------------------------------------------------------------------
# contact structure

@dataclass
class ContactReport:
    residuals: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0


def contact_data(ig: IndicatrixGeometry) -> ContactData:
    n = ig.n
    D = np.zeros((2 * n - 2, 2 * n))
    for a in range(n - 1):
        D[a, 1 + a] = 1.0
        D[n - 1 + a, n + 1 + a] = 1.0

    def phi(X: TangentVector) -> TangentVector:
        return ig.phi(ig.geo.field(ig.geo.const(X.h), ig.geo.const(X.v))).at(ig.geo.pt)

    def omega(X: TangentVector) -> float:
        return float(np.array(ig.geo.p.value) @ X.h)

    return ContactData(phi=phi, omega=omega, D=D)


def contact_axioms_check(m: MetricExpression, ip, samples: int = 20, seed: int = 0) -> ContactReport:
    """Contact-metric axioms on frame vectors and random D-vectors.

    Intended for the unit level set; on other levels the residuals are
    reported as they come out.
    """
    ig = ip if isinstance(ip, IndicatrixGeometry) else IndicatrixGeometry(m, ip.pt, c=ip.c, order=4)
    geo, fg = ig.geo, ig.fg
    pt = geo.pt
    n = ig.n
    cd = contact_data(ig)
    ts = geo.tensor_set()
    from .core import almost_complex_apply, sasaki_metric_apply as G

    def vec(c):
        h, v = fg.from_frame(np.asarray(c, dtype=float))
        return TangentVector(h, v, pt)

    basis = [vec(np.eye(2 * n)[j]) for j in range(2 * n) if j != n]  # tangent frame
    rng = np.random.default_rng([seed, 7])
    Dvecs = [vec(rng.standard_normal(2 * n - 2) @ cd.D) for _ in range(samples)]
    xi = vec(np.eye(2 * n)[0])
    tangent = basis + Dvecs
    phi, w = cd.phi, cd.omega
    r = {}
    r["phi(xi)"] = float(np.max(np.abs(phi(xi).flat)))
    r["omega(xi)=1"] = abs(w(xi) - 1.0)
    r["omega o phi"] = max(abs(w(phi(X))) for X in tangent)
    r["phi^2=-I+xi(x)omega"] = max(float(np.max(np.abs((phi(phi(X)) - (-X + xi * w(X))).flat)))
                                   for X in tangent)
    dvec = [vec(row) for row in cd.D] + Dvecs
    r["d omega = G(., phi .)"] = max(abs(symplectic_eval(X, Y) - G(ts, X, phi(Y))) for X in dvec for Y in dvec)
    r["d omega = -G(., J .)"] = max(abs(symplectic_eval(X, Y) + G(ts, X, almost_complex_apply(ts, Y)))
                                    for X in tangent for Y in tangent)
    r["G(phi, phi) = G - omega omega"] = max(
        abs(G(ts, phi(X), phi(Y)) - G(ts, X, Y) + w(X) * w(Y)) for X in tangent for Y in tangent)
    return ContactReport(r)


@dataclass
class ObstructionResult:
    norm: float
    min_eig_g_frame: float
    pair_norms: dict
    proof_component: np.ndarray   # xi-coefficient of (nabla~_{pbar^a} phi) pbar^b
    g_frame_down: np.ndarray
    g_frame_up: np.ndarray
    lemma_residual: float | None = None


def sasakian_obstruction(m: MetricExpression, ip, lemma_check: bool = False, seed: int = 0) -> ObstructionResult:
    """max over frame pairs in D of the G-norm of (nabla~_X phi) Y."""
    ig = ip if isinstance(ip, IndicatrixGeometry) else IndicatrixGeometry(m, ip.pt, c=ip.c, order=4)
    fg = ig.fg
    fg.require_margin()
    k = ig.n - 1
    fields = {("d", a): fg.dbar[a] for a in range(k)}
    fields.update({("p", a): fg.pbar[a] for a in range(k)})
    pair = {}
    proof = np.zeros((k, k))
    for kx, X in fields.items():
        for ky, Y in fields.items():
            V = ig.nabla_tilde_phi(X, Y)
            pair[kx, ky] = ig.norm(V)
            if kx[0] == "p" and ky[0] == "p":
                proof[kx[1], ky[1]] = ig.values(V)[0]
    gd = np.array(fg.gab_down.value)
    res = ObstructionResult(norm=max(pair.values()), min_eig_g_frame=float(np.linalg.eigvalsh(gd).min()),
                            pair_norms=pair, proof_component=proof, g_frame_down=gd,
                            g_frame_up=np.array(fg.gab_up.value))
    if lemma_check:
        res.lemma_residual = lemma_reduction_residual(ig, seed)
    return res


def lemma_reduction_residual(ig: IndicatrixGeometry, seed: int = 0, trials: int = 4) -> float:
    """max |(nabla~_{X + f xi} phi)(Y + g xi) - (nabla~_X phi) Y| over random D-fields.

    f and g are non-constant functions so that tensoriality is exercised.
    """
    geo, fg = ig.geo, ig.fg
    rng = np.random.default_rng([seed, 11])
    D = fg.dbar + fg.pbar
    worst = 0.0
    for _ in range(trials):
        cx, cy = rng.standard_normal(len(D)), rng.standard_normal(len(D))
        X = sum((F.scale(float(c)) for F, c in zip(D[1:], cx[1:])), D[0].scale(float(cx[0])))
        Y = sum((F.scale(float(c)) for F, c in zip(D[1:], cy[1:])), D[0].scale(float(cy[0])))
        a, b = rng.standard_normal(2), rng.standard_normal(2)
        f = geo.coord(0) * float(a[0]) + float(a[1])
        g = geo.coord(geo.n) * float(b[0]) + float(b[1])
        lhs = ig.nabla_tilde_phi(X + geo.xi.scale(f), Y + geo.xi.scale(g))
        rhs = ig.nabla_tilde_phi(X, Y)
        worst = max(worst, float(np.max(np.abs(ig.values(lhs - rhs)))))
    return worst
