"""The adapted frame {xi, dbar_a, C*, pbar^a} on T*M.

``E`` (rows E^a, a = 1..n-1) spans the annihilator of l among vertical
directions: E^a = e_a - (l^a / l^m) e_m for a != m, with the pivot m frozen
at the sample point so that E is a smooth field nearby.  With
g^ab = E g^.. E^T and Ebar = g^.. E^T g_.. the frame fields are

    xi = l^i delta_i,  dbar_a = Ebar_a^i delta_i,  C* = p_i d^i,  pbar^a = E_i^a d^i.

Frame components are ordered (xi, dbar_1..dbar_{n-1}, C*, pbar^1..pbar^{n-1}).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import CartanGeometry, Field, GeometryError, TangentVector
from .dsl.metric import MetricExpression, PhasePoint
from .jets import Jet, einsum

PIVOT_MARGIN = 0.9


class DegenerateFrame(GeometryError):
    pass


class PivotMarginError(GeometryError):
    """Pivot runner-up too close; derivative-bearing checks are refused."""


class PivotMarginWarning(UserWarning):
    pass


def choose_pivot(ell: np.ndarray):
    """(pivot, runner-up ratio); ties resolve to the lowest index."""
    a = np.abs(np.asarray(ell, dtype=float))
    m = int(np.argmax(a))
    if a[m] < 1e-8 * max(a.sum(), 1e-300) or a[m] == 0.0:
        raise DegenerateFrame(f"no usable pivot in l = {ell}")
    rest = np.delete(a, m)
    ratio = float(rest.max() / a[m]) if rest.size else 0.0
    return m, ratio


def alternate_mixing(n: int) -> np.ndarray:
    """Fixed invertible (n-1)x(n-1) matrix giving a second admissible E = M E."""
    k = n - 1
    if k == 1:
        return np.array([[-1.5]])
    M = np.eye(k)
    c, s = np.cos(0.4), np.sin(0.4)
    M[:2, :2] = [[c, -s], [s, c]]
    return 1.5 * M


@dataclass
class OrthoFrame:
    at: PhasePoint
    E: np.ndarray            # (n-1, n), E[a, i] = E_i^a
    E_bar: np.ndarray        # (n, n-1), E_bar[i, a] = Ebar_a^i
    g_frame_up: np.ndarray
    g_frame_down: np.ndarray
    pivot: int
    pivot_ratio: float
    xi: TangentVector
    Cstar: TangentVector
    margin_ok: bool = True
    alternate: bool = False


@dataclass
class FrameTensors:
    R_abc: np.ndarray
    R_a_b: np.ndarray        # R_a^b = R_ac g^cb
    R_ab: np.ndarray
    g_abc: np.ndarray
    Gamma_abc: np.ndarray    # [a, b, c] = Gamma^c_ab
    N_abc: np.ndarray        # [a, b, c] = N^c_ab
    R_ab_d: np.ndarray       # [a, b, d] = R_ab^d, so R_abc = g_cd R_ab^d


class FrameGeometry:
    """Frame fields as jets on top of a CartanGeometry."""

    def __init__(self, geo: CartanGeometry, alternate: bool = False, pivot: int | None = None,
                 strict: bool = False):
        self.geo = geo
        n = self.n = geo.n
        if n < 2:
            raise DegenerateFrame("the frame needs n >= 2")
        ell0 = np.array(geo.ell.value)
        m, ratio = choose_pivot(ell0)
        if pivot is not None:
            m = pivot
        self.pivot, self.pivot_ratio = m, ratio
        self.margin_ok = ratio <= PIVOT_MARGIN
        if not self.margin_ok:
            msg = f"pivot runner-up ratio {ratio:.3f} > {PIVOT_MARGIN} at {geo.pt}"
            if strict:
                raise PivotMarginError(msg)
            warnings.warn(msg, PivotMarginWarning, stacklevel=2)
        self.alternate = alternate
        ell = geo.ell
        inv_lm = ell[m].reciprocal()
        one = geo.const(1.0)
        zero = geo.const(0.0)
        rows = []
        for a in range(n):
            if a == m:
                continue
            row = [zero] * n
            row[a] = one
            row[m] = -(ell[a] * inv_lm)
            rows.append(Jet.stack(row))
        E = Jet.stack(rows)
        if alternate:
            E = einsum("ab,bi->ai", geo.const(alternate_mixing(n)), E)
        self.E = E
        self.gab_up = einsum("ai,bi->ab", E, einsum("ij,bj->bi", geo.g_up, E))
        self.gab_down = self.gab_up.inv()
        self.Ebar = einsum("ib,ba->ia", einsum("ij,bj->ib", geo.g_up, E), self.gab_down)

    def require_margin(self):
        if not self.margin_ok:
            raise PivotMarginError(f"pivot margin violated at {self.geo.pt} (ratio {self.pivot_ratio:.3f})")

    # -- fields -------------------------------------------------------------
    @cached_property
    def dbar(self) -> list[Field]:
        return [self.geo.field(h=self.Ebar[:, a]) for a in range(self.n - 1)]

    @cached_property
    def pbar(self) -> list[Field]:
        return [self.geo.field(v=self.E[a]) for a in range(self.n - 1)]

    @property
    def xi(self) -> Field:
        return self.geo.xi

    @property
    def cstar(self) -> Field:
        return self.geo.cstar

    @cached_property
    def basis(self) -> list[Field]:
        return [self.xi] + self.dbar + [self.cstar] + self.pbar

    def to_frame(self, F: Field) -> Jet:
        """Frame components (xi, dbar, C*, pbar) of a field."""
        geo = self.geo
        r = geo.k2_recip
        c_xi = einsum("i,i->", F.h, geo.p) * r
        c_db = einsum("ai,i->a", self.E, F.h)
        c_cs = einsum("i,i->", F.v, geo.ell) * r
        c_pb = einsum("ia,i->a", self.Ebar, F.v)
        return Jet.stack([c_xi, *[c_db[a] for a in range(self.n - 1)],
                          c_cs, *[c_pb[a] for a in range(self.n - 1)]])

    def frame_values(self, F: Field) -> np.ndarray:
        return np.array(self.to_frame(F).value)

    def from_frame(self, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Adapted (h, v) values of a frame-component vector at the point."""
        n = self.n
        ell, p = np.array(self.geo.ell.value), np.array(self.geo.p.value)
        Eb, E = np.array(self.Ebar.value), np.array(self.E.value)
        h = c[0] * ell + Eb @ c[1:n]
        v = c[n] * p + E.T @ c[n + 1:]
        return h, v

    def d(self, F: Field, f: Jet) -> np.ndarray:
        """Value of F(f) at the point."""
        return np.array(self.geo.apply(F, f).value)

    # -- numeric snapshot -----------------------------------------------------
    def ortho_frame(self) -> OrthoFrame:
        geo = self.geo
        pt = geo.pt
        n = self.n
        return OrthoFrame(
            at=pt, E=np.array(self.E.value), E_bar=np.array(self.Ebar.value),
            g_frame_up=np.array(self.gab_up.value), g_frame_down=np.array(self.gab_down.value),
            pivot=self.pivot, pivot_ratio=self.pivot_ratio,
            xi=TangentVector(np.array(geo.ell.value), np.zeros(n), pt),
            Cstar=TangentVector(np.zeros(n), np.array(pt.p), pt),
            margin_ok=self.margin_ok, alternate=self.alternate)

    def gram(self) -> np.ndarray:
        B = self.basis
        return np.array([[float(self.geo.G(X, Y).value) for Y in B] for X in B])

    def gram_expected(self) -> np.ndarray:
        n = self.n
        K2 = float(self.geo.k2.value)
        out = np.zeros((2 * n, 2 * n))
        out[0, 0] = out[n, n] = K2
        out[1:n, 1:n] = np.array(self.gab_down.value)
        out[n + 1:, n + 1:] = np.array(self.gab_up.value)
        return out

    @cached_property
    def tensors(self) -> FrameTensors:
        geo = self.geo
        Eb, E = np.array(self.Ebar.value), np.array(self.E.value)
        gu = np.array(self.gab_up.value)
        gd = np.array(self.gab_down.value)
        R3, R2 = np.array(geo.R3.value), np.array(geo.R2.value)
        Cd = np.array(geo.C_down.value)
        Gam, Nup = np.array(geo.Gamma.value), np.array(geo.N_up.value)
        R_abc = np.einsum("ia,jb,kc,ijk->abc", Eb, Eb, Eb, R3)
        R_ab = np.einsum("ia,jb,ij->ab", Eb, Eb, R2)
        return FrameTensors(
            R_abc=R_abc, R_a_b=R_ab @ gu, R_ab=R_ab,
            g_abc=np.einsum("ia,jb,kc,ijk->abc", Eb, Eb, Eb, Cd),
            Gamma_abc=np.einsum("ia,jb,ck,kij->abc", Eb, Eb, E, Gam),
            N_abc=np.einsum("ia,jb,ck,kij->abc", Eb, Eb, E, Nup),
            R_ab_d=np.einsum("abc,cd->abd", R_abc, gu))


def frame_geometry(m: MetricExpression, pt: PhasePoint, order: int = 4, alternate: bool = False,
                   strict: bool = False) -> FrameGeometry:
    return FrameGeometry(CartanGeometry(m, pt, order), alternate=alternate, strict=strict)


def build_frame(m: MetricExpression, pt: PhasePoint, alternate: bool = False) -> OrthoFrame:
    return FrameGeometry(CartanGeometry(m, pt, order=3), alternate=alternate).ortho_frame()


def frame_tensors(m: MetricExpression, pt: PhasePoint) -> FrameTensors:
    return frame_geometry(m, pt).tensors


# ---------------------------------------------------------------------------
# brackets

BRACKET_ROWS = ("dbar_dbar", "dbar_pbar", "pbar_pbar", "dbar_xi", "pbar_xi", "dbar_cstar",
                "pbar_cstar", "xi_cstar")


def _natural(h, v, N):
    return np.concatenate([h, v + h @ N])


def bracket_formulas(fg: FrameGeometry) -> dict:
    """Right-hand sides of the eight frame bracket formulas, adapted (h, v) values.

    Returns {row: {(a, b): (h, v)}}; for ``xi_cstar`` the keys name the
    identities [xi,xi], [C*,C*] and [xi,C*] + xi, each expected to vanish.
    """
    geo = fg.geo
    n = fg.n
    k = n - 1
    E, Eb = fg.E, fg.Ebar
    Ev, Ebv = np.array(E.value), np.array(Eb.value)
    N, Nup = np.array(geo.N.value), np.array(geo.N_up.value)
    gu, R3 = np.array(geo.g_up.value), np.array(geo.R3.value)
    ell, p = np.array(geo.ell.value), np.array(geo.p.value)
    gab_up = np.array(fg.gab_up.value)
    zero = np.zeros(n)
    dEb_db = [fg.d(fg.dbar[a], Eb) for a in range(k)]   # [i, b]
    dE_db = [fg.d(fg.dbar[a], E) for a in range(k)]     # [b, i]
    dEb_pb = [fg.d(fg.pbar[a], Eb) for a in range(k)]
    dE_pb = [fg.d(fg.pbar[a], E) for a in range(k)]
    dEb_xi, dE_xi = fg.d(fg.xi, Eb), fg.d(fg.xi, E)
    dEb_cs, dE_cs = fg.d(fg.cstar, Eb), fg.d(fg.cstar, E)
    dgu_db = [fg.d(fg.dbar[a], geo.g_up) for a in range(k)]
    out = {r: {} for r in BRACKET_ROWS}
    for a in range(k):
        for b in range(k):
            out["dbar_dbar"][a, b] = (dEb_db[a][:, b] - dEb_db[b][:, a],
                                      np.einsum("i,j,ijs->s", Ebv[:, a], Ebv[:, b], R3))
            out["dbar_pbar"][a, b] = (-dEb_pb[b][:, a],
                                      dE_db[a][b] - np.einsum("k,j,jki->i", Ebv[:, a], Ev[b], Nup))
            # the vertical derivative is read as the frame derivative pbar^a(E^b)
            out["pbar_pbar"][a, b] = (zero, dE_pb[a][b] - dE_pb[b][a])
        out["dbar_xi"][a,] = (Ebv[:, a] @ N @ gu + p @ dgu_db[a] - dEb_xi[:, a],
                              np.einsum("i,j,ijs->s", Ebv[:, a], ell, R3))
        out["pbar_xi"][a,] = (gab_up[a] @ Ebv.T,
                              np.einsum("j,h,jhi->i", Ev[a], ell, Nup) - dE_xi[a])
        out["dbar_cstar"][a,] = (-dEb_cs[:, a], zero)
        out["pbar_cstar"][a,] = (zero, Ev[a] - dE_cs[a])
    out["xi_cstar"] = {("xi", "xi"): (zero, zero), ("cstar", "cstar"): (zero, zero),
                       ("xi", "cstar"): (-ell, zero)}
    return out


def _bracket_pairs(fg: FrameGeometry):
    """(row, key, X, Y, shift) where the formula covers [X, Y] + shift."""
    k = fg.n - 1
    db, pb = fg.dbar, fg.pbar
    for a in range(k):
        for b in range(k):
            yield "dbar_dbar", (a, b), ("dbar", a), ("dbar", b), None
            yield "dbar_pbar", (a, b), ("dbar", a), ("pbar", b), None
            yield "pbar_pbar", (a, b), ("pbar", a), ("pbar", b), None
        yield "dbar_xi", (a,), ("dbar", a), ("xi", None), None
        yield "pbar_xi", (a,), ("pbar", a), ("xi", None), None
        yield "dbar_cstar", (a,), ("dbar", a), ("cstar", None), None
        yield "pbar_cstar", (a,), ("pbar", a), ("cstar", None), None
    yield "xi_cstar", ("xi", "xi"), ("xi", None), ("xi", None), None
    yield "xi_cstar", ("cstar", "cstar"), ("cstar", None), ("cstar", None), None
    yield "xi_cstar", ("xi", "cstar"), ("xi", None), ("cstar", None), None


def _field(fg: FrameGeometry, spec):
    kind, a = spec
    return {"dbar": lambda: fg.dbar[a], "pbar": lambda: fg.pbar[a],
            "xi": lambda: fg.xi, "cstar": lambda: fg.cstar}[kind]()


class NumericFrameFields:
    """Frame fields at arbitrary points from the oracle evaluator (pivot frozen)."""

    def __init__(self, m: MetricExpression, pivot: int, alternate: bool):
        from .oracle import point_evaluator
        self.pe = point_evaluator(m)
        self.n = m.dim
        self.pivot = pivot
        self.M = alternate_mixing(self.n) if alternate else None

    def parts(self, z):
        n, mpiv = self.n, self.pivot
        d = self.pe.at(z)
        ell = d["ell"]
        rows = []
        for a in range(n):
            if a == mpiv:
                continue
            r = np.zeros(n)
            r[a] = 1.0
            r[mpiv] = -ell[a] / ell[mpiv]
            rows.append(r)
        E = np.array(rows)
        if self.M is not None:
            E = self.M @ E
        gab = E @ d["g_up"] @ E.T
        Eb = d["g_up"] @ E.T @ np.linalg.inv(gab)
        return d, E, Eb

    def field(self, spec):
        kind, a = spec
        n = self.n

        def f(z):
            d, E, Eb = self.parts(z)
            out = np.zeros(2 * n)
            if kind == "dbar":
                out[:n] = Eb[:, a]
                out[n:] = Eb[:, a] @ d["N"]
            elif kind == "xi":
                out[:n] = d["ell"]
                out[n:] = d["ell"] @ d["N"]
            elif kind == "pbar":
                out[n:] = E[a]
            else:
                out[n:] = np.asarray(z[n:], dtype=float)
            return out
        return f


@dataclass
class BracketRow:
    row: str
    max_residual: float        # formula vs numeric oracle
    max_exact_residual: float  # formula vs exact jet bracket
    entries: dict


def frame_brackets(m: MetricExpression, pt: PhasePoint, alternate: bool = False, fg=None) -> dict:
    """All eight bracket formulas against a finite-difference Lie bracket.

    Returns {row: BracketRow}.  Residuals are max-abs differences of
    natural components.
    """
    from .oracle import lie_bracket_numeric
    fg = fg or frame_geometry(m, pt, order=4, alternate=alternate)
    fg.require_margin()
    geo = fg.geo
    N = np.array(geo.N.value)
    rhs = bracket_formulas(fg)
    num = NumericFrameFields(m, fg.pivot, fg.alternate)
    rows = {r: BracketRow(r, 0.0, 0.0, {}) for r in BRACKET_ROWS}
    for row, key, xs, ys, _ in _bracket_pairs(fg):
        h, v = rhs[row][key]
        formula = _natural(h, v, N)
        X, Y = _field(fg, xs), _field(fg, ys)
        br = geo.bracket(X, Y)
        if row == "xi_cstar" and key == ("xi", "cstar"):
            br = br + X
        exact = _natural(np.array(br.h.value), np.array(br.v.value), N)
        numeric = lie_bracket_numeric(num.field(xs), num.field(ys), pt)
        if row == "xi_cstar" and key == ("xi", "cstar"):
            numeric = numeric + num.field(xs)(pt.z)
            formula = formula + _natural(np.array(geo.ell.value), np.zeros(fg.n), N)
        r = rows[row]
        r.entries[key] = {"formula": formula, "numeric": numeric, "exact": exact}
        r.max_residual = max(r.max_residual, float(np.max(np.abs(formula - numeric))))
        r.max_exact_residual = max(r.max_exact_residual, float(np.max(np.abs(formula - exact))))
    return rows


# ---------------------------------------------------------------------------
# Levi-Civita connection in the frame

CONNECTION_ROWS = (
    "dbar_dbar", "pbar_pbar", "dbar_pbar", "pbar_dbar", "dbar_xi", "xi_dbar", "pbar_xi", "xi_pbar",
    "dbar_cstar", "cstar_dbar", "pbar_cstar", "cstar_pbar", "xi_cstar", "cstar_xi", "xi_xi",
    "cstar_cstar")


def connection_formulas(fg: FrameGeometry) -> dict:
    """Closed-form frame components of nabla_X Y for every frame pair.

    Returns {row: array}: shape (n-1, n-1, 2n) for two indexed fields,
    (n-1, 2n) for one, (2n,) for none.  Row names are ``X_Y``.
    """
    geo = fg.geo
    n, k = fg.n, fg.n - 1
    E, Eb = fg.E, fg.Ebar
    Ev, Ebv = np.array(E.value), np.array(Eb.value)
    gu_f, gd_f = np.array(fg.gab_up.value), np.array(fg.gab_down.value)
    K2 = float(geo.k2.value)
    ell = np.array(geo.ell.value)
    N, Nup = np.array(geo.N.value), np.array(geo.N_up.value)
    gu = np.array(geo.g_up.value)
    ft = fg.tensors
    R_abc, g_abc, R_ab, Gam = ft.R_abc, ft.g_abc, ft.R_ab, ft.Gamma_abc
    R_ac_b = np.einsum("acd,db->acb", R_abc, gu_f)      # R_ac^b
    g_ac_b = np.einsum("acd,db->acb", g_abc, gu_f)      # g_ac^b
    g_d_ab = np.einsum("ae,bf,efd->dab", gu_f, gu_f, g_abc)  # g_d^{ab}
    R_a_b = ft.R_a_b
    dgu = np.array(geo.delta_g_up.value)                # [k, i, j]
    Ng = np.einsum("ikh,hj->kij", Nup, gu)              # N^i_kh g^hj
    W = dgu + Ng + Ng.transpose(0, 2, 1)
    Wm = dgu + Ng.transpose(0, 2, 1) - Ng
    dEb_db = [fg.d(fg.dbar[a], Eb) for a in range(k)]   # [i, b]
    dE_db = [fg.d(fg.dbar[a], E) for a in range(k)]     # [b, i]
    dEb_pb = [fg.d(fg.pbar[a], Eb) for a in range(k)]
    dE_pb = [fg.d(fg.pbar[a], E) for a in range(k)]
    dEb_xi, dE_xi = fg.d(fg.xi, Eb), fg.d(fg.xi, E)
    dEb_cs, dE_cs = fg.d(fg.cstar, Eb), fg.d(fg.cstar, E)
    xi_g = fg.d(fg.xi, geo.g_down)
    dgu_db = [fg.d(fg.dbar[c], geo.g_up) for c in range(k)]
    gd = np.array(geo.g_down.value)

    XI, DB, CS, PB = 0, slice(1, n), n, slice(n + 1, 2 * n)
    out = {}

    t = np.zeros((k, k, 2 * n))
    for a in range(k):
        for b in range(k):
            t[a, b, DB] = Gam[a, b] + Ev @ dEb_db[a][:, b]
            t[a, b, PB] = 0.5 * (R_abc[a, b] - g_abc[a, b])
            t[a, b, XI] = (ell @ (dE_db[a].T @ gd_f[:, b] + dE_db[b].T @ gd_f[:, a])
                           - Ebv[:, a] @ xi_g @ Ebv[:, b]) / (2 * K2)
    out["dbar_dbar"] = t

    t = np.zeros((k, k, 2 * n))
    for a in range(k):
        for b in range(k):
            t[a, b, PB] = Ebv.T @ dE_pb[a][b] + 0.5 * g_d_ab[:, a, b]
            t[a, b, CS] = -gu_f[a, b] / K2
            t[a, b, DB] = -0.5 * np.einsum("i,j,kc,kij,cd->d", Ev[a], Ev[b], Ebv, W, gu_f)
    out["pbar_pbar"] = t

    t = np.zeros((k, k, 2 * n))  # nabla_{dbar_a} pbar^b
    for a in range(k):
        for b in range(k):
            t[a, b, DB] = 0.5 * (g_ac_b[a, :, b] - R_ac_b[a, :, b]) @ gu_f
            t[a, b, XI] = -R_a_b[a, b] / (2 * K2)
            t[a, b, PB] = Ebv.T @ dE_db[a][b] + 0.5 * np.einsum(
                "i,jc,k,kij,cd->d", Ev[b], Ev.T, Ebv[:, a], Wm, gd_f)
    out["dbar_pbar"] = t

    t = np.zeros((k, k, 2 * n))  # nabla_{pbar^b} dbar_a stored [b, a]
    for a in range(k):
        for b in range(k):
            r = np.zeros(2 * n)
            r[DB] = 0.5 * (g_ac_b[a, :, b] - R_ac_b[a, :, b]) @ gu_f + Ev @ dEb_pb[b][:, a]
            r[XI] = -(R_a_b[a, b] + 2.0 * (a == b)) / (2 * K2)
            r[PB] = 0.5 * np.einsum("i,jc,k,kij,cd->d", Ev[b], Ev.T, Ebv[:, a], W, gd_f)
            t[b, a] = r
    out["pbar_dbar"] = t

    def xi_block(a, sign):
        s = np.zeros(k)
        for c in range(k):
            s[c] = (Ebv[:, a] @ xi_g @ Ebv[:, c]
                    + np.einsum("j,ji,k,ik->", geo.p.value, dgu_db[c], Ebv[:, a], gd)
                    + Ebv[:, a] @ N @ Ebv[:, c]
                    + sign * ell @ dE_db[a].T @ gd_f[:, c])
        return 0.5 * s @ gu_f

    t = np.zeros((k, 2 * n))
    for a in range(k):
        t[a, DB] = xi_block(a, -1.0)
        t[a, PB] = 0.5 * R_ab[a]
    out["dbar_xi"] = t
    t = np.zeros((k, 2 * n))
    for a in range(k):
        t[a, DB] = xi_block(a, 1.0) + Ev @ dEb_xi[:, a]
        t[a, PB] = -0.5 * R_ab[a]
    out["xi_dbar"] = t
    t = np.zeros((k, 2 * n))
    for a in range(k):
        t[a, DB] = gu_f[a] + 0.5 * gu_f[:, a] @ R_ab @ gu_f
    out["pbar_xi"] = t
    t = np.zeros((k, 2 * n))
    for a in range(k):
        t[a, DB] = 0.5 * gu_f[:, a] @ R_ab @ gu_f
        t[a, PB] = Ebv.T @ (dE_xi[a] - np.einsum("h,s,shi->i", ell, Ev[a], Nup))
    out["xi_pbar"] = t

    out["dbar_cstar"] = np.zeros((k, 2 * n))
    t = np.zeros((k, 2 * n))
    for a in range(k):
        t[a, DB] = Ev @ dEb_cs[:, a]
    out["cstar_dbar"] = t
    t = np.zeros((k, 2 * n))
    for a in range(k):
        t[a, n + 1 + a] = 1.0
    out["pbar_cstar"] = t
    t = np.zeros((k, 2 * n))
    for a in range(k):
        t[a, PB] = Ebv.T @ dE_cs[a]
    out["cstar_pbar"] = t
    out["xi_cstar"] = np.zeros(2 * n)
    out["cstar_xi"] = np.eye(2 * n)[XI]
    out["xi_xi"] = np.zeros(2 * n)
    out["cstar_cstar"] = np.eye(2 * n)[CS]
    return out


def connection_projected(fg: FrameGeometry, nabla=None) -> dict:
    """Frame components of nabla_X Y from the adapted-basis connection."""
    nb = nabla or fg.geo.nabla
    k = fg.n - 1
    one = {"xi": fg.xi, "cstar": fg.cstar}
    many = {"dbar": fg.dbar, "pbar": fg.pbar}
    out = {}
    for row in CONNECTION_ROWS:
        xs, ys = row.split("_")
        if xs in many and ys in many:
            out[row] = np.array([[fg.frame_values(nb(many[xs][a], many[ys][b])) for b in range(k)]
                                 for a in range(k)])
        elif xs in many:
            out[row] = np.array([fg.frame_values(nb(many[xs][a], one[ys])) for a in range(k)])
        elif ys in many:
            out[row] = np.array([fg.frame_values(nb(one[xs], many[ys][a])) for a in range(k)])
        else:
            out[row] = fg.frame_values(nb(one[xs], one[ys]))
    return out


@dataclass
class ConnectionRow:
    row: str
    projected: np.ndarray
    formula: np.ndarray
    residual: float


def frame_connection(m: MetricExpression, pt: PhasePoint, alternate: bool = False, fg=None) -> dict:
    """Projection of the Levi-Civita connection onto the frame next to the closed forms."""
    fg = fg or frame_geometry(m, pt, order=4, alternate=alternate)
    fg.require_margin()
    proj = connection_projected(fg)
    form = connection_formulas(fg)
    return {r: ConnectionRow(r, proj[r], form[r], float(np.max(np.abs(proj[r] - form[r]))))
            for r in CONNECTION_ROWS}
