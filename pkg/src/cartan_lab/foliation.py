"""Point-sampled checks of the foliation theorems and the constant-curvature classifier.

Every check returns a CheckRecord whose verdict says whether the stated
property holds at all sampled points (``pass`` iff max_residual <= tolerance).
"If and only if" statements are checked as matched vanishing: the two sides
are evaluated at the same points and ``details["iff_consistent"]`` records
whether they vanish together.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import CartanGeometry, GeometryError
from .dsl.metric import MetricExpression, PhasePoint
from .frame import FrameGeometry
from .indicatrix import project_to_shell

MIN_POINTS = 10
MIN_FIT_POINTS = 25

TOLERANCES = {
    "geodesic-closure": 1e-9,
    "vertical-totally-geodesic": 1e-9,
    "not-totally-geodesic": 1e-6,
    "umbilicity": 1e-6,
    "vertical-bundle-like": 1e-9,
    "vprime-bundle-like": 1e-9,
    "xi-bundle-like": 1e-6,
    "cstar-lie-derivative": 1e-6,
    "xi-killing": 1e-5,
    "level-sets": 1e-8,
    "angular-curvature": 1e-5,
    "curvature-fit": 1e-5,
}


class InsufficientPoints(ValueError):
    pass


class IndefiniteFit(GeometryError):
    pass


@dataclass
class CheckRecord:
    check_id: str
    theorem: str
    points_tested: int
    max_residual: float
    tolerance: float
    verdict: str
    details: dict = field(default_factory=dict)

    @classmethod
    def make(cls, check_id, theorem, residuals, tol, details=None, minimum=MIN_POINTS):
        residuals = [float(r) for r in residuals]
        if len(residuals) < minimum:
            raise InsufficientPoints(f"{check_id}: {len(residuals)} points, need {minimum}")
        worst = max(residuals) if residuals else 0.0
        verdict = "pass" if worst <= tol else "fail"
        return cls(check_id, theorem, len(residuals), worst, float(tol), verdict, details or {})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CurvatureFit:
    c_hat: float
    residual: float
    shell: float
    points: int = 0
    per_point: list = field(default_factory=list)
    angular_on_law_shell: float | None = None
    law_shell: float | None = None
    shell_law_consistent: bool | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _need(points, minimum=MIN_POINTS):
    points = list(points)
    if len(points) < minimum:
        raise InsufficientPoints(f"{len(points)} points given, need at least {minimum}")
    return points


def _tol(name, tolerances):
    return (tolerances or {}).get(name, TOLERANCES[name])


def _frame(m, pt, order=4, alternate=False):
    return FrameGeometry(CartanGeometry(m, pt, order), alternate=alternate)


def _vals(fg, F):
    return fg.frame_values(F)


# ---------------------------------------------------------------------------
# per-point kernels (pure functions of (m, pt) so they can be mapped in parallel)

def _closure_point(m, pt, alternate=False):
    """nabla_xi C* = nabla_C* xi - xi = nabla_xi xi = nabla_C* C* - C* = 0."""
    fg = _frame(m, pt, alternate=alternate)
    geo = fg.geo
    xi, cs = geo.xi, geo.cstar
    terms = [geo.nabla(xi, cs), geo.nabla(cs, xi) - xi, geo.nabla(xi, xi), geo.nabla(cs, cs) - cs]
    scale = max(1.0, float(geo.k2.value))
    return max(float(np.max(np.abs(_vals(fg, T)))) for T in terms) / scale


def _vertical_geodesic_point(m, pt):
    """(max |delta g^ij/delta x^k + N^i_ks g^sj + N^j_ks g^si|, max |horizontal part of nabla_{d^i} d^j|)."""
    geo = CartanGeometry(m, pt, 4)
    gu = np.array(geo.g_up.value)
    Nup = np.array(geo.N_up.value)
    Ng = np.einsum("iks,sj->kij", Nup, gu)
    W = np.array(geo.delta_g_up.value) + Ng + Ng.transpose(0, 2, 1)
    n = geo.n
    worst = 0.0
    for i in range(n):
        for j in range(n):
            F = geo.nabla(geo.basis_field(n + i), geo.basis_field(n + j))
            worst = max(worst, float(np.max(np.abs(F.h.value))))
    return float(np.max(np.abs(W))), worst


def _second_fundamental_point(m, pt, alternate=False):
    """Normal (C*) parts of nabla on V' and on the level-set frame."""
    fg = _frame(m, pt, alternate=alternate)
    geo, n = fg.geo, fg.n
    K2 = float(geo.k2.value)
    k = n - 1
    S = np.array([[_vals(fg, geo.nabla(fg.pbar[a], fg.pbar[b]))[n] for b in range(k)] for a in range(k)])
    gu = np.array(fg.gab_up.value)
    tangent = [fg.xi] + fg.dbar + fg.pbar
    H = np.array([[_vals(fg, geo.nabla(X, Y))[n] for Y in tangent] for X in tangent])
    K = np.sqrt(K2)
    return {
        "vprime_norm": float(np.linalg.norm(S, 2) * K),
        "vprime_bound": float(np.linalg.eigvalsh(gu).min() / K2 * K),
        "vperp_norm": float(np.linalg.norm(H, 2) * K),
        "umbilicity": float(np.max(np.abs(S + gu / K2))),
    }


def _vertical_bundle_like_point(m, pt):
    geo = CartanGeometry(m, pt, 4)
    n = geo.n
    Cd = np.array(geo.C_down.value)
    direct = np.zeros((n, n, n))
    for i in range(n):
        for j in range(n):
            X, Y = geo.basis_field(i), geo.basis_field(j)
            S = geo.nabla(X, Y) + geo.nabla(Y, X)
            for kk in range(n):
                direct[i, j, kk] = float(geo.G(S, geo.basis_field(n + kk)).value)
    idx = np.unravel_index(int(np.argmax(np.abs(Cd))), Cd.shape)
    return float(np.max(np.abs(Cd))), float(np.max(np.abs(direct))), tuple(int(t) for t in idx), float(direct[idx])


def _vprime_bundle_like_point(m, pt, alternate=False):
    fg = _frame(m, pt, alternate=alternate)
    geo, k = fg.geo, fg.n - 1
    gabd = fg.tensors.g_abc
    gu = np.array(fg.gab_up.value)
    formula = -np.einsum("abd,dc->abc", gabd, gu)
    direct = np.zeros((k, k, k))
    for a in range(k):
        for b in range(k):
            S = geo.nabla(fg.dbar[a], fg.dbar[b]) + geo.nabla(fg.dbar[b], fg.dbar[a])
            for c in range(k):
                direct[a, b, c] = float(geo.G(S, fg.pbar[c]).value)
    return float(np.max(np.abs(direct))), float(np.max(np.abs(direct - formula))), float(np.max(np.abs(gabd)))


def _xi_lie_point(m, pt, c, alternate=False):
    """Lie derivative of G along xi on the tangent frame of I*M(c), and max |angular curvature|.

    Returns (killing residual over {xi, dbar, pbar}, bundle-like residual over D,
    max |ang|).  L_xi G(X, Y) = G(nabla_X xi, Y) + G(X, nabla_Y xi); the normal
    part of nabla drops out because X, Y are tangent.
    """
    pt = project_to_shell(m, pt, c)
    fg = _frame(m, pt, alternate=alternate)
    geo = fg.geo
    tangent = [fg.xi] + fg.dbar + fg.pbar
    nx = [geo.nabla(X, geo.xi) for X in tangent]
    L = np.array([[float((geo.G(nx[i], Y) + geo.G(tangent[i], nx[j])).value)
                   for j, Y in enumerate(tangent)] for i in range(len(tangent))])
    ang = float(np.max(np.abs(np.array(geo.ang.value))))
    return float(np.max(np.abs(L))), float(np.max(np.abs(L[1:, 1:]))), ang


def _xi_bilinear_point(m, pt, c, seed, idx, pairs=8):
    """max over random D-pairs of |(Xb_j Y^i + Yb_j X^i)(delta_i^j + R_is g^sj)|, normalised."""
    pt = project_to_shell(m, pt, c)
    ts = CartanGeometry(m, pt, 4).tensor_set()
    p, ell = np.array(pt.p), ts.ell
    M = np.eye(ts.g_up.shape[0]) + ts.R2 @ ts.g_up  # [i, j] = delta_i^j + R_is g^sj
    rng = np.random.default_rng([seed, idx, 23])
    worst = 0.0
    for _ in range(pairs):
        vecs = []
        for _ in range(2):
            h, v = rng.standard_normal(len(p)), rng.standard_normal(len(p))
            h -= (h @ p) / (ell @ p) * ell   # X^i p_i = 0
            v -= (v @ ell) / (p @ ell) * p   # Xb_j l^j = 0
            s = np.sqrt(h @ ts.g_down @ h + v @ ts.g_up @ v)
            vecs.append((h / s, v / s))
        (Xh, Xv), (Yh, Yv) = vecs
        worst = max(worst, abs(Xv @ M.T @ Yh + Yv @ M.T @ Xh))
    return float(worst), float(np.max(np.abs(ts.ang)))


def _cstar_lie_point(m, pt, alternate=False):
    fg = _frame(m, pt, alternate=alternate)
    geo, k = fg.geo, fg.n - 1
    cs = geo.cstar
    nb = [geo.nabla(fg.pbar[a], cs) for a in range(k)]
    L = np.array([[float((geo.G(nb[a], fg.pbar[b]) + geo.G(fg.pbar[a], nb[b])).value) for b in range(k)]
                  for a in range(k)])
    gu = np.array(fg.gab_up.value)
    return float(np.max(np.abs(L - 2 * gu))), L


def _level_set_point(m, pt, seed, idx):
    fg = _frame(m, pt)
    geo, n = fg.geo, fg.n
    K = geo.K
    K2 = K * K
    dK_xi = abs(float(geo.apply(geo.xi, geo.k2).value)) / (2 * K) / K2
    tangent = [fg.xi] + fg.dbar + fg.pbar
    orth = max(abs(float(geo.G(geo.cstar, T).value)) for T in tangent) / K2
    # grad K: horizontal g^ij delta_j K, vertical g_ij d^j K
    dk = np.array(geo.delta(geo.k2).value) / (2 * K)
    pk = np.array(geo.dp(geo.k2).value) / (2 * K)
    gu, gd = np.array(geo.g_up.value), np.array(geo.g_down.value)
    grad_h, grad_v = gu @ dk, gd @ pk
    grad = max(float(np.max(np.abs(grad_h))), float(np.max(np.abs(grad_v - np.array(pt.p) / K))))
    ang, ell = np.array(geo.ang.value), np.array(geo.ell.value)
    rng = np.random.default_rng([seed, idx, 29])
    contraction = max(abs(ell @ ang @ rng.standard_normal(n)) for _ in range(5))
    return {"dK(xi)": dK_xi, "G(C*,T)": orth, "grad K - C*/c": grad, "ang(xi, X)": float(contraction)}


def _curvature_point(m, pt):
    ts = CartanGeometry(m, pt, 4).tensor_set()
    return ts.R2, ts.K ** 2 * ts.h, ts.h


# ---------------------------------------------------------------------------
# public checks

MapFn = Callable[[Callable, Iterable], Iterable]


def verify_totally_geodesic(m: MetricExpression, points: Sequence[PhasePoint], tolerances=None,
                            map_fn: MapFn = map, alternate: bool = False) -> list[CheckRecord]:
    pts = _need(points)
    closure = list(map_fn(lambda q: _closure_point(m, q, alternate), pts))
    vg = list(map_fn(lambda q: _vertical_geodesic_point(m, q), pts))
    sf = list(map_fn(lambda q: _second_fundamental_point(m, q, alternate), pts))

    t_cl = _tol("geodesic-closure", tolerances)
    rec_a = CheckRecord.make("geodesic-closure", "C*, xi and C*+xi are totally geodesic", closure, t_cl)

    t_vg = _tol("vertical-totally-geodesic", tolerances)
    cond = [w for w, _ in vg]
    normal = [h for _, h in vg]
    consistent = all((a <= t_vg) == (b <= t_vg) for a, b in vg)
    rec_b = CheckRecord.make(
        "vertical-totally-geodesic",
        "VT*M totally geodesic iff delta g^ij/delta x^k + N^i_ks g^sj + N^j_ks g^si = 0",
        cond, t_vg, {"normal_part_max": max(normal), "iff_consistent": consistent})

    t_ng = _tol("not-totally-geodesic", tolerances)
    shortfall = [max(0.0, d["vprime_bound"] - d["vprime_norm"]) for d in sf]
    rec_c = CheckRecord.make(
        "not-totally-geodesic", "V' and V-perp are not totally geodesic", shortfall, t_ng,
        {"vprime_norm_min": min(d["vprime_norm"] for d in sf),
         "vperp_norm_min": min(d["vperp_norm"] for d in sf),
         "nonzero_everywhere": all(d["vprime_norm"] > t_ng and d["vperp_norm"] > t_ng for d in sf)})

    t_um = _tol("umbilicity", tolerances)
    rec_d = CheckRecord.make("umbilicity", "V' is totally umbilical: H(pbar^a, pbar^b) = -g^ab C*/K^2",
                             [d["umbilicity"] for d in sf], t_um)
    return [rec_a, rec_b, rec_c, rec_d]


def verify_bundle_like(m: MetricExpression, points: Sequence[PhasePoint], shell: float = 1.0,
                       tolerances=None, map_fn: MapFn = map, seed: int = 0,
                       alternate: bool = False) -> list[CheckRecord]:
    pts = _need(points)
    vb = list(map_fn(lambda q: _vertical_bundle_like_point(m, q), pts))
    vp = list(map_fn(lambda q: _vprime_bundle_like_point(m, q, alternate), pts))
    xb = list(map_fn(lambda iq: _xi_bilinear_point(m, iq[1], shell, seed, iq[0]), enumerate(pts)))

    t = _tol("vertical-bundle-like", tolerances)
    worst = int(np.argmax([r[0] for r in vb]))
    consistent = all((g <= t) == (d <= t) for g, d, _, _ in vb)
    rec_a = CheckRecord.make(
        "vertical-bundle-like", "G bundle-like for VT*M iff g_ijk = 0", [r[0] for r in vb], t,
        {"direct_residual_max": max(r[1] for r in vb), "iff_consistent": consistent,
         "witness_point": worst, "witness_indices": list(vb[worst][2]),
         "witness_g_ijk": vb[worst][0], "witness_direct": vb[worst][3]})

    t = _tol("vprime-bundle-like", tolerances)
    consistent = all((d <= t) == (g <= t) for d, _, g in vp)
    rec_b = CheckRecord.make(
        "vprime-bundle-like", "G bundle-like for V'T*M iff g_abc = 0", [r[0] for r in vp], t,
        {"closed_form_residual_max": max(r[1] for r in vp), "g_abc_max": max(r[2] for r in vp),
         "iff_consistent": consistent})

    t, ta = _tol("xi-bundle-like", tolerances), _tol("angular-curvature", tolerances)
    consistent = all((b <= t) == (a <= ta) for b, a in xb)
    rec_c = CheckRecord.make(
        "xi-bundle-like", "G bundle-like for xi on I*M(c) iff angular curvature vanishes",
        [r[0] for r in xb], t,
        {"shell": shell, "angular_max": max(r[1] for r in xb), "iff_consistent": consistent})
    return [rec_a, rec_b, rec_c]


def verify_killing(m: MetricExpression, points: Sequence[PhasePoint], shell: float = 1.0,
                   tolerances=None, map_fn: MapFn = map, alternate: bool = False) -> list[CheckRecord]:
    pts = _need(points)
    cl = list(map_fn(lambda q: _cstar_lie_point(m, q, alternate), pts))
    xl = list(map_fn(lambda q: _xi_lie_point(m, q, shell, alternate), pts))
    t = _tol("cstar-lie-derivative", tolerances)
    rec_a = CheckRecord.make(
        "cstar-lie-derivative", "L_C* G(pbar^a, pbar^b) = 2 g^ab, so C* is not Killing",
        [r[0] for r in cl], t,
        {"lie_min_abs_diag": min(float(np.min(np.abs(np.diag(L)))) for _, L in cl)})
    t, ta = _tol("xi-killing", tolerances), _tol("angular-curvature", tolerances)
    consistent = all((k <= t) == (a <= ta) for k, _, a in xl)
    rec_b = CheckRecord.make(
        "xi-killing", "xi is Killing on I*M(c) iff angular curvature vanishes", [r[0] for r in xl], t,
        {"shell": shell, "angular_max": max(r[2] for r in xl), "angular_min": min(r[2] for r in xl),
         "iff_consistent": consistent})
    return [rec_a, rec_b]


def verify_level_sets(m: MetricExpression, points: Sequence[PhasePoint], tolerances=None,
                      map_fn: MapFn = map, seed: int = 0) -> CheckRecord:
    pts = _need(points)
    rows = list(map_fn(lambda iq: _level_set_point(m, iq[1], seed, iq[0]), enumerate(pts)))
    parts = {k: max(r[k] for r in rows) for k in rows[0]}
    return CheckRecord.make("level-sets", "C* normal and xi tangent to the level sets of K",
                            [max(r.values()) for r in rows], _tol("level-sets", tolerances), parts)


def classify_constant_curvature(m: MetricExpression, shell_c: float, points: Sequence[PhasePoint],
                                map_fn: MapFn = map, tolerances=None) -> CurvatureFit:
    """Least-squares c_hat in R_ij = c_hat K^2 h_ij over all points projected to K = shell_c."""
    pts = list(points)
    if len(pts) < MIN_FIT_POINTS:
        raise InsufficientPoints(f"{len(pts)} points given, need at least {MIN_FIT_POINTS}")
    pts = [project_to_shell(m, q, shell_c) for q in pts]
    data = list(map_fn(lambda q: _curvature_point(m, q), pts))
    num = sum(float(np.sum(R * A)) for R, A, _ in data)
    den = sum(float(np.sum(A * A)) for _, A, _ in data)
    if den < 1e-20 * len(data):
        raise IndefiniteFit("angular metric vanishes at the sampled points")
    c_hat = num / den
    residual, per_point = 0.0, []
    for R, A, h in data:
        scale = 1.0 + abs(c_hat) * shell_c ** 2 * np.linalg.norm(h)
        residual = max(residual, float(np.max(np.abs(R - c_hat * A))) / scale)
        aa = float(np.sum(A * A))
        per_point.append(float(np.sum(R * A)) / aa if aa > 0 else float("nan"))
    fit = CurvatureFit(c_hat=float(c_hat), residual=residual, shell=float(shell_c), points=len(pts),
                       per_point=per_point)
    if c_hat < 0:
        c_law = 1.0 / np.sqrt(-c_hat)
        law_pts = [project_to_shell(m, q, c_law) for q in pts]
        ang = max(float(np.max(np.abs(np.array(CartanGeometry(m, q, 4).ang.value)))) for q in law_pts)
        fit.law_shell = float(c_law)
        fit.angular_on_law_shell = ang
        fit.shell_law_consistent = (ang <= _tol("angular-curvature", tolerances)) == \
            (residual <= _tol("curvature-fit", tolerances))
    return fit


@dataclass
class EquivalenceRow:
    constant_negative: bool
    bundle_like: bool
    killing: bool
    angular_vanishes: bool
    shell: float
    c_hat: float

    @property
    def agree(self) -> bool:
        v = (self.constant_negative, self.bundle_like, self.killing, self.angular_vanishes)
        return all(v) or not any(v)


def curvature_equivalences(m: MetricExpression, points: Sequence[PhasePoint], tolerances=None,
                           map_fn: MapFn = map, fit: CurvatureFit | None = None) -> CheckRecord:
    """Cross-tabulate the four conditions equivalent to constant negative curvature.

    The shell is c = 1/sqrt(-c_hat) when the fitted constant is negative and 1
    otherwise.  The record passes iff all four conditions agree.
    """
    pts = _need(points)
    if fit is None:
        fit = classify_constant_curvature(m, 1.0, pts if len(pts) >= MIN_FIT_POINTS else
                                          (pts * (MIN_FIT_POINTS // len(pts) + 1))[:MIN_FIT_POINTS],
                                          map_fn=map_fn, tolerances=tolerances)
    const_neg = fit.c_hat < 0 and fit.residual <= _tol("curvature-fit", tolerances)
    shell = fit.law_shell if fit.c_hat < 0 else 1.0
    xl = list(map_fn(lambda q: _xi_lie_point(m, q, shell), pts))
    t_k, t_b, t_a = (_tol(k, tolerances) for k in ("xi-killing", "xi-bundle-like", "angular-curvature"))
    row = EquivalenceRow(
        constant_negative=bool(const_neg),
        bundle_like=all(b <= t_b for _, b, _ in xl),
        killing=all(k <= t_k for k, _, _ in xl),
        angular_vanishes=all(a <= t_a for _, _, a in xl),
        shell=float(shell), c_hat=fit.c_hat)
    disagreement = 0.0 if row.agree else 1.0
    details = asdict(row)
    details["agree"] = row.agree
    details["killing_max"] = max(k for k, _, _ in xl)
    details["bundle_like_max"] = max(b for _, b, _ in xl)
    details["angular_max"] = max(a for _, _, a in xl)
    return CheckRecord.make("curvature-equivalences",
                            "constant curvature k<0, xi bundle-like, xi Killing and vanishing angular "
                            "curvature on I*M(c), c^2 = -1/k, are equivalent",
                            [disagreement] * len(pts), 0.0, details)
