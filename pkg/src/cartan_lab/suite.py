"""Seeded sampling, suite orchestration and report emission."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import foliation as fol
from .builtins import Builtin, get_builtin
from .core import CartanGeometry, GeometryError, identity_residuals, levi_civita_natural
from .dsl import MetricExpression, PhasePoint, evaluate, parse_metric
from .dsl.expr import DomainError
from .dsl.metric import euler_operator, hessian_exprs
from .foliation import CheckRecord, CurvatureFit
from .frame import PIVOT_MARGIN, FrameGeometry, choose_pivot, frame_brackets
from .indicatrix import (IndicatrixGeometry, contact_axioms_check, gauss_relations_check,
                         sasakian_obstruction)
from .oracle import koszul_oracle

log = logging.getLogger("cartan_lab")

SCHEMA_VERSION = 1
MAX_COND = 1e8
SHELL_RANGE = (0.5, 2.0)
KOSZUL_POINTS = 20
GAUSS_POINTS = 10
BRACKET_POINTS = 20

CHECK_IDS = (
    "axioms", "connection-koszul", "curvature-identities", "frame-gram", "frame-brackets",
    "geodesic-closure", "vertical-totally-geodesic", "not-totally-geodesic", "umbilicity",
    "vertical-bundle-like", "vprime-bundle-like", "xi-bundle-like", "cstar-lie-derivative",
    "xi-killing", "level-sets", "classifier", "curvature-equivalences", "contact-axioms",
    "sasakian-obstruction", "obstruction-bound", "gauss-relations",
)
# checks whose failure means the pipeline itself is wrong, not that a theorem fails
CONSISTENCY_CHECKS = ("axioms", "connection-koszul", "curvature-identities", "frame-gram",
                      "frame-brackets", "geodesic-closure", "level-sets", "contact-axioms")

TOLERANCES = dict(fol.TOLERANCES)
TOLERANCES.update({
    "axioms": 1e-9, "connection-koszul": 1e-4, "curvature-identities": 1e-8, "frame-gram": 1e-8,
    "frame-brackets": 1e-5, "classifier": 1e-5, "contact-axioms": 1e-8,
    "sasakian-obstruction": 1e-8, "obstruction-bound": 1e-5, "gauss-relations": 1e-5,
})


class ConfigError(ValueError):
    pass


class AllPointsRejected(RuntimeError):
    pass


@dataclass
class RunConfig:
    metric: str | None = None          # inline DSL text or builtin name
    builtin: str | None = None
    dim: int | None = None
    kind: str = "K-squared"
    seed: int = 0
    num_points: int = 50
    coordinate_box: list | None = None
    shells: list | None = None
    checks: list | None = None
    tolerances: dict = field(default_factory=dict)
    output: str | None = None
    format: str = "json"
    threads: int | None = None

    def validate(self) -> "RunConfig":
        if (self.metric is None) == (self.builtin is None):
            if self.metric is not None and self.builtin is not None:
                raise ConfigError("give either a metric or a builtin, not both")
            raise ConfigError("a metric or a builtin is required")
        if self.num_points < 10:
            raise ConfigError("num_points must be >= 10")
        if self.shells is not None and not all(s > 0 for s in self.shells):
            raise ConfigError("shells must be positive")
        unknown = [c for c in (self.checks or []) if c not in CHECK_IDS]
        if unknown:
            raise ConfigError(f"unknown check ids: {', '.join(unknown)}")
        bad = [k for k in self.tolerances if k not in TOLERANCES]
        if bad:
            raise ConfigError(f"unknown tolerance keys: {', '.join(bad)}")
        if self.format not in ("json", "csv"):
            raise ConfigError("format must be json or csv")
        if self.builtin is None and self.dim is None:
            raise ConfigError("dim is required for inline metrics")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = set(cls.__dataclass_fields__)
        bad = [k for k in d if k not in names]
        if bad:
            raise ConfigError(f"unknown config keys: {', '.join(bad)}")
        return cls(**d)

    def echo(self) -> dict:
        d = asdict(self)
        for k in ("output", "threads", "format"):
            d.pop(k)
        return d


@dataclass
class Resolved:
    metric: MetricExpression
    builtin: Builtin | None
    box: list
    shells: list
    checks: list
    tolerances: dict


def resolve(cfg: RunConfig) -> Resolved:
    cfg.validate()
    b = None
    name = cfg.builtin
    if name is None and cfg.metric is not None:
        try:
            b = get_builtin(cfg.metric, cfg.dim)
        except KeyError:
            b = None
    else:
        b = get_builtin(name, cfg.dim)
    if b is not None:
        m = b.metric()
        box = cfg.coordinate_box or [list(iv) for iv in b.box]
        shells = cfg.shells or list(b.shells)
    else:
        m = parse_metric(cfg.metric, cfg.dim, cfg.kind)
        box = cfg.coordinate_box or [[-1.0, 1.0]] * m.dim
        shells = cfg.shells or [1.0]
    if len(box) != m.dim or any(len(iv) != 2 or not iv[0] < iv[1] for iv in box):
        raise ConfigError(f"coordinate_box needs {m.dim} intervals lo < hi")
    tol = dict(TOLERANCES)
    tol.update(cfg.tolerances)
    return Resolved(m, b, [list(map(float, iv)) for iv in box], [float(s) for s in shells],
                    list(cfg.checks or CHECK_IDS), tol)


# ---------------------------------------------------------------------------
# sampling

def thread_count(requested: int | None = None) -> int:
    cap = os.environ.get("CARTAN_LAB_THREADS")
    n = requested or min(4, os.cpu_count() or 1)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring CARTAN_LAB_THREADS=%r", cap)
    return max(1, n)


def ordered_map(threads: int):
    """A map() that keeps input order; parallel when threads > 1."""
    if threads <= 1:
        return lambda f, xs: list(map(f, xs))

    def pmap(f, xs):
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(f, list(xs)))
    return pmap


def draw_point(m: MetricExpression, box, seed: int, idx: int):
    """One candidate point from its own RNG stream; returns (point, None) or (None, reason)."""
    rng = np.random.default_rng([seed, idx])
    n = m.dim
    x = np.array([rng.uniform(lo, hi) for lo, hi in box])
    d = rng.standard_normal(n)
    target = rng.uniform(*SHELL_RANGE)
    try:
        k2 = evaluate(m.ast, PhasePoint(tuple(x), tuple(d)))
        if not (np.isfinite(k2) and k2 > 0):
            return None, "nonpositive K^2"
        pt = PhasePoint(tuple(x), tuple(d * (target / math.sqrt(k2))))
        geo = CartanGeometry(m, pt, order=2)
        g = np.array(geo.g_up.value)
        if not np.all(np.isfinite(g)):
            return None, "non-finite g^ij"
        eig = np.linalg.eigvalsh((g + g.T) / 2)
        if eig[0] <= 0:
            return None, "g^ij not positive definite"
        if eig[-1] / eig[0] > MAX_COND:
            return None, "condition number"
        if n >= 2 and choose_pivot(g @ np.array(pt.p))[1] > PIVOT_MARGIN:
            return None, "pivot margin"
    except (DomainError, ArithmeticError, GeometryError, ValueError, OverflowError) as e:
        return None, f"domain: {type(e).__name__}"
    return pt, None


def sample_points(m: MetricExpression, box, seed: int, count: int, budget_factor: int = 10):
    """Accepted points in index order, plus a Counter of rejection reasons."""
    out, reasons = [], Counter()
    for idx in range(budget_factor * count):
        pt, why = draw_point(m, box, seed, idx)
        if pt is None:
            reasons[why] += 1
            log.info("rejected candidate %d: %s", idx, why)
            continue
        out.append(pt)
        if len(out) == count:
            return out, reasons
    raise AllPointsRejected(f"only {len(out)} of {count} points accepted within {budget_factor * count} draws "
                            f"({dict(reasons)})")


# ---------------------------------------------------------------------------
# point kernels for the non-foliation checks

def _axioms_point(m, ops, pt):
    k2e, euler_k2, gup, euler_g = ops
    scale = max(1.0, abs(evaluate(k2e, pt)))
    dk = abs(evaluate(euler_k2, pt)) / scale
    g = np.array([[evaluate(e, pt) for e in row] for row in gup])
    dg = max(abs(evaluate(e, pt)) for row in euler_g for e in row) / max(1.0, float(np.max(np.abs(g))))
    pd = float(np.linalg.eigvalsh((g + g.T) / 2)[0])
    return dk, dg, pd


def axiom_ops(m: MetricExpression):
    n = m.dim
    gup = hessian_exprs(m)
    return (m.ast, euler_operator(m.ast, n) - 2.0 * m.ast, gup,
            [[euler_operator(e, n) for e in row] for row in gup])


def _koszul_point(m, pt):
    return float(np.max(np.abs(levi_civita_natural(m, pt) - koszul_oracle(m, pt))))


def _frame_gram_point(m, pt):
    fg = FrameGeometry(CartanGeometry(m, pt, 3))
    exp = fg.gram_expected()
    return float(np.max(np.abs(fg.gram() - exp))) / (1.0 + float(np.max(np.abs(exp))))


def _brackets_point(m, pt):
    rows = frame_brackets(m, pt)
    return {r: (b.max_residual, b.max_exact_residual) for r, b in rows.items()}


def _contact_point(m, pt):
    ig = IndicatrixGeometry(m, pt, c=1.0, order=4)
    rep = contact_axioms_check(m, ig)
    ob = sasakian_obstruction(m, ig)
    return rep.residuals, ob.norm, ob.min_eig_g_frame


def _gauss_point(m, pt):
    ig = IndicatrixGeometry(m, pt, c=None, order=5)
    return {r: g.residual for r, g in gauss_relations_check(m, ig).items()}


def _rowmax(rows):
    keys = rows[0].keys()
    return {k: max(r[k] for r in rows) for k in keys}


# ---------------------------------------------------------------------------
# suite

@dataclass
class VerificationReport:
    config: dict
    metric: dict
    sampling: dict
    checks: list
    curvature_fit: dict | None
    summary: dict
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check_id", "theorem", "points_tested", "max_residual", "tolerance", "verdict"])
        for r in self.checks:
            w.writerow([r["check_id"], r["theorem"], r["points_tested"], repr(r["max_residual"]),
                        repr(r["tolerance"]), r["verdict"]])
        return buf.getvalue()

    def render(self, fmt: str = "json") -> str:
        return self.to_csv() if fmt == "csv" else self.to_json()

    @property
    def ok(self) -> bool:
        return self.summary["verdict"] == "ok"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, NaN/inf to None, tuples to lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _merge(records: list[CheckRecord], key: str, values: list) -> CheckRecord:
    """Combine per-shell records of one check into a single record."""
    first = records[0]
    worst = max(r.max_residual for r in records)
    details = {f"{key}={v:g}": r.details for v, r in zip(values, records)}
    return CheckRecord(first.check_id, first.theorem, sum(r.points_tested for r in records), worst,
                       first.tolerance, "pass" if worst <= first.tolerance else "fail", details)


def run_suite(cfg: RunConfig) -> VerificationReport:
    rs = resolve(cfg)
    m, tol, want = rs.metric, rs.tolerances, set(rs.checks)
    pmap = ordered_map(thread_count(cfg.threads))
    need_fit = bool(want & {"classifier", "curvature-equivalences"})
    count = max(cfg.num_points, fol.MIN_FIT_POINTS) if need_fit else cfg.num_points
    all_pts, reasons = sample_points(m, rs.box, cfg.seed, count)
    pts = all_pts[:cfg.num_points]
    N = len(pts)
    recs: dict[str, CheckRecord] = {}

    def add(rec: CheckRecord):
        if rec.check_id in want:
            recs[rec.check_id] = rec

    if "axioms" in want:
        ops = axiom_ops(m)
        rows = pmap(lambda q: _axioms_point(m, ops, q), pts)
        res = [max(dk, dg) for dk, dg, _ in rows]
        min_eig = min(pd for _, _, pd in rows)
        if min_eig <= 0:
            res = [max(r, 1.0) for r in res]
        add(CheckRecord.make("axioms", "K^2 is 2-homogeneous and g^ij 0-homogeneous, positive definite",
                             res, tol["axioms"],
                             {"euler_K2_max": max(r[0] for r in rows), "euler_g_max": max(r[1] for r in rows),
                              "min_eig_g_up": min_eig}))
    if "connection-koszul" in want:
        sub = pts[:KOSZUL_POINTS]
        add(CheckRecord.make("connection-koszul", "closed-form Levi-Civita coefficients match the Koszul formula",
                             pmap(lambda q: _koszul_point(m, q), sub), tol["connection-koszul"],
                             minimum=min(10, len(sub))))
    if "curvature-identities" in want:
        rows = pmap(lambda q: identity_residuals(CartanGeometry(m, q, 4)), pts)
        parts = _rowmax(rows)
        asserted = [max(v for k, v in r.items() if not k.startswith("measured")) for r in rows]
        add(CheckRecord.make("curvature-identities", "cyclic and contraction identities of R_ijk, C and h",
                             asserted, tol["curvature-identities"], parts))
    if "frame-gram" in want:
        add(CheckRecord.make("frame-gram", "frame Gram matrix is diag(K^2, g_ab, K^2, g^ab)",
                             pmap(lambda q: _frame_gram_point(m, q), pts), tol["frame-gram"]))
    if "frame-brackets" in want:
        sub = pts[:BRACKET_POINTS]
        rows = pmap(lambda q: _brackets_point(m, q), sub)
        per_row = {r: max(x[r][0] for x in rows) for r in rows[0]}
        exact = {r: max(x[r][1] for x in rows) for r in rows[0]}
        add(CheckRecord.make("frame-brackets", "frame Lie-bracket formulas match a numeric Lie bracket",
                             [max(v[0] for v in x.values()) for x in rows], tol["frame-brackets"],
                             {"numeric_by_row": per_row, "exact_by_row": exact}, minimum=min(10, len(sub))))

    geo_ids = {"geodesic-closure", "vertical-totally-geodesic", "not-totally-geodesic", "umbilicity"}
    if want & geo_ids:
        for r in fol.verify_totally_geodesic(m, pts, tol, pmap):
            add(r)
    if want & {"vertical-bundle-like", "vprime-bundle-like", "xi-bundle-like"}:
        per_shell = [fol.verify_bundle_like(m, pts, s, tol, pmap, seed=cfg.seed) for s in rs.shells]
        add(per_shell[0][0])
        add(per_shell[0][1])
        add(_merge([p[2] for p in per_shell], "shell", rs.shells))
    if want & {"cstar-lie-derivative", "xi-killing"}:
        per_shell = [fol.verify_killing(m, pts, s, tol, pmap) for s in rs.shells]
        add(per_shell[0][0])
        add(_merge([p[1] for p in per_shell], "shell", rs.shells))
    if "level-sets" in want:
        add(fol.verify_level_sets(m, pts, tol, pmap, seed=cfg.seed))

    fit = None
    if need_fit:
        try:
            fit = fol.classify_constant_curvature(m, rs.shells[0], all_pts, pmap, tol)
        except fol.IndefiniteFit as e:
            log.warning("classifier: %s", e)
        if fit is not None and "classifier" in want:
            add(CheckRecord.make("classifier", "R_ij = c K^2 h_ij with one constant c",
                                 [fit.residual], tol["classifier"], {"c_hat": fit.c_hat, "shell": fit.shell},
                                 minimum=1))
        if fit is not None and "curvature-equivalences" in want:
            add(fol.curvature_equivalences(m, pts, tol, pmap, fit=fit))

    if want & {"contact-axioms", "sasakian-obstruction", "obstruction-bound"}:
        rows = pmap(lambda q: _contact_point(m, q), pts)
        axioms = [max(r[0].values()) for r in rows]
        add(CheckRecord.make("contact-axioms", "I*M(1) carries a contact metric structure", axioms,
                             tol["contact-axioms"], _rowmax([r[0] for r in rows])))
        norms = [r[1] for r in rows]
        add(CheckRecord.make("sasakian-obstruction", "I*M(1) is not Sasakian: (nabla~ phi) does not vanish on D",
                             [max(0.0, tol["sasakian-obstruction"] - v) for v in norms], 0.0,
                             {"norm_min": min(norms), "norm_max": max(norms)}))
        short = [max(0.0, e - v) for _, v, e in rows]
        add(CheckRecord.make("obstruction-bound", "obstruction norm >= min eigenvalue of g_ab", short,
                             tol["obstruction-bound"],
                             {"worst_point": int(np.argmax(short)), "worst_norm": rows[int(np.argmax(short))][1],
                              "worst_min_eig": rows[int(np.argmax(short))][2]}))
    if "gauss-relations" in want:
        sub = pts[:GAUSS_POINTS]
        rows = pmap(lambda q: _gauss_point(m, q), sub)
        add(CheckRecord.make("gauss-relations", "curvature of the level sets against the ambient curvature",
                             [max(r.values()) for r in rows], tol["gauss-relations"], _rowmax(rows),
                             minimum=min(10, len(sub))))

    ordered = [recs[c].to_dict() for c in CHECK_IDS if c in recs]
    summary = _summary(rs, recs, fit)
    return VerificationReport(
        config=cfg.echo(),
        metric={"source": m.source, "dim": m.dim, "kind": m.kind, "fingerprint": m.fingerprint,
                "builtin": rs.builtin.name if rs.builtin else None},
        sampling={"accepted": len(all_pts), "used": N, "rejected": dict(sorted(reasons.items())),
                  "box": rs.box, "shells": rs.shells, "momentum_shells": list(SHELL_RANGE)},
        checks=ordered,
        curvature_fit=fit.to_dict() if fit else None,
        summary=summary)


def _summary(rs: Resolved, recs: dict, fit: CurvatureFit | None) -> dict:
    verdicts = {k: r.verdict for k, r in recs.items()}
    out = {"verdicts": verdicts, "c_hat": fit.c_hat if fit else None}
    mismatches = []
    if rs.builtin is not None:
        for k, exp in rs.builtin.expected.items():
            if k in verdicts and verdicts[k] != exp:
                mismatches.append({"check": k, "expected": exp, "got": verdicts[k]})
        eq = recs.get("curvature-equivalences")
        want_eq = rs.builtin.expected.get("xi-killing") == "pass"
        if eq is not None:
            flags = {k: eq.details[k] for k in ("constant_negative", "bundle_like", "killing", "angular_vanishes")}
            if any(v != want_eq for v in flags.values()):
                mismatches.append({"check": "equivalence-row", "expected": want_eq, "got": flags})
        if fit is not None and abs(fit.c_hat - rs.builtin.expected_c_hat) > rs.builtin.c_hat_tol:
            mismatches.append({"check": "c_hat", "expected": rs.builtin.expected_c_hat, "got": fit.c_hat})
        out["mode"] = "builtin expectations"
    else:
        mismatches = [{"check": k, "expected": "pass", "got": verdicts[k]}
                      for k in CONSISTENCY_CHECKS if verdicts.get(k) == "fail"]
        out["mode"] = "internal consistency"
    out["mismatches"] = mismatches
    out["verdict"] = "ok" if not mismatches else "mismatch"
    return out


def eval_expr(text: str, dim: int, point: PhasePoint) -> float:
    """Value of a DSL expression at ``point``."""
    return evaluate(parse_metric(text, dim).ast, point)
