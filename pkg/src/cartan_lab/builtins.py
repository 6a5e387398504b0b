"""Built-in metrics with the outcomes the theory predicts for them."""
from __future__ import annotations

from dataclasses import dataclass, field

from .dsl import MetricExpression, parse_metric


@dataclass(frozen=True)
class Builtin:
    name: str
    dim: int
    kind: str
    text: str
    box: tuple                      # per-coordinate (lo, hi)
    expected_c_hat: float
    c_hat_tol: float
    shells: tuple = (1.0,)
    # predicted verdicts ("pass"/"fail") for check ids; checks not listed carry no prediction
    expected: dict = field(default_factory=dict)
    note: str = ""

    def metric(self) -> MetricExpression:
        return parse_metric(self.text, self.dim, self.kind)

    @property
    def expected_classifier(self) -> str:
        return f"c_hat = {self.expected_c_hat:g} +/- {self.c_hat_tol:g}"


_COMMON = {
    "axioms": "pass", "connection-koszul": "pass", "curvature-identities": "pass",
    "frame-gram": "pass", "frame-brackets": "pass", "geodesic-closure": "pass",
    "not-totally-geodesic": "pass", "umbilicity": "pass", "cstar-lie-derivative": "pass",
    "level-sets": "pass", "contact-axioms": "pass", "sasakian-obstruction": "pass",
    "obstruction-bound": "pass", "gauss-relations": "pass", "curvature-equivalences": "pass",
}


def _expect(riemannian: bool, constant_negative: bool, flat: bool = False) -> dict:
    e = dict(_COMMON)
    e["vertical-bundle-like"] = e["vprime-bundle-like"] = "pass" if riemannian else "fail"
    e["xi-bundle-like"] = e["xi-killing"] = "pass" if constant_negative else "fail"
    if flat:
        e["vertical-totally-geodesic"] = "pass"
    return e


BUILTINS = {
    b.name: b for b in [
        Builtin("euclidean", 2, "K-squared", "p1^2+p2^2", ((-1.0, 1.0),) * 2, 0.0, 1e-6,
                expected=_expect(True, False, flat=True), note="flat"),
        Builtin("euclidean-3d", 3, "K-squared", "p1^2+p2^2+p3^2", ((-1.0, 1.0),) * 3, 0.0, 1e-6,
                expected=_expect(True, False, flat=True), note="flat"),
        Builtin("hyperbolic-2d", 2, "K-squared", "x2^2*(p1^2+p2^2)", ((-1.0, 1.0), (0.5, 2.0)), -1.0, 1e-4,
                expected=_expect(True, True), note="upper half-plane, sectional curvature -1"),
        Builtin("hyperbolic-2d-scaled", 2, "K-squared", "4*x2^2*(p1^2+p2^2)", ((-1.0, 1.0), (0.5, 2.0)),
                -4.0, 1e-3, shells=(0.5,), expected=_expect(True, True),
                note="base metric scaled by 1/4, sectional curvature -4"),
        Builtin("randers-2d-eps0.1", 2, "K", "sqrt(p1^2+p2^2)+0.1*p1", ((-1.0, 1.0),) * 2, 0.0, 1e-6,
                expected=_expect(False, False), note="locally Minkowski Randers dual"),
        Builtin("randers-3d-eps0.05", 3, "K", "sqrt(p1^2+p2^2+p3^2)+0.05*p1", ((-1.0, 1.0),) * 3, 0.0, 1e-6,
                expected=_expect(False, False), note="locally Minkowski Randers dual"),
    ]
}


def get_builtin(name: str, dim: int | None = None) -> Builtin:
    """Look up a builtin; ``euclidean`` with dim 3 resolves to ``euclidean-3d``."""
    if name == "euclidean" and dim == 3:
        name = "euclidean-3d"
    try:
        b = BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown builtin {name!r}; known: {', '.join(BUILTINS)}") from None
    if dim is not None and dim != b.dim:
        raise ValueError(f"builtin {name!r} has dim {b.dim}, not {dim}")
    return b


def list_builtins() -> list[dict]:
    return [{"name": b.name, "dim": b.dim, "kind": b.kind, "text": b.text,
             "expected_classifier": b.expected_classifier} for b in BUILTINS.values()]
