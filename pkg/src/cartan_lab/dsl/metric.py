"""Metric functions K^2(x, p), phase-space points and the calculus on them."""
from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import expr as E
from .parser import parse_expression

KINDS = {"K": "K", "K-squared": "K-squared", "K2": "K-squared", "K^2": "K-squared"}


@dataclass(frozen=True)
class PhasePoint:
    """A point (x, p) of the slit cotangent bundle."""

    x: tuple
    p: tuple

    def __post_init__(self):
        x = tuple(float(v) for v in self.x)
        p = tuple(float(v) for v in self.p)
        if len(x) != len(p):
            raise ValueError("x and p must have the same length")
        if len(x) < 1:
            raise ValueError("empty point")
        if all(v == 0.0 for v in p):
            raise ValueError("p = 0 lies on the zero section, outside the slit bundle")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def dim(self) -> int:
        return len(self.x)

    @property
    def z(self) -> np.ndarray:
        return np.array(self.x + self.p)

    @classmethod
    def from_z(cls, z) -> "PhasePoint":
        z = [float(v) for v in z]
        n = len(z) // 2
        return cls(tuple(z[:n]), tuple(z[n:]))

    def scaled(self, lam: float) -> "PhasePoint":
        return PhasePoint(self.x, tuple(lam * v for v in self.p))


def _parse_var(v, dim: int) -> int:
    """Flat index (x1..xn -> 0..n-1, p1..pn -> n..2n-1) of a variable spec."""
    if isinstance(v, (int, np.integer)):
        idx = int(v)
    else:
        if isinstance(v, str):
            kind, i = v[0], int(v[1:])
        else:
            kind, i = v
        if kind not in ("x", "p") or not 1 <= i <= dim:
            raise ValueError(f"bad variable {v!r} for dimension {dim}")
        idx = i - 1 if kind == "x" else dim + i - 1
    if not 0 <= idx < 2 * dim:
        raise ValueError(f"variable index {v!r} out of range")
    return idx


def var_node(idx: int, dim: int) -> E.Expr:
    return E.var("x", idx + 1) if idx < dim else E.var("p", idx - dim + 1)


def normalize_multi_index(multi_index, dim: int) -> tuple[int, ...]:
    """``[("p1", 2), ("x2", 1)]`` -> sorted tuple of flat indices with repetition.

    Items may be a variable (``"p1"``, ``("p", 1)`` or a flat int) or a
    ``(variable, order)`` pair.
    """
    flat = []
    for item in multi_index:
        if isinstance(item, tuple) and len(item) == 2 and item[0] not in ("x", "p"):
            v, order = item
        else:
            v, order = item, 1
        if int(order) < 0:
            raise ValueError("negative derivative order")
        flat.extend([_parse_var(v, dim)] * int(order))
    return tuple(sorted(flat))


class MetricExpression:
    """K^2 as an expression tree with a cache of its partial derivatives.

    The stored root is always K^2; when the user supplies K the root is its
    square.
    """

    MAX_ORDER = 6

    def __init__(self, root: E.Expr, dim: int, kind: str = "K-squared", source: str | None = None):
        if dim < 1:
            raise ValueError("dimension must be positive")
        kind = KINDS.get(kind)
        if kind is None:
            raise ValueError("kind must be 'K' or 'K-squared'")
        for k, i in E.variables(root):
            if i > dim:
                raise ValueError(f"variable {k}{i} exceeds dimension {dim}")
        self.user_root = root
        self.ast = E.mul(root, root) if kind == "K" else root
        self.dim = dim
        self.kind = kind
        self.source = source
        self.derivative_cache: dict[tuple[int, ...], E.Expr] = {(): self.ast}
        self._lock = threading.Lock()
        self._compiled: dict = {}

    def __repr__(self):
        return f"MetricExpression(K^2 = {E.to_string(self.ast)}, dim={self.dim})"

    @property
    def fingerprint(self) -> str:
        text = f"{self.dim}|{E.to_string(self.ast)}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def variable(self, idx: int) -> E.Expr:
        return var_node(idx, self.dim)

    def derivative(self, flat: tuple[int, ...]) -> E.Expr:
        """Cached derivative for a sorted tuple of flat variable indices."""
        flat = tuple(sorted(flat))
        hit = self.derivative_cache.get(flat)
        if hit is not None:
            return hit
        if len(flat) > self.MAX_ORDER:
            raise ValueError(f"total derivative order {len(flat)} exceeds {self.MAX_ORDER}")
        parent = self.derivative(flat[:-1])
        d = E.diff(parent, self.variable(flat[-1]))
        with self._lock:
            return self.derivative_cache.setdefault(flat, d)

    def compiled(self, keys: Sequence[tuple[int, ...]]) -> E.CompiledExprs:
        keys = tuple(tuple(sorted(k)) for k in keys)
        fn = self._compiled.get(keys)
        if fn is None:
            fn = E.CompiledExprs([self.derivative(k) for k in keys], self.dim)
            with self._lock:
                fn = self._compiled.setdefault(keys, fn)
        return fn


def parse_metric(text: str, dim: int, kind: str = "K-squared") -> MetricExpression:
    """Parse DSL text into a MetricExpression (squared when ``kind`` is "K")."""
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    root = parse_expression(text, dim)
    return MetricExpression(root, dim, kind, source=text)


def differentiate(m: MetricExpression, multi_index) -> E.Expr:
    """Exact partial derivative of K^2; ``multi_index`` like ``[("x2", 1), ("p1", 1)]``."""
    return m.derivative(normalize_multi_index(multi_index, m.dim))


def diff_expr(e: E.Expr, multi_index, dim: int) -> E.Expr:
    """Partial derivative of an arbitrary expression (no metric cache)."""
    for idx in normalize_multi_index(multi_index, dim):
        e = E.diff(e, var_node(idx, dim))
    return e


_EVAL_CACHE: dict = {}


def evaluate(e: E.Expr, pt: PhasePoint, dim: int | None = None) -> float:
    """Evaluate an expression at a phase point.

    Raises ``DomainError`` naming the offending subexpression.
    """
    dim = pt.dim if dim is None else dim
    if dim != pt.dim:
        raise ValueError(f"point has dimension {pt.dim}, expected {dim}")
    for k, i in E.variables(e):
        if i > dim:
            raise ValueError(f"expression uses {k}{i} but the point has dimension {dim}")
    fn = _EVAL_CACHE.get((e, dim))
    if fn is None:
        fn = _EVAL_CACHE.setdefault((e, dim), E.CompiledExprs([e], dim))
    return fn(pt.z.tolist())[0]


def poisson_bracket(f: E.Expr, g: E.Expr, dim: int) -> E.Expr:
    """{f, g} = df/dp_i dg/dx^i - dg/dp_i df/dx^i."""
    out = E.ZERO
    for i in range(1, dim + 1):
        xi, pi = E.var("x", i), E.var("p", i)
        out = out + E.diff(f, pi) * E.diff(g, xi) - E.diff(g, pi) * E.diff(f, xi)
    return out


def euler_operator(e: E.Expr, dim: int) -> E.Expr:
    """p_i d e / d p_i as an expression."""
    out = E.ZERO
    for i in range(1, dim + 1):
        out = out + E.var("p", i) * E.diff(e, E.var("p", i))
    return out


def euler_defect(e: E.Expr, degree: float, pt: PhasePoint) -> float:
    """p_i de/dp_i - degree * e at ``pt``; zero for momentum-homogeneous ``e``."""
    return evaluate(euler_operator(e, pt.dim) - degree * e, pt)


def hessian_exprs(m: MetricExpression) -> list[list[E.Expr]]:
    """g^{ij} = 1/2 d^2 K^2 / dp_i dp_j as expressions."""
    n = m.dim
    half = E.const(0.5)
    return [[half * m.derivative((n + i, n + j)) for j in range(n)] for i in range(n)]


def iter_monomials(nvars: int, max_degree: int) -> Iterable[tuple[int, ...]]:
    """Exponent tuples of total degree <= max_degree, graded then lexicographic."""
    def rec(prefix, remaining, left):
        if left == 1:
            yield prefix + (remaining,)
            return
        for e in range(remaining, -1, -1):
            yield from rec(prefix + (e,), remaining - e, left - 1)

    for deg in range(max_degree + 1):
        yield from rec((), deg, nvars)
