"""Hash-consed expression DAG over phase-space variables.

Nodes are interned: two structurally identical expressions are the same
Python object, so equality is identity and derivative caches are shared
between every expression that contains a given subtree.  Only algebraic
zero/one simplification and constant folding are performed.
"""
from __future__ import annotations

import hashlib
import math
import threading

FUNCTIONS = ("sqrt", "exp", "log", "sin", "cos")

_INTERN: dict[tuple, "Expr"] = {}
_LOCK = threading.Lock()


class DomainError(ArithmeticError):
    """Evaluation left the domain of a function (log of <= 0, 1/0, ...)."""

    def __init__(self, message, subexpr=None):
        super().__init__(message)
        self.subexpr = subexpr


class Expr:
    """Immutable interned expression node.

    ``op`` is one of ``const``, ``var``, ``add``, ``mul``, ``pow`` (constant
    exponent), ``exppow`` (constant positive base, expression exponent) or
    a function name.  ``var`` nodes carry ``("x", i)`` or ``("p", i)`` with a
    1-based index.
    """

    __slots__ = ("op", "args", "value", "_key", "digest", "_dcache", "__weakref__")

    def __new__(cls, op, args=(), value=None):
        key = (op, tuple(id(a) for a in args), value)
        node = _INTERN.get(key)
        if node is not None:
            return node
        with _LOCK:
            node = _INTERN.get(key)
            if node is None:
                node = object.__new__(cls)
                node.op = op
                node.args = tuple(args)
                node.value = value
                node._key = key
                h = hashlib.blake2b(repr((op, value)).encode(), digest_size=8)
                for a in args:
                    h.update(a.digest.to_bytes(8, "little"))
                node.digest = int.from_bytes(h.digest(), "little")
                node._dcache = {}
                _INTERN[key] = node
        return node

    # interned: default identity semantics are exactly structural equality
    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        return self is other

    # -- arithmetic sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, as_expr(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, other):
        return power(self, as_expr(other))

    def __repr__(self):
        return f"Expr({to_string(self)})"

    def __str__(self):
        return to_string(self)

    @property
    def is_const(self):
        return self.op == "const"


def const(v) -> Expr:
    v = float(v)
    if v == 0.0:
        v = 0.0  # fold -0.0
    return Expr("const", (), v)


ZERO = const(0.0)
ONE = const(1.0)


def var(kind: str, index: int) -> Expr:
    if kind not in ("x", "p") or index < 1:
        raise ValueError(f"bad variable {kind}{index}")
    return Expr("var", (), (kind, int(index)))


def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    return const(v)


def add(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value + b.value)
    if a is ZERO:
        return b
    if b is ZERO:
        return a
    if b.is_const and not a.is_const:
        a, b = b, a
    elif not a.is_const and a.digest > b.digest:
        a, b = b, a
    return Expr("add", (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value * b.value)
    if a is ZERO or b is ZERO:
        return ZERO
    if a is ONE:
        return b
    if b is ONE:
        return a
    if b.is_const:
        a, b = b, a
    if a.is_const and b.op == "mul" and b.args[0].is_const:
        return mul(const(a.value * b.args[0].value), b.args[1])
    if not a.is_const and a.digest > b.digest:
        a, b = b, a
    return Expr("mul", (a, b))


def neg(a: Expr) -> Expr:
    return mul(const(-1.0), a)


def powc(base: Expr, exponent: float) -> Expr:
    """``base ** exponent`` for a numeric exponent."""
    exponent = float(exponent)
    if exponent == 0.0:
        return ONE
    if exponent == 1.0:
        return base
    if base.is_const:
        try:
            return const(_pow_value(base.value, exponent))
        except DomainError:
            pass
    if base is ZERO and exponent > 0:
        return ZERO
    if base.op == "pow" and float(exponent).is_integer():
        # (b^c)^k = b^(ck) is always valid for integer k
        return powc(base.args[0], base.value * exponent)
    return Expr("pow", (base,), exponent)


def div(a: Expr, b: Expr) -> Expr:
    if b is ZERO:
        raise DomainError("division by the constant zero", b)
    if b.is_const:
        return mul(const(1.0 / b.value), a)
    return mul(a, powc(b, -1.0))


def power(base: Expr, exponent: Expr) -> Expr:
    """General ``^``; rejects non-constant base with non-constant exponent."""
    if exponent.is_const:
        return powc(base, exponent.value)
    if base.is_const:
        if base.value <= 0:
            raise DomainError("non-positive constant base with variable exponent", base)
        if base.value == 1.0:
            return ONE
        return Expr("exppow", (exponent,), base.value)
    raise ValueError("'^' with both base and exponent non-constant is not differentiable symbolically")


def func(name: str, arg: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    if arg.is_const:
        try:
            return const(_FUNC_VALUE[name](arg.value))
        except DomainError:
            pass
    if name == "sqrt":
        return Expr("sqrt", (arg,))
    return Expr(name, (arg,))


def _pow_value(b, e):
    try:
        if b == 0.0 and e < 0:
            raise ZeroDivisionError
        r = b ** int(e) if float(e).is_integer() else b ** e
    except (ZeroDivisionError, OverflowError) as exc:
        raise DomainError(f"{b}^{e}: {exc}") from None
    if isinstance(r, complex):
        raise DomainError(f"negative base {b} with non-integer exponent {e}")
    return r


def _sqrt(v):
    if v < 0:
        raise DomainError(f"sqrt of negative value {v}")
    return math.sqrt(v)


def _log(v):
    if v <= 0:
        raise DomainError(f"log of non-positive value {v}")
    return math.log(v)


_FUNC_VALUE = {"sqrt": _sqrt, "exp": math.exp, "log": _log, "sin": math.sin, "cos": math.cos}


# -- differentiation ------------------------------------------------------

def diff(e: Expr, v: Expr) -> Expr:
    """Exact symbolic partial derivative of ``e`` with respect to variable node ``v``."""
    if v.op != "var":
        raise TypeError("differentiate with respect to a variable node")
    return _diff(e, v)


def _diff(e: Expr, v: Expr) -> Expr:
    cached = e._dcache.get(v)
    if cached is not None:
        return cached
    op = e.op
    if op == "const":
        r = ZERO
    elif op == "var":
        r = ONE if e is v else ZERO
    elif op == "add":
        r = add(_diff(e.args[0], v), _diff(e.args[1], v))
    elif op == "mul":
        a, b = e.args
        r = add(mul(_diff(a, v), b), mul(a, _diff(b, v)))
    elif op == "pow":
        (b,) = e.args
        db = _diff(b, v)
        r = ZERO if db is ZERO else mul(mul(const(e.value), powc(b, e.value - 1.0)), db)
    elif op == "exppow":
        (x,) = e.args
        r = mul(mul(e, const(math.log(e.value))), _diff(x, v))
    else:
        (a,) = e.args
        da = _diff(a, v)
        if da is ZERO:
            r = ZERO
        elif op == "sqrt":
            r = mul(mul(const(0.5), powc(e, -1.0)), da)
        elif op == "exp":
            r = mul(e, da)
        elif op == "log":
            r = mul(powc(a, -1.0), da)
        elif op == "sin":
            r = mul(func("cos", a), da)
        elif op == "cos":
            r = neg(mul(func("sin", a), da))
        else:  # pragma: no cover
            raise ValueError(op)
    e._dcache[v] = r
    return r


# -- traversal / printing -------------------------------------------------

def topo_order(roots) -> list[Expr]:
    """Post-order list of every node reachable from ``roots`` (each once)."""
    seen = set()
    out = []
    for root in roots:
        stack = [(root, False)]
        while stack:
            node, done = stack.pop()
            if done:
                out.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for a in node.args:
                if id(a) not in seen:
                    stack.append((a, False))
    return out


def variables(e: Expr) -> set[tuple[str, int]]:
    return {n.value for n in topo_order([e]) if n.op == "var"}


def count_nodes(roots) -> int:
    return len(topo_order(list(roots)))


def _fmt_num(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


_PREC = {"add": 1, "mul": 2, "pow": 3, "exppow": 3}


def to_string(e: Expr) -> str:
    """Infix rendering that re-parses to the same expression value."""
    memo: dict[int, tuple[str, int]] = {}
    for node in topo_order([e]):
        op = node.op
        if op == "const":
            s = _fmt_num(node.value)
            memo[id(node)] = (f"({s})" if node.value < 0 else s, 4)
        elif op == "var":
            k, i = node.value
            memo[id(node)] = (f"{k}{i}", 4)
        elif op == "add":
            a, b = (memo[id(x)][0] for x in node.args)
            memo[id(node)] = (f"{a} + {b}", 1)
        elif op == "mul":
            parts = []
            for x in node.args:
                s, p = memo[id(x)]
                parts.append(f"({s})" if p < 2 else s)
            memo[id(node)] = (" * ".join(parts), 2)
        elif op == "pow":
            s, p = memo[id(node.args[0])]
            memo[id(node)] = (f"{'(' + s + ')' if p < 4 else s}^{'(' + _fmt_num(node.value) + ')'}", 3)
        elif op == "exppow":
            s, _ = memo[id(node.args[0])]
            memo[id(node)] = (f"{_fmt_num(node.value)}^({s})", 3)
        else:
            s, _ = memo[id(node.args[0])]
            memo[id(node)] = (f"{op}({s})", 4)
    return memo[id(e)][0]


# -- evaluation -----------------------------------------------------------

def evaluate_tree(e: Expr, env: dict) -> float:
    """Reference evaluator (slow path); raises DomainError naming the subexpression.

    ``env`` maps ``("x", i)`` / ``("p", i)`` to floats.
    """
    vals: dict[int, float] = {}
    for node in topo_order([e]):
        op = node.op
        try:
            if op == "const":
                r = node.value
            elif op == "var":
                r = env[node.value]
            elif op == "add":
                r = vals[id(node.args[0])] + vals[id(node.args[1])]
            elif op == "mul":
                r = vals[id(node.args[0])] * vals[id(node.args[1])]
            elif op == "pow":
                r = _pow_value(vals[id(node.args[0])], node.value)
            elif op == "exppow":
                r = math.exp(vals[id(node.args[0])] * math.log(node.value))
            else:
                r = _FUNC_VALUE[op](vals[id(node.args[0])])
        except DomainError as exc:
            raise DomainError(f"{exc} in subexpression {to_string(node)}", node) from None
        except OverflowError:
            raise DomainError(f"overflow in subexpression {to_string(node)}", node) from None
        vals[id(node)] = r
    return vals[id(e)]


def _pow_code(base: str, expo: float) -> str:
    if float(expo).is_integer():
        return f"{base}**{int(expo)}"
    return f"_powf({base}, {expo!r})"


def _powf(b, e):
    if b < 0:
        raise DomainError(f"negative base {b} with non-integer exponent {e}")
    return b ** e


class CompiledExprs:
    """Straight-line Python function evaluating many roots over one shared DAG.

    Called with a flat coordinate vector ``z = (x1..xn, p1..pn)``; returns a
    list of floats aligned with ``roots``.  Evaluation is pure and
    thread-safe.
    """

    def __init__(self, roots, dim: int):
        self.roots = list(roots)
        self.dim = dim
        nodes = topo_order(self.roots)
        names: dict[int, str] = {}
        lines = ["def _f(z):"]
        for j, node in enumerate(nodes):
            op = node.op
            if op == "const":
                names[id(node)] = repr(node.value)
                continue
            if op == "var":
                k, i = node.value
                idx = i - 1 if k == "x" else dim + i - 1
                names[id(node)] = f"z[{idx}]"
                continue
            t = f"t{j}"
            a = [names[id(x)] for x in node.args]
            if op == "add":
                code = f"{a[0]} + {a[1]}"
            elif op == "mul":
                code = f"{a[0]} * {a[1]}"
            elif op == "pow":
                code = _pow_code(a[0], node.value)
            elif op == "exppow":
                code = f"_exp({a[0]} * {math.log(node.value)!r})"
            else:
                code = f"_{op}({a[0]})"
            lines.append(f"    {t} = {code}")
            names[id(node)] = t
        lines.append("    return [" + ", ".join(names[id(r)] for r in self.roots) + "]")
        self.source = "\n".join(lines)
        ns = {"_sqrt": math.sqrt, "_exp": math.exp, "_log": math.log, "_sin": math.sin,
              "_cos": math.cos, "_powf": _powf}
        exec(compile(self.source, "<cartan-expr>", "exec"), ns)
        self._fn = ns["_f"]

    def __call__(self, z):
        try:
            return self._fn(z)
        except (ValueError, ZeroDivisionError, OverflowError, DomainError):
            env = {}
            for i in range(self.dim):
                env[("x", i + 1)] = float(z[i])
                env[("p", i + 1)] = float(z[self.dim + i])
            for r in self.roots:
                evaluate_tree(r, env)  # raises DomainError with the subexpression
            raise DomainError("evaluation failed")  # pragma: no cover
