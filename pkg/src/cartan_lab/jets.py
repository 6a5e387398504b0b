"""Truncated multivariate Taylor series ("jets") with tensor-valued coefficients.

A jet of order k at a point z0 stores c[alpha] = D^alpha f(z0) / alpha! for
every monomial alpha of total degree <= k.  Products, matrix inverses and
partial derivatives of jets are exact up to the truncation order, which is
how derivatives of g_ij, N_ij and the frame fields are propagated without
symbolic inversion.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .dsl.metric import iter_monomials

_LETTERS = "abcdefghijklmnopqrstuvwxy"


class JetSpace:
    """Monomial bookkeeping for ``nvars`` variables up to degree ``order``."""

    def __init__(self, nvars: int, order: int):
        self.nvars = nvars
        self.order = order
        self.monomials = list(iter_monomials(nvars, order))
        self.index = {m: i for i, m in enumerate(self.monomials)}
        self.degree = np.array([sum(m) for m in self.monomials])
        self.size = [int(np.sum(self.degree <= k)) for k in range(order + 1)]
        self.factorial = np.array([math.prod(math.factorial(e) for e in m) for m in self.monomials],
                                  dtype=float)
        self._pairs: dict[int, tuple] = {}
        self._deriv: dict[tuple[int, int], tuple] = {}

    def pairs(self, k: int):
        """(I, J, scatter) for the Cauchy product truncated at degree k."""
        hit = self._pairs.get(k)
        if hit is not None:
            return hit
        I, J, O = [], [], []
        mons = self.monomials[: self.size[k]]
        for i, a in enumerate(mons):
            da = sum(a)
            for j, b in enumerate(mons):
                if da + sum(b) > k:
                    continue
                I.append(i)
                J.append(j)
                O.append(self.index[tuple(x + y for x, y in zip(a, b))])
        I, J, O = np.array(I), np.array(J), np.array(O)
        scatter = sp.csr_matrix((np.ones(len(O)), (O, np.arange(len(O)))), shape=(self.size[k], len(O)))
        hit = (I, J, scatter)
        self._pairs[k] = hit
        return hit

    def deriv_table(self, var: int, k: int):
        """Source indices and factors for d/dz_var of an order-k jet."""
        hit = self._deriv.get((var, k))
        if hit is not None:
            return hit
        src, fac = [], []
        for m in self.monomials[: self.size[k - 1]]:
            up = list(m)
            up[var] += 1
            src.append(self.index[tuple(up)])
            fac.append(float(up[var]))
        hit = (np.array(src, dtype=int), np.array(fac))
        self._deriv[(var, k)] = hit
        return hit


@lru_cache(maxsize=None)
def jet_space(nvars: int, order: int) -> JetSpace:
    return JetSpace(nvars, order)


class Jet:
    """Tensor-valued truncated Taylor series: ``c`` has shape (n_coeff, *shape)."""

    __slots__ = ("space", "order", "c")
    __array_priority__ = 100

    def __init__(self, space: JetSpace, order: int, c: np.ndarray):
        if order < 0:
            raise ValueError("jet order exhausted: not enough derivatives available")
        self.space = space
        self.order = order
        self.c = c

    # -- construction ---------------------------------------------------------
    @classmethod
    def constant(cls, space: JetSpace, order: int, value) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros((space.size[order],) + value.shape)
        c[0] = value
        return cls(space, order, c)

    @classmethod
    def coordinate(cls, space: JetSpace, order: int, var: int, value: float) -> "Jet":
        c = np.zeros(space.size[order])
        c[0] = value
        if order >= 1:
            e = [0] * space.nvars
            e[var] = 1
            c[space.index[tuple(e)]] = 1.0
        return cls(space, order, c)

    @classmethod
    def stack(cls, jets, axis=0) -> "Jet":
        jets = list(jets)
        k = min(j.order for j in jets)
        space = jets[0].space
        m = space.size[k]
        return cls(space, k, np.stack([j.c[:m] for j in jets], axis=axis + 1))

    # -- basic properties -------------------------------------------------------
    @property
    def shape(self):
        return self.c.shape[1:]

    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError("cannot raise jet order")
        if order == self.order:
            return self
        return Jet(self.space, order, self.c[: self.space.size[order]])

    def gradient(self) -> np.ndarray:
        """First partial derivatives, shape (nvars, *shape)."""
        return np.stack([self.d(a).value for a in range(self.space.nvars)])

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.space, self.order, self.c[(slice(None),) + idx])

    # -- arithmetic -------------------------------------------------------------
    def _common(self, other: "Jet"):
        k = min(self.order, other.order)
        m = self.space.size[k]
        return k, self.c[:m], other.c[:m]

    def __add__(self, other):
        if isinstance(other, Jet):
            k, a, b = self._common(other)
            return Jet(self.space, k, a + b)
        c = self.c.copy()
        c[0] = c[0] + other
        return Jet(self.space, self.order, c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, self.order, -self.c)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            return multiply(self, other)
        return Jet(self.space, self.order, self.c * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return multiply(self, other.reciprocal())
        return Jet(self.space, self.order, self.c / other)

    def d(self, var: int) -> "Jet":
        """Partial derivative with respect to coordinate ``var`` (order drops by one)."""
        if self.order == 0:
            raise ValueError("jet order exhausted: not enough derivatives available")
        src, fac = self.space.deriv_table(var, self.order)
        f = fac.reshape((-1,) + (1,) * (self.c.ndim - 1))
        return Jet(self.space, self.order - 1, self.c[src] * f)

    def T(self, *axes) -> "Jet":
        axes = tuple(a + 1 for a in axes) if axes else tuple(range(self.c.ndim - 1, 0, -1))
        return Jet(self.space, self.order, np.transpose(self.c, (0,) + axes))

    # -- nonlinear ----------------------------------------------------------------
    def inv(self) -> "Jet":
        """Matrix inverse via the Neumann series around the value."""
        a0inv = np.linalg.inv(self.value)
        base = Jet.constant(self.space, self.order, a0inv)
        nil = self - Jet.constant(self.space, self.order, self.value)
        step = -einsum("ij,jk->ik", base, nil)
        term = base
        out = base
        for _ in range(self.order):
            term = einsum("ij,jk->ik", step, term)
            out = out + term
        return out

    def reciprocal(self) -> "Jet":
        """1/f for a scalar jet."""
        a0 = float(self.value)
        return self._series([(-1.0) ** m / a0 ** (m + 1) for m in range(self.order + 1)])

    def sqrt(self) -> "Jet":
        a0 = float(self.value)
        if a0 <= 0:
            raise ValueError("sqrt of non-positive jet value")
        coeffs = []
        for m in range(self.order + 1):
            # binom(1/2, m) * a0^(1/2 - m)
            b = 1.0
            for j in range(m):
                b *= (0.5 - j) / (j + 1)
            coeffs.append(b * a0 ** (0.5 - m))
        return self._series(coeffs)

    def _series(self, coeffs) -> "Jet":
        nil = self - float(self.value)
        out = Jet.constant(self.space, self.order, coeffs[0])
        power = Jet.constant(self.space, self.order, 1.0)
        for m in range(1, self.order + 1):
            power = power * nil
            out = out + power * coeffs[m]
        return out

    def derivatives(self, flat: tuple[int, ...]) -> np.ndarray:
        """D^alpha f at the base point for a tuple of variable indices."""
        e = [0] * self.space.nvars
        for v in flat:
            e[v] += 1
        i = self.space.index[tuple(e)]
        return self.c[i] * self.space.factorial[i]


def einsum(spec: str, a: Jet, b: Jet) -> Jet:
    """Contract two tensor jets with an einsum spec over their tensor indices."""
    k = min(a.order, b.order)
    I, J, scatter = a.space.pairs(k)
    lhs, out = spec.split("->")
    sa, sb = lhs.split(",")
    prod = np.einsum(f"Z{sa},Z{sb}->Z{out}", a.c[I], b.c[J])
    flat = scatter @ prod.reshape(len(I), -1)
    return Jet(a.space, k, flat.reshape((a.space.size[k],) + prod.shape[1:]))


def multiply(a: Jet, b: Jet) -> Jet:
    """Elementwise product with numpy broadcasting over tensor shapes."""
    na, nb = len(a.shape), len(b.shape)
    sa = _LETTERS[max(nb - na, 0): max(nb - na, 0) + na] if na <= nb else _LETTERS[:na]
    sb = _LETTERS[max(na - nb, 0): max(na - nb, 0) + nb] if nb <= na else _LETTERS[:nb]
    so = _LETTERS[: max(na, nb)]
    if a.shape and b.shape and na == nb and a.shape != b.shape:
        raise ValueError("elementwise jet product needs matching or scalar shapes")
    return einsum(f"{sa},{sb}->{so}", a, b)


def seed_from_derivatives(space: JetSpace, order: int, values: np.ndarray) -> Jet:
    """Build a scalar jet from D^alpha f values listed in monomial order."""
    m = space.size[order]
    return Jet(space, order, np.asarray(values[:m], dtype=float) / space.factorial[:m])
