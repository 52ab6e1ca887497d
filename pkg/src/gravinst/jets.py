"""Truncated multivariate Taylor arithmetic.

A :class:`Jet` stores the Taylor coefficients of a (tensor-valued) smooth
function of ``nvar`` variables about a base point, up to a total degree
``order``.  Coefficients live on the last axis, ordered by total degree, so
truncating to a lower order is a prefix slice.  Every other axis is a tensor
(or batch) axis and broadcasts like numpy.

Products are exact polynomial products truncated at the smaller order, and
elementary functions are composed through their Taylor series, so derivatives
read off a jet are exact up to floating point rounding.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np


class _Tables:
    """Index tables for monomials of ``nvar`` variables up to degree ``order``."""

    def __init__(self, nvar: int, order: int):
        self.nvar = nvar
        self.order = order
        exps = []
        for d in range(order + 1):
            # graded, reverse-lexicographic within a degree
            for combo in itertools.combinations_with_replacement(range(nvar), d):
                e = [0] * nvar
                for i in combo:
                    e[i] += 1
                exps.append(tuple(e))
        self.exps = np.array(exps, dtype=np.int64).reshape(-1, nvar)
        self.index = {e: k for k, e in enumerate(exps)}
        self.degree = self.exps.sum(axis=1)
        self.n = len(exps)
        self.sizes = [int(np.sum(self.degree <= d)) for d in range(order + 1)]

        pi, pj, pt = [], [], []
        for i, ei in enumerate(exps):
            di = self.degree[i]
            for j, ej in enumerate(exps[: self.sizes[order - di]]):
                t = self.index[tuple(a + b for a, b in zip(ei, ej))]
                pi.append(i)
                pj.append(j)
                pt.append(t)
        pt = np.array(pt)
        perm = np.argsort(pt, kind="stable")
        self.pair_i = np.array(pi)[perm]
        self.pair_j = np.array(pj)[perm]
        pt = pt[perm]
        self.pair_starts = np.searchsorted(pt, np.arange(self.n))

        # d/dx_v maps degree <= order monomials onto degree <= order-1
        nlow = self.sizes[order - 1] if order > 0 else 0
        self.deriv_src = np.zeros((nvar, nlow), dtype=np.int64)
        self.deriv_fac = np.zeros((nvar, nlow))
        for v in range(nvar):
            for k in range(nlow):
                e = list(exps[k])
                e[v] += 1
                self.deriv_src[v, k] = self.index[tuple(e)]
                self.deriv_fac[v, k] = e[v]
        self.factorials = np.array(
            [np.prod([math.factorial(a) for a in e]) for e in exps], dtype=float
        )


@lru_cache(maxsize=None)
def tables(nvar: int, order: int) -> _Tables:
    return _Tables(nvar, order)


def ncoef(nvar: int, order: int) -> int:
    return math.comb(nvar + order, order)


class Jet:
    """Taylor jet of a tensor field about a point.

    ``c`` has shape ``(*shape, ncoef)``; ``c[..., 0]`` is the value.
    """

    __slots__ = ("c", "order", "nvar")
    __array_priority__ = 100

    def __init__(self, c, order: int, nvar: int = 4):
        c = np.asarray(c, dtype=float)
        n = ncoef(nvar, order)
        if c.shape[-1] != n:
            raise ValueError(f"expected {n} coefficients for order {order}, got {c.shape[-1]}")
        self.c = c
        self.order = order
        self.nvar = nvar

    # construction ------------------------------------------------------
    @classmethod
    def constant(cls, value, order: int, nvar: int = 4) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (ncoef(nvar, order),))
        c[..., 0] = value
        return cls(c, order, nvar)

    @classmethod
    def from_derivatives(cls, derivs, nvar: int = 4) -> "Jet":
        """Build a jet from ``[f, df, d2f, ...]`` where ``dkf`` carries k trailing
        derivative axes of length ``nvar``."""
        order = len(derivs) - 1
        t = tables(nvar, order)
        shape = np.shape(derivs[0])
        c = np.zeros(shape + (t.n,))
        for k, e in enumerate(t.exps):
            d = int(t.degree[k])
            idx = tuple(itertools.chain.from_iterable([v] * a for v, a in enumerate(e)))
            c[..., k] = np.asarray(derivs[d])[(Ellipsis,) + idx] / t.factorials[k]
        return cls(c, order, nvar)

    # basic properties --------------------------------------------------
    @property
    def shape(self):
        return self.c.shape[:-1]

    @property
    def value(self) -> np.ndarray:
        return self.c[..., 0]

    def __repr__(self):
        return f"Jet(shape={self.shape}, order={self.order}, nvar={self.nvar})"

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError("cannot raise the order of a jet")
        if order == self.order:
            return self
        return Jet(self.c[..., : ncoef(self.nvar, order)], order, self.nvar)

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.c[idx + (slice(None),)], self.order, self.nvar)

    def transpose(self, *axes) -> "Jet":
        nd = len(self.shape)
        return Jet(np.transpose(self.c, tuple(axes) + (nd,)), self.order, self.nvar)

    def sum(self, axis) -> "Jet":
        nd = len(self.shape)
        axis = tuple(a % nd for a in np.atleast_1d(axis))
        return Jet(self.c.sum(axis=axis), self.order, self.nvar)

    def reshape(self, *shape) -> "Jet":
        return Jet(self.c.reshape(tuple(shape) + (self.c.shape[-1],)), self.order, self.nvar)

    # derivatives -------------------------------------------------------
    def deriv(self, v: int) -> "Jet":
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        t = tables(self.nvar, self.order)
        c = self.c[..., t.deriv_src[v]] * t.deriv_fac[v]
        return Jet(c, self.order - 1, self.nvar)

    def grad(self) -> "Jet":
        """Partial derivatives, appended as a trailing tensor axis."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        t = tables(self.nvar, self.order)
        c = self.c[..., t.deriv_src] * t.deriv_fac
        # c: (*shape, nvar, nlow)
        return Jet(c, self.order - 1, self.nvar)

    def derivative(self, k: int) -> np.ndarray:
        """k-th derivative tensor at the base point, derivative axes trailing."""
        if k > self.order:
            raise ValueError("jet order too low")
        t = tables(self.nvar, self.order)
        out = np.empty(self.shape + (self.nvar,) * k)
        for idx in itertools.product(range(self.nvar), repeat=k):
            e = [0] * self.nvar
            for i in idx:
                e[i] += 1
            m = t.index[tuple(e)]
            out[(Ellipsis,) + idx] = self.c[..., m] * t.factorials[m]
        return out

    # arithmetic --------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.nvar != self.nvar:
                raise ValueError("nvar mismatch")
            order = min(self.order, other.order)
            return self.truncate(order), other.truncate(order)
        return self, Jet.constant(other, self.order, self.nvar)

    def __add__(self, other):
        a, b = self._coerce(other)
        return Jet(a.c + b.c, a.order, a.nvar)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.order, self.nvar)

    def __sub__(self, other):
        a, b = self._coerce(other)
        return Jet(a.c - b.c, a.order, a.nvar)

    def __rsub__(self, other):
        a, b = self._coerce(other)
        return Jet(b.c - a.c, a.order, a.nvar)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            return Jet(self.c * other[..., None], self.order, self.nvar)
        a, b = self._coerce(other)
        return Jet(_polymul(a.c, b.c, a.nvar, a.order), a.order, a.nvar)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            return Jet(self.c / other[..., None], self.order, self.nvar)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and 0 <= p <= 4:
            out = Jet.constant(np.ones(self.shape), self.order, self.nvar)
            for _ in range(int(p)):
                out = out * self
            return out
        return self.power(float(p))

    # elementary functions ---------------------------------------------
    def _compose(self, coeffs) -> "Jet":
        """Evaluate sum_k coeffs[k] * (self - value)^k by Horner's rule."""
        nil = Jet(self.c.copy(), self.order, self.nvar)
        nil.c[..., 0] = 0.0
        out = Jet.constant(coeffs[self.order], self.order, self.nvar)
        for k in range(self.order - 1, -1, -1):
            out = out * nil
            out.c[..., 0] += coeffs[k]
        return out

    def power(self, p: float) -> "Jet":
        a = self.value
        coeffs = []
        binom = 1.0
        for k in range(self.order + 1):
            coeffs.append(binom * a ** (p - k))
            binom *= (p - k) / (k + 1)
        return self._compose(coeffs)

    def reciprocal(self) -> "Jet":
        a = self.value
        return self._compose([(-1.0) ** k / a ** (k + 1) for k in range(self.order + 1)])

    def sqrt(self) -> "Jet":
        return self.power(0.5)

    def exp(self) -> "Jet":
        e = np.exp(self.value)
        return self._compose([e / math.factorial(k) for k in range(self.order + 1)])

    def log(self) -> "Jet":
        a = self.value
        coeffs = [np.log(a)] + [
            (-1.0) ** (k + 1) / (k * a**k) for k in range(1, self.order + 1)
        ]
        return self._compose(coeffs)

    def sin(self) -> "Jet":
        a = self.value
        return self._compose(
            [np.sin(a + k * np.pi / 2) / math.factorial(k) for k in range(self.order + 1)]
        )

    def cos(self) -> "Jet":
        a = self.value
        return self._compose(
            [np.cos(a + k * np.pi / 2) / math.factorial(k) for k in range(self.order + 1)]
        )


def _polymul(a: np.ndarray, b: np.ndarray, nvar: int, order: int) -> np.ndarray:
    t = tables(nvar, order)
    prod = np.take(a, t.pair_i, axis=-1) * np.take(b, t.pair_j, axis=-1)
    return np.add.reduceat(prod, t.pair_starts, axis=-1)


def variables(point, order: int) -> list[Jet]:
    """Coordinate functions x_i as jets about ``point`` (shape ``(..., nvar)``)."""
    point = np.asarray(point, dtype=float)
    nvar = point.shape[-1]
    t = tables(nvar, order)
    out = []
    for v in range(nvar):
        c = np.zeros(point.shape[:-1] + (t.n,))
        c[..., 0] = point[..., v]
        if order >= 1:
            e = [0] * nvar
            e[v] = 1
            c[..., t.index[tuple(e)]] = 1.0
        out.append(Jet(c, order, nvar))
    return out


def einsum(subscripts: str, a, b) -> Jet:
    """``np.einsum`` for two operands where either may be a :class:`Jet`.

    Jet operands have their coefficient axis handled implicitly, so
    subscripts are written for the tensor axes only.
    """
    ins, out = subscripts.split("->")
    sa, sb = ins.split(",")
    z = "z"
    if z in subscripts:
        raise ValueError("subscript 'z' is reserved")
    # np.take beats fancy indexing here, and einsum's path optimizer only
    # adds overhead for these tiny tensor axes
    if isinstance(a, Jet) and isinstance(b, Jet):
        a, b = a._coerce(b)
        t = tables(a.nvar, a.order)
        prod = np.einsum(f"{sa}{z},{sb}{z}->{out}{z}", np.take(a.c, t.pair_i, axis=-1),
                         np.take(b.c, t.pair_j, axis=-1))
        return Jet(np.add.reduceat(prod, t.pair_starts, axis=-1), a.order, a.nvar)
    if isinstance(a, Jet):
        return Jet(np.einsum(f"{sa}{z},{sb}->{out}{z}", a.c, np.asarray(b, dtype=float)), a.order, a.nvar)
    if isinstance(b, Jet):
        return Jet(np.einsum(f"{sa},{sb}{z}->{out}{z}", np.asarray(a, dtype=float), b.c), b.order, b.nvar)
    raise TypeError("einsum needs at least one Jet operand; use numpy.einsum")


def scale(t: Jet, s) -> Jet:
    """Multiply a tensor jet by a scalar field whose shape is the batch prefix
    of ``t`` (the scalar broadcasts over the trailing tensor axes)."""
    if not isinstance(s, Jet):
        s = np.asarray(s, dtype=float)
        return Jet(t.c * s.reshape(s.shape + (1,) * (t.c.ndim - s.ndim)), t.order, t.nvar)
    t, s = t._coerce(s)
    extra = len(t.shape) - len(s.shape)
    sc = s.c.reshape(s.shape + (1,) * extra + (s.c.shape[-1],))
    return Jet(_polymul(t.c, sc, t.nvar, t.order), t.order, t.nvar)


def stack(items, axis: int = 0) -> Jet:
    """Stack jets (or constants) along a new tensor axis."""
    jets = [x for x in items if isinstance(x, Jet)]
    if not jets:
        raise TypeError("stack needs at least one Jet")
    order = min(j.order for j in jets)
    nvar = jets[0].nvar
    shape = np.broadcast_shapes(*[np.shape(x.value if isinstance(x, Jet) else x) for x in items])
    cs = []
    for x in items:
        j = x.truncate(order) if isinstance(x, Jet) else Jet.constant(x, order, nvar)
        cs.append(np.broadcast_to(j.c, shape + (j.c.shape[-1],)))
    nd = len(shape)
    return Jet(np.stack(cs, axis=axis % (nd + 1)), order, nvar)


# math helpers accepting floats, arrays or jets ---------------------------

def sqrt(x):
    return x.sqrt() if isinstance(x, Jet) else np.sqrt(x)


def sin(x):
    return x.sin() if isinstance(x, Jet) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, Jet) else np.cos(x)


def exp(x):
    return x.exp() if isinstance(x, Jet) else np.exp(x)


def log(x):
    return x.log() if isinstance(x, Jet) else np.log(x)


def power(x, p):
    return x.power(p) if isinstance(x, Jet) else np.power(x, p)


def value(x):
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)


def matmul(a: Jet, b: Jet) -> Jet:
    return einsum("...ij,...jk->...ik", a, b)


def inv(a: Jet) -> Jet:
    """Inverse of a jet of square matrices via the nilpotent Neumann series."""
    a0inv = np.linalg.inv(a.value)
    nil = Jet(a.c.copy(), a.order, a.nvar)
    nil.c[..., 0] = 0.0
    x = -einsum("...ij,...jk->...ik", a0inv, nil)
    term = Jet.constant(a0inv, a.order, a.nvar)
    out = term
    for _ in range(a.order):
        term = matmul(x, term)
        out = out + term
    return out


def logdet(a: Jet) -> Jet:
    """log|det| of a jet of square matrices."""
    a0 = a.value
    a0inv = np.linalg.inv(a0)
    nil = Jet(a.c.copy(), a.order, a.nvar)
    nil.c[..., 0] = 0.0
    x = einsum("...ij,...jk->...ik", a0inv, nil)
    out = Jet.constant(np.linalg.slogdet(a0)[1], a.order, a.nvar)
    pw = x
    for k in range(1, a.order + 1):
        tr = Jet(np.trace(pw.c, axis1=-3, axis2=-2), a.order, a.nvar)
        out = out + tr * ((-1.0) ** (k + 1) / k)
        if k < a.order:
            pw = matmul(pw, x)
    return out
