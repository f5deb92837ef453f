"""Truncated multivariate Taylor jets (forward-mode derivatives to order 3).

A :class:`Jet` stores, for every point of an arbitrary batch shape, the value
and all partial derivatives of a function up to a fixed total order.  The
last axis of ``Jet.coeffs`` runs over multi-indices of total degree
``<= order``, grouped by degree and, inside a degree, listed as
non-decreasing index tuples (``(0,0), (0,1), (1,1)`` for ``dim=2``).  The
stored number for a multi-index is the partial derivative itself, e.g. the
``(0,0)`` slot of ``x**2`` is 2, not the Taylor coefficient 1.

Batch axes broadcast like numpy arrays, so a whole metric tensor (or a
tensor at many points) is a single jet.
"""
from __future__ import annotations

import itertools
import math
import string
from functools import lru_cache

import numpy as np

MAX_ORDER = 3

__all__ = [
    "Jet",
    "JetError",
    "JetDomainError",
    "seed_variable",
    "constant",
    "arith",
    "apply_univariate",
    "jeinsum",
    "stack",
    "align",
    "n_coeffs",
]


class JetError(ValueError):
    """Shape, order or dimension mismatch between jets."""


class JetDomainError(ValueError):
    """A univariate function was applied outside its smooth domain."""

    def __init__(self, fn: str, value: float):
        super().__init__(f"{fn} is not smooth at value {value!r}")
        self.fn = fn
        self.value = value


def n_coeffs(dim: int, order: int) -> int:
    return math.comb(dim + order, order)


class _Tables:
    """Index bookkeeping for one (dim, order) pair."""

    def __init__(self, dim: int, order: int):
        self.dim = dim
        self.order = order
        self.multi = [
            combo
            for k in range(order + 1)
            for combo in itertools.combinations_with_replacement(range(dim), k)
        ]
        self.pos = {mi: n for n, mi in enumerate(self.multi)}
        self.size = len(self.multi)
        self.degree = np.array([len(mi) for mi in self.multi])
        exps = np.zeros((self.size, dim), dtype=int)
        for n, mi in enumerate(self.multi):
            for i in mi:
                exps[n, i] += 1
        self.exps = exps
        self.factorial = np.array(
            [math.prod(math.factorial(e) for e in row) for row in exps], dtype=float
        )
        by_exp = {tuple(row): n for n, row in enumerate(exps)}

        # Leibniz rule: d^g(ab) = sum_{b<=g} C(g,b) d^b a d^(g-b) b
        out, ia, ib, coef = [], [], [], []
        for g in range(self.size):
            for b in range(self.size):
                if np.all(exps[b] <= exps[g]):
                    rest = by_exp[tuple(exps[g] - exps[b])]
                    out.append(g)
                    ia.append(b)
                    ib.append(rest)
                    coef.append(math.prod(math.comb(int(x), int(y)) for x, y in zip(exps[g], exps[b])))
        self.mul_a = np.array(ia)
        self.mul_b = np.array(ib)
        self.mul_coef = np.array(coef, dtype=float)
        out = np.array(out)
        self.mul_starts = np.flatnonzero(np.r_[True, out[1:] != out[:-1]])

        if order > 0:
            low = _tables(dim, order - 1)
            self.shift = np.array(
                [[self.pos[tuple(sorted(mi + (l,)))] for mi in low.multi] for l in range(dim)]
            )


@lru_cache(maxsize=None)
def _tables(dim: int, order: int) -> _Tables:
    return _Tables(dim, order)


class Jet:
    """Value and partial derivatives up to ``order`` in ``dim`` variables."""

    __slots__ = ("coeffs", "dim", "order")
    __array_ufunc__ = None  # make ndarray (op) Jet defer to Jet

    def __init__(self, coeffs, dim: int, order: int):
        if not 0 <= order <= MAX_ORDER:
            raise JetError(f"order must be in 0..{MAX_ORDER}, got {order}")
        if dim < 1:
            raise JetError(f"dim must be >= 1, got {dim}")
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim == 0 or coeffs.shape[-1] != n_coeffs(dim, order):
            raise JetError(
                f"coefficient axis has length {coeffs.shape[-1:] or 0}, "
                f"expected {n_coeffs(dim, order)} for dim={dim}, order={order}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise FloatingPointError("non-finite jet coefficient")
        self.coeffs = coeffs
        self.dim = dim
        self.order = order

    # -- structure ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-1]

    @property
    def ndim(self) -> int:
        return self.coeffs.ndim - 1

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[..., 0]

    @property
    def multi_indices(self) -> list[tuple[int, ...]]:
        return _tables(self.dim, self.order).multi

    def _like(self, coeffs, order=None) -> Jet:
        return Jet(coeffs, self.dim, self.order if order is None else order)

    def __repr__(self) -> str:
        return f"Jet(dim={self.dim}, order={self.order}, shape={self.shape})"

    def __getitem__(self, key) -> Jet:
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis for k in key):
            raise IndexError("Ellipsis indexing is not supported on jets")
        return self._like(self.coeffs[key + (Ellipsis,)])

    def derivative(self, *index: int) -> np.ndarray:
        """Value of the partial derivative along ``index`` (order-free)."""
        mi = tuple(sorted(index))
        if len(mi) > self.order:
            raise JetError(f"derivative of degree {len(mi)} exceeds jet order {self.order}")
        if any(not 0 <= i < self.dim for i in mi):
            raise IndexError(f"coordinate index out of range for dim={self.dim}")
        return self.coeffs[..., _tables(self.dim, self.order).pos[mi]]

    def derivatives(self, k: int) -> np.ndarray:
        """Dense, fully symmetric array of all k-th partial derivatives."""
        if k > self.order:
            raise JetError(f"degree {k} exceeds jet order {self.order}")
        t = _tables(self.dim, self.order)
        out = np.empty(self.shape + (self.dim,) * k)
        for idx in itertools.product(range(self.dim), repeat=k):
            out[(Ellipsis,) + idx] = self.coeffs[..., t.pos[tuple(sorted(idx))]]
        return out

    def taylor_coefficients(self) -> np.ndarray:
        """Packed coefficients divided by the multi-index factorial."""
        return self.coeffs / _tables(self.dim, self.order).factorial

    def truncate(self, order: int) -> Jet:
        if order > self.order:
            raise JetError(f"cannot raise jet order from {self.order} to {order}")
        return self._like(self.coeffs[..., : n_coeffs(self.dim, order)], order)

    def gradient(self) -> Jet:
        """Jet of the partial derivatives, one order lower, new last batch axis."""
        if self.order == 0:
            raise JetError("cannot differentiate an order-0 jet")
        shift = _tables(self.dim, self.order).shift
        return Jet(self.coeffs[..., shift], self.dim, self.order - 1)

    def partial(self, i: int) -> Jet:
        if not 0 <= i < self.dim:
            raise IndexError(f"coordinate index {i} out of range for dim={self.dim}")
        if self.order == 0:
            raise JetError("cannot differentiate an order-0 jet")
        shift = _tables(self.dim, self.order).shift[i]
        return Jet(self.coeffs[..., shift], self.dim, self.order - 1)

    def sum(self, axis=None) -> Jet:
        if axis is None:
            axis = tuple(range(self.ndim))
        axes = np.atleast_1d(axis)
        axes = tuple(int(a) % self.ndim for a in axes)
        return self._like(self.coeffs.sum(axis=axes))

    def is_close(self, other: Jet, rtol=1e-12, atol=0.0) -> bool:
        return (
            self.dim == other.dim
            and self.order == other.order
            and np.allclose(self.coeffs, other.coeffs, rtol=rtol, atol=atol)
        )

    # -- arithmetic --------------------------------------------------------
    def _check(self, other: Jet) -> None:
        if self.dim != other.dim:
            raise JetError(f"dimension mismatch: {self.dim} vs {other.dim}")
        if self.order != other.order:
            raise JetError(f"order mismatch: {self.order} vs {other.order}")

    def _shift_value(self, c, sign=1.0) -> Jet:
        c = np.asarray(c, dtype=float)
        coeffs = np.array(np.broadcast_to(self.coeffs, np.broadcast_shapes(self.shape, c.shape) + self.coeffs.shape[-1:]))
        coeffs = coeffs * sign
        coeffs[..., 0] += c
        return self._like(coeffs)

    def __neg__(self) -> Jet:
        return self._like(-self.coeffs)

    def __pos__(self) -> Jet:
        return self

    def __add__(self, other) -> Jet:
        if isinstance(other, Jet):
            self._check(other)
            return self._like(self.coeffs + other.coeffs)
        return self._shift_value(other)

    __radd__ = __add__

    def __sub__(self, other) -> Jet:
        if isinstance(other, Jet):
            self._check(other)
            return self._like(self.coeffs - other.coeffs)
        return self._shift_value(-np.asarray(other, dtype=float))

    def __rsub__(self, other) -> Jet:
        return self._shift_value(other, sign=-1.0)

    def __mul__(self, other) -> Jet:
        if isinstance(other, Jet):
            self._check(other)
            t = _tables(self.dim, self.order)
            prod = self.coeffs[..., t.mul_a] * other.coeffs[..., t.mul_b] * t.mul_coef
            return self._like(np.add.reduceat(prod, t.mul_starts, axis=-1))
        return self._like(self.coeffs * np.asarray(other, dtype=float)[..., None])

    __rmul__ = __mul__

    def reciprocal(self) -> Jet:
        v = self.value
        if np.any(np.abs(v) <= 1e-300):
            raise ZeroDivisionError("division by a jet with (near-)zero value")
        inv = 1.0 / v
        derivs = [inv]
        for k in range(1, self.order + 1):
            derivs.append(-k * derivs[-1] * inv)
        return _compose(self, derivs)

    def __truediv__(self, other) -> Jet:
        if isinstance(other, Jet):
            self._check(other)
            return self * other.reciprocal()
        other = np.asarray(other, dtype=float)
        if np.any(np.abs(other) <= 1e-300):
            raise ZeroDivisionError("division by (near-)zero")
        return self._like(self.coeffs / other[..., None])

    def __rtruediv__(self, other) -> Jet:
        return self.reciprocal() * other

    def __pow__(self, exponent) -> Jet:
        return apply_univariate(self, "pow", exponent)


def _compose(a: Jet, derivs) -> Jet:
    """fn(a) from the values fn^(k)(a0), k = 0..order."""
    delta = a._like(np.concatenate([np.zeros(a.coeffs.shape[:-1] + (1,)), a.coeffs[..., 1:]], axis=-1))
    n = a.coeffs.shape[-1]
    out = np.zeros(np.broadcast_shapes(a.shape, np.shape(derivs[0])) + (n,))
    out[..., 0] = derivs[0]
    power = None
    for k in range(1, a.order + 1):
        power = delta if power is None else power * delta
        out = out + (np.asarray(derivs[k]) / math.factorial(k))[..., None] * power.coeffs
    return a._like(out)


def _univariate_derivs(fn: str, x: np.ndarray, order: int, c=None) -> list:
    if fn == "exp":
        e = np.exp(x)
        return [e] * (order + 1)
    if fn == "sin":
        s, co = np.sin(x), np.cos(x)
        return [s, co, -s, -co][: order + 1]
    if fn == "cos":
        s, co = np.sin(x), np.cos(x)
        return [co, -s, -co, s][: order + 1]
    if fn == "tan":
        co = np.cos(x)
        if np.any(np.abs(co) <= 1e-300):
            raise JetDomainError("tan", float(np.ravel(x)[np.argmin(np.abs(np.ravel(co)))]))
        t = np.tan(x)
        u = 1.0 + t * t
        return [t, u, 2.0 * t * u, 2.0 * u * (1.0 + 3.0 * t * t)][: order + 1]
    if fn == "log":
        if np.any(x <= 0):
            raise JetDomainError("log", float(np.ravel(x)[np.argmin(np.ravel(x))]))
        inv = 1.0 / x
        return [np.log(x), inv, -inv * inv, 2.0 * inv**3][: order + 1]
    if fn == "sqrt":
        if np.any(x <= 0):
            raise JetDomainError("sqrt", float(np.ravel(x)[np.argmin(np.ravel(x))]))
        r = np.sqrt(x)
        return [r, 0.5 / r, -0.25 / (r * x), 0.375 / (r * x * x)][: order + 1]
    if fn == "pow":
        if np.any(x <= 0):
            raise JetDomainError(f"pow(., {c!r})", float(np.ravel(x)[np.argmin(np.ravel(x))]))
        out, fall = [], 1.0
        for k in range(order + 1):
            out.append(fall * x ** (c - k))
            fall *= c - k
        return out
    raise ValueError(f"unknown univariate function {fn!r}")


UNIVARIATE = ("sin", "cos", "tan", "exp", "log", "sqrt", "pow")


def apply_univariate(a: Jet, fn: str, exponent=None) -> Jet:
    """Compose a smooth scalar function with a jet.

    ``fn`` is one of ``sin, cos, tan, exp, log, sqrt, pow``; ``pow`` needs a
    constant ``exponent``.  Integer exponents are computed by repeated
    multiplication and accept any base (a negative power needs a nonzero
    base); other exponents need a positive base.
    """
    if fn == "pow":
        if exponent is None:
            raise ValueError("pow needs a constant exponent")
        c = float(exponent)
        if c.is_integer() and abs(c) <= 64:
            k = int(c)
            result = a._like(np.broadcast_to(np.eye(1, a.coeffs.shape[-1])[0], a.coeffs.shape))
            base = a if k >= 0 else a.reciprocal()
            for _ in range(abs(k)):
                result = result * base
            return result
        return _compose(a, _univariate_derivs("pow", a.value, a.order, c))
    return _compose(a, _univariate_derivs(fn, a.value, a.order))


def seed_variable(i: int, value, dim: int, order: int) -> Jet:
    """Jet of the coordinate function x_i at ``value`` (scalar or batch)."""
    if not 0 <= i < dim:
        raise IndexError(f"coordinate index {i} out of range for dim={dim}")
    value = np.asarray(value, dtype=float)
    coeffs = np.zeros(value.shape + (n_coeffs(dim, order),))
    coeffs[..., 0] = value
    if order >= 1:
        coeffs[..., 1 + i] = 1.0
    return Jet(coeffs, dim, order)


def constant(value, dim: int, order: int) -> Jet:
    value = np.asarray(value, dtype=float)
    coeffs = np.zeros(value.shape + (n_coeffs(dim, order),))
    coeffs[..., 0] = value
    return Jet(coeffs, dim, order)


def arith(a: Jet, b: Jet, op: str) -> Jet:
    try:
        fn = {"add": Jet.__add__, "sub": Jet.__sub__, "mul": Jet.__mul__, "div": Jet.__truediv__}[op]
    except KeyError:
        raise ValueError(f"unknown operation {op!r}") from None
    return fn(a, b)


def align(*jets: Jet) -> list[Jet]:
    """Truncate jets to their common (lowest) order."""
    order = min(j.order for j in jets)
    return [j if j.order == order else j.truncate(order) for j in jets]


def stack(jets, axis: int = 0) -> Jet:
    jets = align(*jets)
    ndim = jets[0].ndim
    ax = axis if axis >= 0 else axis + ndim + 1
    return jets[0]._like(np.stack([j.coeffs for j in jets], axis=ax))


def jeinsum(subscripts: str, *operands):
    """``np.einsum`` over the batch axes of jets.

    At most two operands may be jets; the rest are plain arrays.  Jet
    operands are truncated to their common order first.  Subscripts refer to
    batch axes only (``...`` is allowed).
    """
    inputs, output = subscripts.replace(" ", "").split("->")
    terms = inputs.split(",")
    if len(terms) != len(operands):
        raise ValueError("number of subscripts does not match number of operands")
    jet_pos = [n for n, op in enumerate(operands) if isinstance(op, Jet)]
    if not jet_pos:
        return np.einsum(subscripts, *operands)
    free = next(ch for ch in string.ascii_letters if ch not in subscripts)
    args = list(operands)
    if len(jet_pos) == 1:
        j = operands[jet_pos[0]]
        args[jet_pos[0]] = j.coeffs
        terms[jet_pos[0]] += free
        spec = ",".join(terms) + "->" + output + free
        return j._like(np.einsum(spec, *args))
    if len(jet_pos) > 2:
        raise ValueError("jeinsum supports at most two jet operands")
    ja, jb = align(operands[jet_pos[0]], operands[jet_pos[1]])
    if ja.dim != jb.dim:
        raise JetError(f"dimension mismatch: {ja.dim} vs {jb.dim}")
    t = _tables(ja.dim, ja.order)
    args[jet_pos[0]] = ja.coeffs[..., t.mul_a] * t.mul_coef
    args[jet_pos[1]] = jb.coeffs[..., t.mul_b]
    terms[jet_pos[0]] += free
    terms[jet_pos[1]] += free
    spec = ",".join(terms) + "->" + output + free
    prod = np.einsum(spec, *args)
    return ja._like(np.add.reduceat(prod, t.mul_starts, axis=-1))
