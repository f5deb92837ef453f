"""Tensor calculus on a single coordinate chart, evaluated with jets.

Every quantity is assembled from jets of the metric components (order 2)
and of scalar fields (order 3), so derivatives of derived tensors (the
Christoffel symbols, a Hessian, ...) are available without finite
differencing.  Points may be a single ``(m,)`` vector or a batch
``(..., m)``; all results carry the same leading batch axes.

Conventions
-----------
* ``christoffel[..., k, i, j]`` is Gamma^k_ij.
* Covariant derivatives put the differentiation slot first:
  ``nabla_T[..., k, i, j] = (nabla_k T)_ij``.
* The Laplacian is ``div grad`` (so the Laplacian of x**2 on R is +2).
* Curvature is normalised so that hyperbolic space has Ric = -(n-1) g.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

from . import exprlang
from .exprlang import Expr
from .jet import Jet, align, constant, jeinsum

__all__ = [
    "DomainError",
    "NotPositiveDefinite",
    "Chart",
    "MetricField",
    "ScalarField",
    "LocalGeometry",
    "PointFrame",
    "MetricSample",
    "spd_inverse",
    "inverse_jet",
    "metric_at",
    "christoffel",
    "grad",
    "norm2",
    "hess",
    "laplacian",
    "ricci",
    "cov_deriv_sym2",
    "div_sym2",
    "div_vec",
    "rough_laplacian_grad",
    "lie_metric",
    "inner_sym2",
    "gradient_field",
    "orthonormal_frame",
]

METRIC_ORDER = 2
FIELD_ORDER = 3


class DomainError(ValueError):
    """A point lies outside (or on the boundary of) the chart domain."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = None if point is None else np.asarray(point, dtype=float)


class NotPositiveDefinite(ValueError):
    def __init__(self, point, pivot: float):
        point = np.asarray(point, dtype=float)
        super().__init__(f"metric is not positive definite at {point.tolist()} (pivot {pivot:.3g})")
        self.point = point
        self.pivot = pivot


def _as_expr(e) -> Expr:
    return exprlang.parse(e) if isinstance(e, str) else e


@dataclass(frozen=True)
class Chart:
    """Coordinate names plus a domain: an open box and ``expr > 0`` constraints."""

    coords: tuple
    lower: tuple = None
    upper: tuple = None
    constraints: tuple = ()

    def __post_init__(self):
        coords = tuple(self.coords)
        if not coords:
            raise ValueError("a chart needs at least one coordinate")
        if len(set(coords)) != len(coords):
            raise ValueError(f"duplicate coordinate names in {coords}")
        m = len(coords)
        lower = (-np.inf,) * m if self.lower is None else tuple(float(v) for v in self.lower)
        upper = (np.inf,) * m if self.upper is None else tuple(float(v) for v in self.upper)
        if len(lower) != m or len(upper) != m:
            raise ValueError("box bounds must have one entry per coordinate")
        if any(lo >= hi for lo, hi in zip(lower, upper)):
            raise ValueError(f"empty box {list(zip(lower, upper))}")
        cons = tuple(exprlang.bind(_as_expr(c), coords) for c in self.constraints)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "constraints", cons)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def env(self, points) -> dict:
        points = np.asarray(points, dtype=float)
        return {name: points[..., i] for i, name in enumerate(self.coords)}

    def contains(self, points) -> np.ndarray:
        """Strict membership (box interior and every constraint > 0)."""
        points = np.asarray(points, dtype=float)
        inside = np.all((points > np.array(self.lower)) & (points < np.array(self.upper)), axis=-1)
        env = self.env(points)
        for c in self.constraints:
            with np.errstate(all="ignore"):
                try:
                    val = np.broadcast_to(exprlang.evaluate(c, env), inside.shape)
                except (ValueError, ZeroDivisionError):
                    return np.zeros_like(inside)
            inside = inside & (val > 0)
        return inside

    def require(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.shape[-1:] != (self.dim,):
            raise ValueError(f"points must have trailing size {self.dim}, got shape {points.shape}")
        ok = self.contains(points)
        if not np.all(ok):
            bad = points[~ok] if points.ndim > 1 else points
            bad = np.reshape(bad, (-1, self.dim))[0]
            raise DomainError(f"point {bad.tolist()} is outside the chart domain", bad)
        return points

    def with_constraints(self, *constraints) -> "Chart":
        return Chart(self.coords, self.lower, self.upper, self.constraints + tuple(constraints))


class MetricField:
    """Symmetric 2-tensor field given by lower-triangular expression rows.

    ``entries[i][j]`` (``j <= i``) is the ``(i, j)`` component.  Positive
    definiteness is only checked where the inverse is needed.
    """

    def __init__(self, chart: Chart, entries: Sequence[Sequence[Union[str, Expr]]]):
        m = chart.dim
        if len(entries) != m or any(len(row) != i + 1 for i, row in enumerate(entries)):
            raise ValueError(f"metric needs lower-triangular rows of lengths 1..{m}")
        self.chart = chart
        self.entries = tuple(
            tuple(exprlang.bind(_as_expr(e), chart.coords) for e in row) for row in entries
        )

    @classmethod
    def diagonal(cls, chart: Chart, diag: Sequence) -> "MetricField":
        return cls(chart, [["0"] * i + [d] for i, d in enumerate(diag)])

    @classmethod
    def conformal(cls, chart: Chart, factor) -> "MetricField":
        return cls.diagonal(chart, [factor] * chart.dim)

    def component(self, i: int, j: int) -> Expr:
        return self.entries[max(i, j)][min(i, j)]

    def metric_jet(self, points, order: int = METRIC_ORDER) -> Jet:
        cache = {}
        m = self.chart.dim
        rows = []
        for i in range(m):
            row = []
            for j in range(m):
                e = self.component(i, j)
                if e not in cache:
                    cache[e] = exprlang.eval_jet(e, self.chart.coords, points, order)
                row.append(cache[e])
            rows.append(row)
        shape = np.broadcast_shapes(np.shape(points)[:-1], *(j.shape for j in cache.values()))
        coeffs = np.empty(shape + (m, m) + rows[0][0].coeffs.shape[-1:])
        for i in range(m):
            for j in range(m):
                coeffs[..., i, j, :] = rows[i][j].coeffs
        return Jet(coeffs, m, order)

    def values(self, points) -> np.ndarray:
        env = self.chart.env(points)
        points = np.asarray(points, dtype=float)
        m = self.chart.dim
        out = np.empty(points.shape[:-1] + (m, m))
        for i in range(m):
            for j in range(i + 1):
                out[..., i, j] = out[..., j, i] = exprlang.evaluate(self.entries[i][j], env)
        return out


class ScalarField:
    def __init__(self, chart: Chart, expr: Union[str, Expr]):
        self.chart = chart
        self.expr = exprlang.bind(_as_expr(expr), chart.coords)

    def __repr__(self) -> str:
        return f"ScalarField({exprlang.format_expr(self.expr)!r})"

    def jet(self, points, order: int = FIELD_ORDER) -> Jet:
        return exprlang.eval_jet(self.expr, self.chart.coords, points, order)

    def values(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.broadcast_to(exprlang.evaluate(self.expr, self.chart.env(points)), points.shape[:-1])


def spd_inverse(G, points=None, pivot_tol: float = 1e-12) -> np.ndarray:
    """Inverse of a batch of SPD matrices via Cholesky, with a pivot check."""
    G = np.asarray(G, dtype=float)
    m = G.shape[-1]
    flat = G.reshape(-1, m, m)
    try:
        L = np.linalg.cholesky(flat)
        pivots = np.min(np.diagonal(L, axis1=-2, axis2=-1) ** 2, axis=-1, initial=np.inf)
    except np.linalg.LinAlgError:
        L = None
        pivots = np.empty(len(flat))
        for n, A in enumerate(flat):
            try:
                pivots[n] = float(np.min(np.diag(np.linalg.cholesky(A)) ** 2))
            except np.linalg.LinAlgError:
                pivots[n] = -np.inf
    bad = np.flatnonzero(~(pivots > pivot_tol))
    if bad.size:
        n = int(bad[0])
        pt = [] if points is None else np.reshape(np.asarray(points, dtype=float), (-1, m))[n]
        raise NotPositiveDefinite(pt, pivots[n])
    Linv = np.linalg.inv(L)
    return (np.swapaxes(Linv, -1, -2) @ Linv).reshape(G.shape)


def inverse_jet(G: Jet, G0inv=None) -> Jet:
    """Jet of the matrix inverse: sum_k (-G0^-1 dG)^k G0^-1."""
    if G0inv is None:
        G0inv = spd_inverse(G.value)
    delta = G - G.value
    A = -jeinsum("...ij,...jk->...ik", G0inv, delta)
    term = constant(G0inv, G.dim, G.order)
    total = term
    for _ in range(G.order):
        term = jeinsum("...ij,...jk->...ik", A, term)
        total = total + term
    return total


def _add(*terms: Jet) -> Jet:
    terms = align(*terms)
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


class LocalGeometry:
    """Jets of a metric and its derived quantities at a batch of points.

    ``metric`` is anything with ``chart`` and ``metric_jet(points, order)``
    (a :class:`MetricField` or a deformed metric).
    """

    def __init__(self, metric, points, order: int = METRIC_ORDER, check: bool = True):
        self.metric = metric
        self.chart = metric.chart
        self.points = self.chart.require(points) if check else np.asarray(points, dtype=float)
        self.dim = self.chart.dim
        self.g = metric.metric_jet(self.points, order)

    @cached_property
    def ginv_value(self) -> np.ndarray:
        return spd_inverse(self.g.value, self.points)

    @cached_property
    def ginv(self) -> Jet:
        return inverse_jet(self.g, self.ginv_value)

    @cached_property
    def christoffel(self) -> Jet:
        dg = self.g.gradient()  # dg[a, b, c] = d_c g_ab
        lowered = 0.5 * (
            jeinsum("...jli->...lij", dg) + jeinsum("...ilj->...lij", dg) - jeinsum("...ijl->...lij", dg)
        )
        return jeinsum("...kl,...lij->...kij", self.ginv, lowered)

    @cached_property
    def ricci(self) -> Jet:
        gam = self.christoffel
        dgam = gam.gradient()  # dgam[k, i, j, l] = d_l Gamma^k_ij
        ric = _add(
            jeinsum("...kijk->...ij", dgam),
            -jeinsum("...kkji->...ij", dgam),
            jeinsum("...kkl,...lij->...ij", gam, gam),
            -jeinsum("...kil,...lkj->...ij", gam, gam),
        )
        return 0.5 * (ric + jeinsum("...ij->...ji", ric))

    @cached_property
    def ricci_asymmetry(self) -> float:
        gam = self.christoffel
        dgam = gam.gradient()
        ric = _add(
            jeinsum("...kijk->...ij", dgam),
            -jeinsum("...kkji->...ij", dgam),
            jeinsum("...kkl,...lij->...ij", gam, gam),
            -jeinsum("...kil,...lkj->...ij", gam, gam),
        ).value
        return float(np.max(np.abs(ric - np.swapaxes(ric, -1, -2)), initial=0.0))

    # -- scalar fields ------------------------------------------------------
    def scalar(self, f: ScalarField, order: int = FIELD_ORDER) -> Jet:
        return f.jet(self.points, order)

    def raise_index(self, w: Jet) -> Jet:
        return jeinsum("...ij,...j->...i", self.ginv, w)

    def lower_index(self, X: Jet) -> Jet:
        return jeinsum("...ij,...j->...i", self.g, X)

    def gradient(self, F: Jet) -> Jet:
        return self.raise_index(F.gradient())

    def hessian(self, F: Jet) -> Jet:
        dF = F.gradient()
        return _add(dF.gradient(), -jeinsum("...kij,...k->...ij", self.christoffel, dF))

    def laplacian(self, F: Jet) -> Jet:
        return jeinsum("...ij,...ij->...", self.ginv, self.hessian(F))

    # -- tensors ------------------------------------------------------------
    def cov_sym2(self, T: Jet) -> Jet:
        """(nabla_k T)_ij with the derivative slot first."""
        gam = self.christoffel
        return _add(
            jeinsum("...ijk->...kij", T.gradient()),
            -jeinsum("...lki,...lj->...kij", gam, T),
            -jeinsum("...lkj,...il->...kij", gam, T),
        )

    def div_sym2(self, T: Jet) -> Jet:
        return jeinsum("...ik,...ikj->...j", self.ginv, self.cov_sym2(T))

    def div_vec(self, X: Jet) -> Jet:
        return _add(
            jeinsum("...ii->...", X.gradient()),
            jeinsum("...iik,...k->...", self.christoffel, X),
        )

    def cov_vec(self, X: Jet) -> Jet:
        """(nabla X)^i_b = d_b X^i + Gamma^i_bc X^c."""
        return _add(X.gradient(), jeinsum("...ibc,...c->...ib", self.christoffel, X))

    def rough_laplacian(self, X: Jet) -> Jet:
        """trace_g nabla^2 X for a vector field X."""
        gam = self.christoffel
        A = self.cov_vec(X)
        second = _add(
            jeinsum("...iba->...aib", A.gradient()),
            jeinsum("...iac,...cb->...aib", gam, A),
            -jeinsum("...cab,...ic->...aib", gam, A),
        )
        return jeinsum("...ab,...aib->...i", self.ginv, second)

    def lie_derivative_metric(self, X: Jet) -> Jet:
        """(L_X g)_ij from partial derivatives only (no connection)."""
        dX = X.gradient()  # dX[k, i] = d_i X^k
        return _add(
            jeinsum("...k,...ijk->...ij", X, self.g.gradient()),
            jeinsum("...kj,...ki->...ij", self.g, dX),
            jeinsum("...ik,...kj->...ij", self.g, dX),
        )

    def inner(self, S, T):
        """<S, T> = g^ik g^jl S_ij T_kl."""
        if isinstance(S, Jet) or isinstance(T, Jet):
            raised = jeinsum("...ik,...ij->...kj", self.ginv, S)
            raised = jeinsum("...kj,...jl->...kl", raised, self.ginv)
            return jeinsum("...kl,...kl->...", raised, T)
        ginv = self.ginv_value
        return np.einsum("...ik,...jl,...ij,...kl->...", ginv, ginv, S, T)


def _sym2_jet(T, geo: LocalGeometry) -> Jet:
    if callable(T) and not hasattr(T, "metric_jet"):
        return T(geo)
    return T.metric_jet(geo.points, METRIC_ORDER)


def gradient_field(f: ScalarField) -> Callable[[LocalGeometry], Jet]:
    """Vector field grad f as a jet-valued callable."""

    def X(geo: LocalGeometry) -> Jet:
        return geo.gradient(geo.scalar(f))

    return X


def _vec_jet(X, geo: LocalGeometry) -> Jet:
    if callable(X):
        return X(geo)
    comps = [exprlang.eval_jet(_as_expr(c), geo.chart.coords, geo.points, FIELD_ORDER) for c in X]
    from .jet import stack

    return stack(comps, axis=-1)


@dataclass
class MetricSample:
    value: np.ndarray
    inverse: np.ndarray
    jet: Jet = field(repr=False)


def metric_at(g, p) -> MetricSample:
    geo = LocalGeometry(g, p)
    return MetricSample(geo.g.value, geo.ginv_value, geo.g)


def christoffel(g, p, with_derivative: bool = False):
    geo = LocalGeometry(g, p)
    gam = geo.christoffel
    if with_derivative:
        return gam.value, gam.gradient().value
    return gam.value


def grad(f: ScalarField, g, p) -> np.ndarray:
    geo = LocalGeometry(g, p)
    return geo.gradient(geo.scalar(f, 1)).value


def norm2(f: ScalarField, g, p) -> np.ndarray:
    geo = LocalGeometry(g, p)
    F = geo.scalar(f, 1)
    return jeinsum("...i,...i->...", F.gradient(), geo.gradient(F)).value


def hess(f: ScalarField, g, p) -> np.ndarray:
    geo = LocalGeometry(g, p)
    return geo.hessian(geo.scalar(f, 2)).value


def laplacian(f: ScalarField, g, p) -> np.ndarray:
    geo = LocalGeometry(g, p)
    return geo.laplacian(geo.scalar(f, 2)).value


def ricci(g, p, check_symmetry: bool = True) -> np.ndarray:
    geo = LocalGeometry(g, p)
    if check_symmetry:
        scale = max(1.0, float(np.max(np.abs(geo.ricci.value), initial=0.0)))
        if geo.ricci_asymmetry > 1e-9 * scale:
            raise ArithmeticError(f"Ricci tensor asymmetric by {geo.ricci_asymmetry:.3g}")
    return geo.ricci.value


def cov_deriv_sym2(T, g, p) -> np.ndarray:
    """Covariant derivative of a symmetric 2-tensor field.

    ``T`` is a :class:`MetricField` (any expression-valued symmetric
    tensor) or a callable ``LocalGeometry -> Jet``.
    """
    geo = LocalGeometry(g, p)
    return geo.cov_sym2(_sym2_jet(T, geo)).value


def div_sym2(T, g, p) -> np.ndarray:
    geo = LocalGeometry(g, p)
    return geo.div_sym2(_sym2_jet(T, geo)).value


def div_vec(X, g, p) -> np.ndarray:
    """Divergence of a vector field (expression components or jet callable)."""
    geo = LocalGeometry(g, p)
    return geo.div_vec(_vec_jet(X, geo)).value


def rough_laplacian_grad(f: ScalarField, g, p) -> np.ndarray:
    geo = LocalGeometry(g, p)
    return geo.rough_laplacian(geo.gradient(geo.scalar(f))).value


def lie_metric(X, g, p) -> np.ndarray:
    geo = LocalGeometry(g, p)
    return geo.lie_derivative_metric(_vec_jet(X, geo)).value


def inner_sym2(S, T, g, p) -> np.ndarray:
    """<S, T> = g^ik g^jl S_ij T_kl for pointwise values or fields."""
    geo = LocalGeometry(g, p)
    if hasattr(S, "metric_jet") or callable(S):
        S = _sym2_jet(S, geo).value
    if hasattr(T, "metric_jet") or callable(T):
        T = _sym2_jet(T, geo).value
    return geo.inner(np.asarray(S, dtype=float), np.asarray(T, dtype=float))


@dataclass
class PointFrame:
    """g-orthonormal frame at one point; ``vectors[:, a]`` is E_a."""

    vectors: np.ndarray
    adapted: bool = False

    def __getitem__(self, a: int) -> np.ndarray:
        return self.vectors[:, a]


def orthonormal_frame(g, p, first=None) -> PointFrame:
    """Gram-Schmidt over the coordinate basis, optionally seeded by ``first``."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError("orthonormal_frame works at a single point")
    G = metric_at(g, p).value
    m = len(p)
    candidates = list(np.eye(m))
    if first is not None:
        first = np.asarray(first, dtype=float)
        if first @ G @ first <= 1e-20:
            raise ValueError("seed vector has (near-)zero length; adapted frame undefined")
        candidates.insert(0, first)
    basis = []
    for v in candidates:
        w = v.copy()
        for _ in range(2):  # re-orthogonalise once for stability
            for e in basis:
                w = w - (e @ G @ w) * e
        n2 = w @ G @ w
        if n2 > 1e-20 * max(1.0, v @ G @ v):
            basis.append(w / np.sqrt(n2))
        if len(basis) == m:
            break
    return PointFrame(np.column_stack(basis), adapted=first is not None)
