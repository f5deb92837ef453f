"""The deformed metric g~ = g - eps^2 df (x) df and its identity maps.

Two identity maps are studied: ``c`` is (M, g) -> (M, g~) (codomain
deformed) and ``d`` is (M, g~) -> (M, g) (domain deformed).  Closed forms
for both tension fields are computed from base-metric ingredients (grad f,
s = |grad f|^2, Hess f, Laplacian of f); :func:`tension_identity` computes
the same tensions from the two Levi-Civita connections directly.

With ``eps < 1`` every closed form is evaluated for the scaled function
eps*f, except :func:`residual_d`, which returns the eps-normalised residual
``eps^2 Hess(grad f, grad f) + (1 - eps^2 s) Lap f``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .geometry import (
    FIELD_ORDER,
    LocalGeometry,
    MetricField,
    ScalarField,
)
from .jet import Jet, jeinsum

__all__ = [
    "ValidityViolation",
    "DeformedMetric",
    "Ingredients",
    "deformed_metric_at",
    "deformed_christoffel",
    "tension_c",
    "tension_d",
    "residual_d",
    "tension_identity",
    "deformed_laplacian",
    "Predicates",
    "predicates",
]

VALIDITY_MARGIN = 1e-12


class ValidityViolation(ValueError):
    """eps^2 |grad f|^2 >= 1 at ``point``: g~ is not Riemannian there."""

    def __init__(self, point, s: float, eps: float = 1.0):
        self.point = np.asarray(point, dtype=float)
        self.s = float(s)
        self.eps = float(eps)
        super().__init__(
            f"|grad f|^2 = {self.s:.17g} violates eps^2 |grad f|^2 < 1 (eps={self.eps:g}) "
            f"at point {self.point.tolist()}"
        )


class DeformedMetric:
    """The metric ``base - eps^2 df (x) df`` on the chart of ``base``."""

    def __init__(self, base: MetricField, f: ScalarField, eps: float = 1.0):
        if not 0.0 < eps <= 1.0:
            raise ValueError(f"eps must lie in (0, 1], got {eps}")
        if tuple(f.chart.coords) != tuple(base.chart.coords):
            raise ValueError("f and the base metric must live on the same chart")
        self.base = base
        self.f = f
        self.eps = float(eps)
        extra = tuple(c for c in f.chart.constraints if c not in base.chart.constraints)
        self.chart = base.chart.with_constraints(*extra) if extra else base.chart

    def __repr__(self) -> str:
        return f"DeformedMetric(f={self.f!r}, eps={self.eps:g})"

    def validity(self, points) -> np.ndarray:
        """s = g(grad f, grad f) at ``points`` (unscaled by eps)."""
        geo = LocalGeometry(self.base, points, order=0, check=False)
        df = self.f.jet(geo.points, 1).gradient().value
        return np.einsum("...i,...ij,...j->...", df, geo.ginv_value, df)

    def check_validity(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        s = self.validity(points)
        bad = self.eps**2 * s >= 1.0 - VALIDITY_MARGIN
        if np.any(bad):
            n = int(np.flatnonzero(np.ravel(bad))[0])
            raise ValidityViolation(np.reshape(points, (-1, points.shape[-1]))[n], np.ravel(s)[n], self.eps)
        return s

    def metric_jet(self, points, order: int = 2) -> Jet:
        self.check_validity(points)
        g = self.base.metric_jet(points, order)
        df = self.f.jet(points, order + 1).gradient()
        outer = jeinsum("...i,...j->...ij", df, df)
        return g - self.eps**2 * outer


@dataclass
class Ingredients:
    """Base-metric jets of the (eps-scaled) field at a batch of points."""

    geo: LocalGeometry
    F: Jet  # eps * f, order 3
    eps: float
    dF: Jet = field(init=False)
    grad: Jet = field(init=False)
    s: Jet = field(init=False)
    hess: Jet = field(init=False)
    lap: Jet = field(init=False)

    def __post_init__(self):
        self.dF = self.F.gradient()
        self.grad = self.geo.raise_index(self.dF)
        self.s = jeinsum("...i,...i->...", self.dF, self.grad)
        self.hess = self.geo.hessian(self.F)
        self.lap = jeinsum("...ij,...ij->...", self.geo.ginv, self.hess)

    @cached_property
    def hess_gradf(self) -> np.ndarray:
        """Hess(grad f, grad f) (values)."""
        g = self.grad.value
        return np.einsum("...i,...ij,...j->...", g, self.hess.value, g)

    @classmethod
    def build(cls, D: DeformedMetric, points) -> "Ingredients":
        geo = LocalGeometry(D.base, D.chart.require(points))
        D.check_validity(geo.points)
        return cls(geo, geo.scalar(D.f, FIELD_ORDER) * D.eps, D.eps)


def deformed_metric_at(D: DeformedMetric, p):
    """g~ at ``p`` with its inverse and jets (order 2)."""
    geo = LocalGeometry(D, p)
    return geo.g.value, geo.ginv_value, geo.g


def deformed_christoffel(D: DeformedMetric, p, method: str = "via_eq21") -> np.ndarray:
    """Christoffel symbols of g~, ``[..., k, i, j]``.

    ``via_eq21`` corrects the base connection by
    ``-Hess_ij (grad f)^k / (1 - s)``; ``direct`` differentiates the
    components of g~.
    """
    if method == "direct":
        return LocalGeometry(D, p).christoffel.value
    if method != "via_eq21":
        raise ValueError(f"unknown method {method!r}")
    ing = Ingredients.build(D, p)
    gam = ing.geo.christoffel.value
    corr = np.einsum("...ij,...k->...kij", ing.hess.value, ing.grad.value)
    return gam - corr / (1.0 - ing.s.value)[..., None, None, None]


def tension_c(D: DeformedMetric, p) -> np.ndarray:
    """Tension of (M, g) -> (M, g~): -(Lap f / (1 - s)) grad f."""
    ing = Ingredients.build(D, p)
    return -(ing.lap.value / (1.0 - ing.s.value))[..., None] * ing.grad.value


def tension_d(D: DeformedMetric, p) -> np.ndarray:
    """Tension of (M, g~) -> (M, g)."""
    ing = Ingredients.build(D, p)
    s = ing.s.value
    coef = ing.hess_gradf / (1.0 - s) ** 2 + ing.lap.value / (1.0 - s)
    return coef[..., None] * ing.grad.value


def residual_d(D: DeformedMetric, p) -> np.ndarray:
    """Hess(grad f, grad f) + (1 - s) Lap f, eps-normalised (see module doc)."""
    ing = Ingredients.build(D, p)
    return (ing.hess_gradf + (1.0 - ing.s.value) * ing.lap.value) / D.eps


def tension_identity(g_dom, g_cod, p) -> np.ndarray:
    """Tension of id: (M, g_dom) -> (M, g_cod) on a shared chart.

    tau^k = g_dom^ij (Gamma_cod^k_ij - Gamma_dom^k_ij).
    """
    dom = LocalGeometry(g_dom, p, order=1)
    cod = LocalGeometry(g_cod, dom.points, order=1, check=False)
    diff = cod.christoffel.value - dom.christoffel.value
    return np.einsum("...ij,...kij->...k", dom.ginv_value, diff)


def deformed_laplacian(D: DeformedMetric, p, u: Optional[ScalarField] = None, method: Optional[str] = None) -> np.ndarray:
    """Laplace-Beltrami operator of g~ applied to ``u`` (default: f).

    ``closed`` (only for u = f) uses the base-metric closed form;
    ``general`` assembles g~^ij (d_i d_j u - Gamma~^k_ij d_k u) from the
    directly computed connection of g~.
    """
    if method is None:
        method = "closed" if u is None else "general"
    if method == "closed":
        if u is not None and u is not D.f:
            raise ValueError("the closed form only applies to u = f")
        ing = Ingredients.build(D, p)
        s = ing.s.value
        return (ing.hess_gradf / (1.0 - s) ** 2 + ing.lap.value / (1.0 - s)) / D.eps
    if method != "general":
        raise ValueError(f"unknown method {method!r}")
    u = D.f if u is None else u
    geo = LocalGeometry(D, p)
    return geo.laplacian(geo.scalar(u, 2)).value


@dataclass
class Predicates:
    harmonic_c: bool
    harmonic_d: bool
    conformal_lambda: Optional[float]
    eq25_residual: Optional[float]
    max_laplacian: float
    max_residual_d: float
    conformal_defect: float
    worst_point_c: np.ndarray
    worst_point_d: np.ndarray


def predicates(D: DeformedMetric, sample, tol: float = 1e-8) -> Predicates:
    """Harmonicity of both identity maps over a point sample.

    The conformal diagnostics test Hess f = lambda g with lambda = Lap f / m;
    when that holds (max defect <= tol) the reported ``eq25_residual`` is
    the largest |lambda (m + (1 - m) s)|.
    """
    sample = np.atleast_2d(np.asarray(sample, dtype=float))
    if sample.size == 0:
        raise ValueError("empty sample")
    ing = Ingredients.build(D, sample)
    e = D.eps
    s_eff = ing.s.value
    lap = ing.lap.value / e
    hess = ing.hess.value / e
    res = (ing.hess_gradf + (1.0 - s_eff) * ing.lap.value) / e
    m = D.chart.dim
    lam = lap / m
    defect = np.max(np.abs(hess - lam[:, None, None] * ing.geo.g.value), axis=(1, 2))
    conformal = bool(np.max(defect) <= tol)
    ic, idd = int(np.argmax(np.abs(lap))), int(np.argmax(np.abs(res)))
    eq25 = lam * (m + (1 - m) * s_eff)
    return Predicates(
        harmonic_c=bool(np.abs(lap[ic]) <= tol),
        harmonic_d=bool(np.abs(res[idd]) <= tol),
        conformal_lambda=float(lam[np.argmax(np.abs(lam))]) if conformal else None,
        eq25_residual=float(eq25[np.argmax(np.abs(eq25))]) if conformal else None,
        max_laplacian=float(np.abs(lap[ic])),
        max_residual_d=float(np.abs(res[idd])),
        conformal_defect=float(np.max(defect)),
        worst_point_c=sample[ic],
        worst_point_d=sample[idd],
    )
