"""The symmetric tensor chi = s Hess f + (Lap f)(g - df (x) df).

``s = |grad f|^2``.  All musical isomorphisms and operators here (grad,
div, Ric, Lap) refer to the base metric g.  :class:`ChiContext` caches the
jets needed at a batch of points; every public function accepts either a
context or a ``(DeformedMetric, points)`` pair.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np

from .deform import DeformedMetric
from .geometry import FIELD_ORDER, LocalGeometry, _add
from .jet import Jet, jeinsum

__all__ = [
    "IdentityError",
    "ChiContext",
    "chi_at",
    "trace_chi",
    "chi_gradf",
    "div_chi",
    "div_chi_gradf",
    "bochner_residual",
    "lie_identity_check",
    "conformal_closed_form",
]

SELF_CHECK_TOL = 1e-10


class IdentityError(ArithmeticError):
    """An identity that holds by construction failed numerically."""


def _assert_close(a, b, what: str, tol: float = SELF_CHECK_TOL):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)))
    err = float(np.max(np.abs(a - b), initial=0.0))
    if err > tol * scale:
        raise IdentityError(f"{what}: discrepancy {err:.3g} exceeds {tol:g} (scale {scale:.3g})")


class ChiContext:
    """Pointwise bundle for chi and its derivatives at ``points``.

    Jet orders: g to 2, f to 3, so chi itself is known to order 1 and its
    covariant divergence to order 0.
    """

    def __init__(self, D: DeformedMetric, points, check_validity: bool = True):
        if D.eps != 1.0:
            raise ValueError("chi is defined for the undeformed scale eps = 1")
        self.D = D
        self.geo = LocalGeometry(D.base, D.chart.require(points))
        self.points = self.geo.points
        if check_validity:
            D.check_validity(self.points)
        self.m = self.geo.dim
        F = self.geo.scalar(D.f, FIELD_ORDER)
        self.dF = F.gradient()  # order 2
        self.grad_jet = self.geo.raise_index(self.dF)  # order 2
        self.s_jet = jeinsum("...i,...i->...", self.dF, self.grad_jet)  # order 2
        self.hess_jet = self.geo.hessian(F)  # order 1
        self.lap_jet = jeinsum("...ij,...ij->...", self.geo.ginv, self.hess_jet)  # order 1

    # -- jet-level chi ------------------------------------------------------
    @cached_property
    def chi_jet(self) -> Jet:
        g = self.geo.g.truncate(1)
        dfdf = jeinsum("...i,...j->...ij", self.dF, self.dF)
        s = self.s_jet.truncate(1)
        return _add(
            jeinsum("...,...ij->...ij", s, self.hess_jet),
            jeinsum("...,...ij->...ij", self.lap_jet, _add(g, -dfdf)),
        )

    # -- pointwise values -----------------------------------------------------
    @cached_property
    def g(self):
        return self.geo.g.value

    @cached_property
    def ginv(self):
        return self.geo.ginv_value

    @cached_property
    def df(self):
        return self.dF.value

    @cached_property
    def grad(self):
        return self.grad_jet.value

    @cached_property
    def s(self):
        return self.s_jet.value

    @cached_property
    def hess(self):
        return self.hess_jet.value

    @cached_property
    def lap(self):
        return self.lap_jet.value

    @cached_property
    def chi(self):
        return self.chi_jet.value

    @cached_property
    def ric(self):
        return self.geo.ricci.value

    @cached_property
    def grad_s(self):
        """grad s via 2 Hess(grad f, .)^#, cross-checked against d(s)."""
        via_hess = 2.0 * np.einsum("...ij,...jk,...k->...i", self.ginv, self.hess, self.grad)
        direct = self.geo.raise_index(self.s_jet.gradient()).value
        _assert_close(via_hess, direct, "grad s two ways", 1e-9)
        return via_hess

    @cached_property
    def grad_lap(self):
        return self.geo.raise_index(self.lap_jet.gradient()).value

    @cached_property
    def lap_s(self):
        return self.geo.laplacian(self.s_jet).value

    @cached_property
    def hess_norm2(self):
        return self.geo.inner(self.hess, self.hess)

    def gdot(self, X, Y):
        return np.einsum("...i,...ij,...j->...", X, self.g, Y)


def _ctx(C, points=None) -> ChiContext:
    if isinstance(C, ChiContext):
        return C
    return ChiContext(C, points)


def chi_at(C, p=None) -> np.ndarray:
    return _ctx(C, p).chi


def trace_chi(C, p=None) -> np.ndarray:
    """trace_g chi; equals m Lap f (checked)."""
    c = _ctx(C, p)
    tr = np.einsum("...ij,...ij->...", c.ginv, c.chi)
    _assert_close(tr, c.m * c.lap, "trace chi = m Lap f")
    return tr


def chi_gradf(C, p=None) -> np.ndarray:
    """chi(grad f, grad f); equals s * [Hess(grad f, grad f) + (1 - s) Lap f] (checked)."""
    c = _ctx(C, p)
    val = np.einsum("...i,...ij,...j->...", c.grad, c.chi, c.grad)
    hgg = np.einsum("...i,...ij,...j->...", c.grad, c.hess, c.grad)
    _assert_close(val, c.s * (hgg + (1.0 - c.s) * c.lap), "chi(grad f, grad f) = s residual_d")
    return val


def _div_chi_analytic(c: ChiContext) -> np.ndarray:
    """Covector (div chi)_j from the closed formula."""
    gs, gl = c.grad_s, c.grad_lap
    df = c.df
    ds = np.einsum("...ij,...j->...i", c.g, gs)
    dlap = np.einsum("...ij,...j->...i", c.g, gl)
    s, lap = c.s[..., None], c.lap[..., None]
    return (
        np.einsum("...ij,...j->...i", c.hess, gs)
        + s * np.einsum("...ij,...j->...i", c.ric, c.grad)
        + (1.0 + s) * dlap
        - np.einsum("...i,...i->...", gl, df)[..., None] * df
        - lap**2 * df
        - 0.5 * lap * ds
    )


def _div_chi_direct(c: ChiContext) -> np.ndarray:
    return c.geo.div_sym2(c.chi_jet).value


def div_chi(C, p=None, V=None, method: str = "analytic") -> np.ndarray:
    """(div chi)(V), or the whole covector when ``V`` is None.

    ``analytic`` uses the closed formula in terms of grad s, Ric, grad Lap f;
    ``direct`` takes the covariant divergence of chi as a jet field.
    """
    c = _ctx(C, p)
    if method == "analytic":
        w = _div_chi_analytic(c)
    elif method == "direct":
        w = _div_chi_direct(c)
    else:
        raise ValueError(f"unknown method {method!r}")
    if V is None:
        return w
    return np.einsum("...i,...i->...", w, np.asarray(V, dtype=float))


def div_chi_gradf(C, p=None, method: str = "corollary") -> np.ndarray:
    """(div chi)(grad f) by one of three routes."""
    c = _ctx(C, p)
    s, lap, gs = c.s, c.lap, c.grad_s
    ric_ff = np.einsum("...i,...ij,...j->...", c.grad, c.ric, c.grad)
    gs_norm2 = c.gdot(gs, gs)
    f_gs = c.gdot(c.grad, gs)
    if method == "corollary":
        return 0.5 * gs_norm2 + s * ric_ff + c.gdot(c.grad_lap, c.grad) - lap**2 * s - 0.5 * lap * f_gs
    if method == "bochner_form":
        return (
            0.5 * gs_norm2
            - (1.0 - s) * ric_ff
            + 0.5 * c.lap_s
            - c.hess_norm2
            - lap**2 * s
            - 0.5 * lap * f_gs
        )
    if method == "via_divchi":
        return np.einsum("...i,...i->...", _div_chi_direct(c), c.grad)
    raise ValueError(f"unknown method {method!r}")


def bochner_residual(C, p=None) -> np.ndarray:
    """1/2 Lap s - |Hess f|^2 - g(grad f, grad Lap f) - Ric(grad f, grad f); zero."""
    c = _ctx(C, p)
    ric_ff = np.einsum("...i,...ij,...j->...", c.grad, c.ric, c.grad)
    return 0.5 * c.lap_s - c.hess_norm2 - c.gdot(c.grad, c.grad_lap) - ric_ff


def lie_identity_check(C, p=None):
    """Both sides of div(chi(., grad f)^#) = (div chi)(grad f) + 1/2 <L_grad f g, chi>.

    The left side differentiates the vector field chi(., grad f)^# as a jet;
    the right side uses the corollary form and a connection-free Lie
    derivative.
    """
    c = _ctx(C, p)
    one_form = jeinsum("...ij,...j->...i", c.chi_jet, c.grad_jet)
    X = c.geo.raise_index(one_form)
    lhs = c.geo.div_vec(X).value
    lie = c.geo.lie_derivative_metric(c.grad_jet).value
    rhs = div_chi_gradf(c, method="corollary") + 0.5 * c.geo.inner(lie, c.chi)
    return lhs, rhs


def conformal_closed_form(C, p=None) -> np.ndarray:
    """-(1 - s) Ric(grad f, grad f) - |Hess f|^2 + (1 - s) (Lap f)^2."""
    c = _ctx(C, p)
    ric_ff = np.einsum("...i,...ij,...j->...", c.grad, c.ric, c.grad)
    return -(1.0 - c.s) * ric_ff - c.hess_norm2 + (1.0 - c.s) * c.lap**2
