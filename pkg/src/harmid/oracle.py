"""Finite-difference recomputation of geometric quantities.

This is the independent verification channel for the jet pipeline: it
only ever evaluates expressions to degree 0 and differentiates by central
differences with one Richardson step, ``(4 D(h/2) - D(h)) / 3``.  The
arithmetic runs in mpmath at ``dps`` digits so that nested differencing
(third derivatives of f for the divergence of chi) keeps rounding noise far
below double precision tolerances.
"""
from __future__ import annotations

import itertools

import mpmath
import numpy as np

from . import exprlang
from .geometry import DomainError

__all__ = ["fd_oracle", "QUANTITIES"]

QUANTITIES = {
    # name -> nesting depth of differences
    "metric": 0,
    "christoffel": 1,
    "gradient": 1,
    "s": 1,
    "hessian": 2,
    "laplacian": 2,
    "ricci": 2,
    "chi": 2,
    "div_chi": 3,
}


class _MpBackend:
    sin, cos, tan, exp = mpmath.sin, mpmath.cos, mpmath.tan, mpmath.exp

    @staticmethod
    def log(x):
        if x <= 0:
            raise ValueError(f"log of non-positive value {x}")
        return mpmath.log(x)

    @staticmethod
    def sqrt(x):
        if x <= 0:
            raise ValueError(f"sqrt of non-positive value {x}")
        return mpmath.sqrt(x)

    @staticmethod
    def pow(x, c):
        if float(c).is_integer():
            return x ** int(c)
        if x <= 0:
            raise ValueError(f"non-integer power of non-positive value {x}")
        return mpmath.power(x, mpmath.mpf(c))

    @staticmethod
    def const(name):
        return {"pi": mpmath.pi, "e": mpmath.e}[name]

    @staticmethod
    def number(value):
        return mpmath.mpf(value)


def _obj(shape):
    return np.empty(shape, dtype=object)


class _Oracle:
    def __init__(self, metric, f, h):
        self.metric = metric
        self.f = f
        self.h = mpmath.mpf(h)
        self.m = metric.chart.dim

    # -- primitive evaluations ------------------------------------------
    def env(self, p):
        return dict(zip(self.metric.chart.coords, p))

    def F(self, p):
        return exprlang.evaluate(self.f.expr, self.env(p), _MpBackend)

    def G(self, p):
        m = self.m
        out = _obj((m, m))
        metric = self.metric
        if hasattr(metric, "entries"):
            env = self.env(p)
            for i in range(m):
                for j in range(i + 1):
                    out[i, j] = out[j, i] = exprlang.evaluate(metric.entries[i][j], env, _MpBackend)
            return out
        # deformed metric: base minus eps^2 df (x) df
        base = _Oracle(metric.base, metric.f, self.h).G(p)
        df = _Oracle(metric.base, metric.f, self.h).dF(p)
        eps2 = mpmath.mpf(metric.eps) ** 2
        for i in range(m):
            for j in range(m):
                out[i, j] = base[i, j] - eps2 * df[i] * df[j]
        return out

    # -- differencing -----------------------------------------------------
    def d(self, fn, p, i):
        """Richardson-extrapolated central difference of fn along x_i."""

        def central(h):
            up = list(p)
            dn = list(p)
            up[i] += h
            dn[i] -= h
            return (np.asarray(fn(up), dtype=object) - np.asarray(fn(dn), dtype=object)) / (2 * h)

        return (4 * central(self.h / 2) - central(self.h)) / 3

    def grad_of(self, fn, p):
        parts = [self.d(fn, p, i) for i in range(self.m)]
        return np.stack(parts, axis=-1)

    # -- geometry -----------------------------------------------------------
    def Ginv(self, p):
        return np.array(mpmath.inverse(mpmath.matrix(self.G(p).tolist())).tolist(), dtype=object)

    def Gamma(self, p):
        m = self.m
        dg = self.grad_of(self.G, p)  # dg[a, b, c] = d_c g_ab
        ginv = self.Ginv(p)
        out = _obj((m, m, m))
        for k, i, j in itertools.product(range(m), repeat=3):
            out[k, i, j] = sum(
                ginv[k, l] * (dg[j, l, i] + dg[i, l, j] - dg[i, j, l]) for l in range(m)
            ) / 2
        return out

    def dF(self, p):
        return self.grad_of(self.F, p)

    def ddF(self, p):
        return self.grad_of(self.dF, p)

    def gradient(self, p):
        return self.Ginv(p).dot(self.dF(p))

    def s(self, p):
        df = self.dF(p)
        return df.dot(self.Ginv(p).dot(df))

    def Hess(self, p):
        m = self.m
        gam = self.Gamma(p)
        df = self.dF(p)
        ddf = self.ddF(p)
        out = _obj((m, m))
        for i, j in itertools.product(range(m), repeat=2):
            out[i, j] = ddf[i, j] - sum(gam[k, i, j] * df[k] for k in range(m))
        return out

    def laplacian(self, p):
        ginv = self.Ginv(p)
        H = self.Hess(p)
        return sum(ginv[i, j] * H[i, j] for i in range(self.m) for j in range(self.m))

    def Ric(self, p):
        m = self.m
        gam = self.Gamma(p)
        dgam = self.grad_of(self.Gamma, p)  # dgam[k, i, j, l] = d_l Gamma^k_ij
        out = _obj((m, m))
        for i, j in itertools.product(range(m), repeat=2):
            out[i, j] = sum(
                dgam[k, i, j, k]
                - dgam[k, k, j, i]
                + sum(gam[k, k, l] * gam[l, i, j] - gam[k, i, l] * gam[l, k, j] for l in range(m))
                for k in range(m)
            )
        return out

    def chi(self, p):
        m = self.m
        G = self.G(p)
        ginv = self.Ginv(p)
        df = self.dF(p)
        H = self.Hess(p)
        s = df.dot(ginv.dot(df))
        lap = sum(ginv[i, j] * H[i, j] for i in range(m) for j in range(m))
        out = _obj((m, m))
        for i, j in itertools.product(range(m), repeat=2):
            out[i, j] = s * H[i, j] + lap * (G[i, j] - df[i] * df[j])
        return out

    def div_chi(self, p):
        m = self.m
        gam = self.Gamma(p)
        ginv = self.Ginv(p)
        chi = self.chi(p)
        dchi = self.grad_of(self.chi, p)  # dchi[i, j, k] = d_k chi_ij
        nabla = _obj((m, m, m))
        for k, i, j in itertools.product(range(m), repeat=3):
            nabla[k, i, j] = dchi[i, j, k] - sum(
                gam[l, k, i] * chi[l, j] + gam[l, k, j] * chi[i, l] for l in range(m)
            )
        return np.array(
            [sum(ginv[i, k] * nabla[i, k, j] for i in range(m) for k in range(m)) for j in range(m)],
            dtype=object,
        )


def _check_margin(chart, p, reach):
    corners = np.array(list(itertools.product((-reach, 0.0, reach), repeat=len(p)))) + p
    if not np.all(chart.contains(corners)):
        raise DomainError(f"point {p.tolist()} is closer than {reach:g} to the domain boundary", p)


def fd_oracle(quantity: str, g, f=None, p=None, h: float = 1e-3, dps: int = 30) -> np.ndarray:
    """Recompute ``quantity`` at one point by finite differences.

    ``quantity`` is one of ``QUANTITIES``; scalar-field quantities need
    ``f``.  ``g`` may be an expression metric or a deformed metric.  The
    point must keep a margin of (nesting depth) * h, and at least 2h, from
    the boundary.
    """
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown oracle quantity {quantity!r}; choose from {sorted(QUANTITIES)}")
    p = np.asarray(p, dtype=float)
    if p.shape != (g.chart.dim,):
        raise ValueError("fd_oracle works at a single point")
    depth = QUANTITIES[quantity]
    if hasattr(g, "base"):
        depth += 1
    _check_margin(g.chart, p, max(2, depth) * h)
    if f is None and quantity not in ("metric", "christoffel", "ricci"):
        raise ValueError(f"{quantity} needs a scalar field f")
    with mpmath.workdps(dps):
        oracle = _Oracle(g, f, h)
        mp_p = [mpmath.mpf(float(x)) for x in p]
        fn = {
            "metric": oracle.G,
            "christoffel": oracle.Gamma,
            "gradient": oracle.gradient,
            "s": oracle.s,
            "hessian": oracle.Hess,
            "laplacian": oracle.laplacian,
            "ricci": oracle.Ric,
            "chi": oracle.chi,
            "div_chi": oracle.div_chi,
        }[quantity]
        result = fn(mp_p)
        return np.vectorize(float, otypes=[float])(np.asarray(result, dtype=object))
