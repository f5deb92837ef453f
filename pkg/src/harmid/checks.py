"""Verification battery: each check yields one record.

A record is ``{id, anchor, points, max_residual, tolerance, passed}``, with
``passed`` exactly ``max_residual <= tolerance``.  Predicate checks (a
boolean expectation) report residual 0 or 1 against tolerance 0.5 and are
not affected by a tolerance override.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import atlas, chi, deform, geometry
from .deform import DeformedMetric
from .geometry import LocalGeometry, ScalarField
from .oracle import fd_oracle

__all__ = ["Record", "DEFAULT_TOL", "identity_battery", "verify_paper", "run_check", "summarize"]

DEFAULT_TOL = {
    "example": 1e-9,
    "christoffel": 1e-9,
    "tension": 1e-9,
    "div_chi": 1e-8,
    "bochner": 1e-8,
    "trace": 1e-10,
    "commutation": 1e-8,
    "lie": 1e-8,
    "ricci": 1e-9,
    "oracle": 1e-8,
    "solver": 1e-8,
}
PREDICATE_TOL = 0.5


@dataclass
class Record:
    id: str
    anchor: str
    points: int
    max_residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_residual <= self.tolerance)  # nan fails

    def as_dict(self) -> dict:
        r = self.max_residual
        return {
            "id": self.id,
            "anchor": self.anchor,
            "points": self.points,
            "max_residual": None if math.isnan(r) else r,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def _maxabs(a, b=0.0) -> float:
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    if d.size == 0:
        return 0.0
    if not np.all(np.isfinite(d)):
        return float("nan")
    return float(np.max(d))


class _Collector:
    def __init__(self, override: Optional[float]):
        self.override = override
        self.records: list[Record] = []

    def tol(self, kind: str) -> float:
        return DEFAULT_TOL[kind] if self.override is None else self.override

    def add(self, rid: str, anchor: str, npts: int, residual: float, kind: str):
        self.records.append(Record(rid, anchor, int(npts), float(residual), self.tol(kind)))

    def predicate(self, rid: str, anchor: str, npts: int, ok: bool):
        self.records.append(Record(rid, anchor, int(npts), 0.0 if ok else 1.0, PREDICATE_TOL))


def _npts(points) -> int:
    return int(np.prod(np.shape(points)[:-1], dtype=int))


def identity_battery(D: DeformedMetric, points, prefix: str, col: _Collector):
    """Cross-method identities of the deformation and of chi at ``points``."""
    n = _npts(points)
    g = D.base
    a = deform.deformed_christoffel(D, points, "via_eq21")
    b = deform.deformed_christoffel(D, points, "direct")
    col.add(f"{prefix}/christoffel_two_way", "deformed connection: correction formula vs direct", n,
            _maxabs(a, b), "christoffel")

    tc = deform.tension_c(D, points)
    td = deform.tension_d(D, points)
    col.add(f"{prefix}/tension_c_identity", "tension of the codomain-deformed identity", n,
            _maxabs(deform.tension_identity(g, D, points), tc), "tension")
    col.add(f"{prefix}/tension_d_identity", "tension of the domain-deformed identity", n,
            _maxabs(deform.tension_identity(D, g, points), td), "tension")
    ing = deform.Ingredients.build(D, points)
    lap_t = deform.deformed_laplacian(D, points, D.f, method="general")
    col.add(f"{prefix}/tension_d_laplacian", "domain-deformed tension equals deformed Laplacian times grad f", n,
            _maxabs(td, lap_t[..., None] * ing.grad.value), "tension")

    C = chi.ChiContext(D, points)
    col.add(f"{prefix}/div_chi_two_way", "divergence of chi: closed formula vs covariant divergence", n,
            _maxabs(chi.div_chi(C, method="analytic"), chi.div_chi(C, method="direct")), "div_chi")
    r1 = chi.div_chi_gradf(C, method="corollary")
    r2 = chi.div_chi_gradf(C, method="bochner_form")
    r3 = chi.div_chi_gradf(C, method="via_divchi")
    col.add(f"{prefix}/div_chi_gradf_three_way", "divergence of chi along grad f, three routes", n,
            max(_maxabs(r1, r2), _maxabs(r1, r3), _maxabs(r2, r3)), "div_chi")
    col.add(f"{prefix}/bochner", "Bochner formula for smooth functions", n,
            _maxabs(chi.bochner_residual(C)), "bochner")
    tr = np.einsum("...ij,...ij->...", C.ginv, C.chi)
    col.add(f"{prefix}/trace_chi", "trace of chi equals m times the Laplacian", n,
            _maxabs(tr, C.m * C.lap), "trace")
    cgg = np.einsum("...i,...ij,...j->...", C.grad, C.chi, C.grad)
    hgg = np.einsum("...i,...ij,...j->...", C.grad, C.hess, C.grad)
    col.add(f"{prefix}/chi_gradf", "chi(grad f, grad f) equals s times the domain residual", n,
            _maxabs(cgg, C.s * (hgg + (1.0 - C.s) * C.lap)), "trace")
    lhs, rhs = chi.lie_identity_check(C)
    col.add(f"{prefix}/lie_identity", "divergence of chi(., grad f) via the Lie derivative of g", n,
            _maxabs(lhs, rhs), "lie")
    geo = C.geo
    rough = geo.rough_laplacian(C.grad_jet).value
    ric_grad = np.einsum("...ij,...jk,...k->...i", C.ginv, C.ric, C.grad)
    col.add(f"{prefix}/commutation", "rough Laplacian of grad f equals Ric(grad f) + grad Laplacian", n,
            _maxabs(rough, ric_grad + C.grad_lap), "commutation")


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


def _seed_of(seed: int, *key: int) -> list:
    return [seed, *key]


def _expectation_records(name: str, entry: atlas.FieldEntry, seed: int, key: int, col: _Collector):
    P = atlas.sample_points(entry.chart, entry.model.box_lower, entry.model.box_upper, 30, _seed_of(seed, key))
    D = DeformedMetric(entry.model.metric, entry.field)
    tol = col.tol("example")
    pred = deform.predicates(D, P, tol=tol)
    for ex in entry.expectations:
        rid = f"fixture/{name}/{ex.quantity}"
        if isinstance(ex.value, bool):
            if ex.value:
                resid = pred.max_laplacian if ex.quantity == "harmonic_c" else pred.max_residual_d
                col.add(rid, ex.anchor, len(P), resid, "example")
            else:
                got = pred.harmonic_c if ex.quantity == "harmonic_c" else pred.harmonic_d
                col.predicate(rid, ex.anchor, len(P), got is False)
            continue
        if ex.quantity == "s":
            got = geometry.norm2(entry.field, entry.model.metric, P)
        elif ex.quantity == "laplacian":
            got = geometry.laplacian(entry.field, entry.model.metric, P)
        elif ex.quantity == "residual_d":
            got = deform.residual_d(D, P)
        else:  # pragma: no cover - registry is fixed
            raise ValueError(ex.quantity)
        col.add(rid, ex.anchor, len(P), _maxabs(got, ex.value(P)), "example")
    if entry.name == "linear_euclidean" or entry.name.startswith("hyperbolic_"):
        col.add(f"fixture/{name}/tension_norm",
                "zero tension for the example family",
                len(P),
                _maxabs(deform.tension_c(D, P)) if entry.name != "hyperbolic_horizontal"
                else _maxabs(deform.tension_d(D, P)),
                "example")


def _battery_fixtures(seed: int):
    """(label, DeformedMetric, points) triples for the identity battery."""
    out = []
    reg = atlas.registry()
    for k, name in enumerate(["linear_euclidean[a=(0.6,0)]", "hyperbolic_vertical[a=0,b=0.1,n=2]",
                              "hyperbolic_horizontal[a=0,b=0.2,n=3]", "sphere_test[c=1,n=2]"]):
        e = reg[name]
        P = atlas.entry_sample(e, 50, _seed_of(seed, 100 + k))
        out.append((name, DeformedMetric(e.model.metric, e.field), P))
    E = atlas.model("euclidean", 2)
    P = atlas.sample_points(E.chart, (-1.5, -1.5), (1.5, 1.5), 50, _seed_of(seed, 110))
    out.append(("quadratic_euclidean", DeformedMetric(E.metric, ScalarField(E.chart, "0.1*(x1^2 + x2^2)")), P))
    for k, mname in enumerate(atlas.MODEL_NAMES):
        M = atlas.model(mname, 2)
        P = atlas.sample_points(M.chart, M.box_lower, M.box_upper, 50, _seed_of(seed, 120 + k))
        f = atlas.random_cubic(M, _rng(seed, 130 + k), P, target_s=0.5)
        out.append((f"cubic_{mname}2", DeformedMetric(M.metric, f), P))
    return out


def verify_paper(seed: int = 0, tol: Optional[float] = None) -> list[Record]:
    """Full suite on the built-in fixtures; deterministic for a given seed."""
    col = _Collector(tol)

    # worked examples on R^2 with f = 0.1 (x1^2 + x2^2) at (1, 1)
    E = atlas.model("euclidean", 2)
    D = DeformedMetric(E.metric, ScalarField(E.chart, "0.1*(x1^2 + x2^2)"))
    p = np.array([1.0, 1.0])
    col.add("example/residual_d_quadratic", "domain residual of a radial quadratic", 1,
            _maxabs(deform.residual_d(D, p), 0.384), "example")
    col.add("example/trace_chi_quadratic", "trace of chi for a radial quadratic", 1,
            _maxabs(chi.trace_chi(D, p), 0.8), "example")

    for k, (name, entry) in enumerate(atlas.registry().items()):
        _expectation_records(name, entry, seed, k, col)

    for label, Dk, P in _battery_fixtures(seed):
        identity_battery(Dk, P, f"battery/{label}", col)

    for mname in atlas.MODEL_NAMES:
        for n in (2, 3):
            M = atlas.model(mname, n)
            P = atlas.sample_points(M.chart, M.box_lower, M.box_upper, 20, _seed_of(seed, 200 + n))
            ric = geometry.ricci(M.metric, P)
            col.add(f"ricci/{mname}{n}", "Ricci tensor of the model space is a constant multiple of g", len(P),
                    _maxabs(ric, M.ricci_factor * M.metric.values(P)), "ricci")

    # jets against the finite-difference oracle
    H = atlas.model("hyperbolic", 2)
    P = atlas.sample_points(H.chart, H.box_lower, H.box_upper, 3, _seed_of(seed, 300))
    f = atlas.random_cubic(H, _rng(seed, 301), P, target_s=0.5)
    Dh = DeformedMetric(H.metric, f)
    C = chi.ChiContext(Dh, P)
    jets = {
        "christoffel": LocalGeometry(H.metric, P).christoffel.value,
        "hessian": C.hess,
        "ricci": C.ric,
        "chi": C.chi,
        "div_chi": chi.div_chi(C, method="analytic"),
    }
    for q, val in jets.items():
        ref = np.stack([fd_oracle(q, H.metric, f, x) for x in P])
        col.add(f"oracle/{q}", "jet value against finite differences", len(P), _maxabs(val, ref), "oracle")
    ref = np.stack([fd_oracle("christoffel", Dh, f, x) for x in P])
    col.add("oracle/deformed_christoffel", "deformed connection against finite differences", len(P),
            _maxabs(deform.deformed_christoffel(Dh, P), ref), "oracle")

    # solver exactness
    from .solver import GridProblem, solve_base, solve_deformed

    Pb = GridProblem(E.metric, (0.0, 1.0), (0.0, 1.0), 17, 17, "x1*x2")
    sb = solve_base(Pb)
    X = Pb.nodes()
    col.add("solver/bilinear_exact", "discrete energy minimiser reproduces bilinear data", X[..., 0].size,
            _maxabs(sb.f, X[..., 0] * X[..., 1]), "solver")
    Pd = GridProblem(E.metric, (0.0, 1.0), (0.0, 1.0), 17, 17, "0.6*x1", mode="deformed")
    sd = solve_deformed(Pd)
    col.add("solver/affine_fixed_point", "affine data is a fixed point of the deformed problem",
            X[..., 0].size, max(_maxabs(sd.f, 0.6 * X[..., 0]), float(sd.iterations != 1)), "solver")

    return sorted(col.records, key=lambda r: r.id)


def run_check(D: DeformedMetric, points, tol: Optional[float] = None) -> list[Record]:
    """Identity battery on a user-supplied manifold."""
    col = _Collector(tol)
    identity_battery(D, points, "check", col)
    return sorted(col.records, key=lambda r: r.id)


def summarize(records) -> dict:
    failed = [r.id for r in records if not r.passed]
    return {"total": len(records), "passed": len(records) - len(failed), "failed": len(failed),
            "failed_ids": failed}
