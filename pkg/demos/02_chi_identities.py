"""The symmetric tensor chi and its divergence, cross-checked.

Run with ``python demos/02_chi_identities.py``.

chi is built from f and the base metric.  Its divergence has a closed
expression in terms of grad s, the Ricci tensor and grad Lap f.  Here the
closed expression is compared with a covariant divergence taken directly from
the jet of chi.  Its contraction with grad f is computed three ways, and the
Bochner formula is checked along the way.  Random cubic fields are used on
the three 2-D model spaces.
"""
import numpy as np

from harmid import chi
from harmid.exprlang import format_expr
from harmid.atlas import model, random_cubic, sample_points
from harmid.deform import DeformedMetric

rng = np.random.default_rng(7)
for name in ("euclidean", "hyperbolic", "sphere_stereo"):
    M = model(name, 2)
    pts = sample_points(M.chart, M.box_lower, M.box_upper, 20, 7)
    f = random_cubic(M, rng, pts, target_s=0.5)
    C = chi.ChiContext(DeformedMetric(M.metric, f), pts)
    a = chi.div_chi(C, method="analytic")
    d = chi.div_chi(C, method="direct")
    routes = [chi.div_chi_gradf(C, method=m) for m in ("corollary", "bochner_form", "via_divchi")]
    lhs, rhs = chi.lie_identity_check(C)
    print(f"{name}:  f = {format_expr(f.expr)}")
    print(f"  div chi, closed vs direct           {np.max(np.abs(a - d)):.2e}")
    print(f"  (div chi)(grad f), spread of routes {np.ptp(np.stack(routes), axis=0).max():.2e}")
    print(f"  Bochner residual                    {np.max(np.abs(chi.bochner_residual(C))):.2e}")
    print(f"  trace chi - m Lap f                 {np.max(np.abs(chi.trace_chi(C) - C.m * C.lap)):.2e}")
    print(f"  Lie-derivative identity             {np.max(np.abs(lhs - rhs)):.2e}\n")
