import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harmid import exprlang
from harmid.atlas import model, random_cubic, sample_points
from harmid.chi import ChiContext, div_chi
from harmid.deform import DeformedMetric, deformed_christoffel
from harmid.geometry import DomainError, LocalGeometry, ScalarField, christoffel, hess, ricci
from harmid.oracle import _MpBackend, fd_oracle


def test_christoffel_hyperbolic(hyp2):
    ref = fd_oracle("christoffel", hyp2.metric, p=[0.0, 2.0])
    assert np.max(np.abs(ref - christoffel(hyp2.metric, [0.0, 2.0]))) <= 1e-6


def test_hessian_quadratic(euclid2):
    f = ScalarField(euclid2.chart, "0.1*(x1^2 + x2^2)")
    ref = fd_oracle("hessian", euclid2.metric, f, [1.0, 1.0])
    assert np.max(np.abs(ref - hess(f, euclid2.metric, [1.0, 1.0]))) <= 1e-7


def test_ricci_sphere(sphere2):
    ref = fd_oracle("ricci", sphere2.metric, p=[0.3, -0.4])
    assert np.max(np.abs(ref - ricci(sphere2.metric, [0.3, -0.4]))) <= 1e-5


def test_margin_enforced(hyp2):
    with pytest.raises(DomainError):
        fd_oracle("ricci", hyp2.metric, p=[0.0, 0.001])


def test_unknown_quantity(euclid2):
    with pytest.raises(ValueError):
        fd_oracle("torsion", euclid2.metric, p=[0.0, 0.0])


@pytest.mark.parametrize("name", ["euclidean", "hyperbolic", "sphere_stereo"])
def test_jets_match_oracle(name, rng):
    M = model(name, 2)
    P = sample_points(M.chart, M.box_lower, M.box_upper, 20, 11)
    f = random_cubic(M, rng, P)
    G = LocalGeometry(M.metric, P)
    jets = {
        "metric": G.g.value,
        "christoffel": G.christoffel.value,
        "ricci": G.ricci.value,
        "hessian": G.hessian(G.scalar(f)).value,
        "laplacian": G.laplacian(G.scalar(f)).value,
    }
    for q, val in jets.items():
        ref = np.stack([fd_oracle(q, M.metric, f, p) for p in P])
        scale = max(1.0, float(np.max(np.abs(ref))))
        assert np.max(np.abs(val - ref)) <= 1e-5 * scale, q


def test_div_chi_and_deformed_connection(hyp2, rng):
    P = sample_points(hyp2.chart, hyp2.box_lower, hyp2.box_upper, 4, 12)
    f = random_cubic(hyp2, rng, P)
    D = DeformedMetric(hyp2.metric, f)
    ref = np.stack([fd_oracle("div_chi", hyp2.metric, f, p) for p in P])
    assert np.max(np.abs(div_chi(ChiContext(D, P), method="direct") - ref)) <= 1e-8
    ref = np.stack([fd_oracle("christoffel", D, f, p) for p in P])
    assert np.max(np.abs(deformed_christoffel(D, P) - ref)) <= 1e-8


leaves = st.one_of(st.sampled_from([exprlang.Var("x1"), exprlang.Var("x2")]),
                   st.floats(0.1, 2.0).map(exprlang.Number))


def _extend(children):
    return st.one_of(
        st.builds(exprlang.Binary, st.sampled_from(["add", "sub", "mul"]), children, children),
        st.builds(lambda fn, a: exprlang.Call(fn, (a,)), st.sampled_from(["sin", "cos"]), children),
    )


@settings(max_examples=40, deadline=None)
@given(st.recursive(leaves, _extend, max_leaves=6), st.floats(-1, 1), st.floats(-1, 1))
def test_expression_jets_against_mpmath(tree, a, b):
    jet = exprlang.eval_jet(tree, ("x1", "x2"), (a, b), 3)

    def fn(x, y):
        return exprlang.evaluate(tree, {"x1": x, "x2": y}, _MpBackend)

    with mpmath.workdps(30):
        for mi in jet.multi_indices:
            order = (mi.count(0), mi.count(1))
            ref = float(mpmath.diff(fn, (mpmath.mpf(a), mpmath.mpf(b)), order))
            got = float(jet.derivative(*mi))
            assert abs(got - ref) <= 1e-9 * max(1.0, abs(ref))
