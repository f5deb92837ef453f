import time

import numpy as np
import pytest

from harmid.atlas import model
from harmid.deform import ValidityViolation
from harmid.solver import (GridProblem, SolverNonConvergence, discrete_laplacian, energy, nodal_s,
                           sample_report, solve_base, solve_deformed)


def _grid(P):
    X = P.nodes()
    return X[..., 0], X[..., 1]


def test_bilinear_exact(euclid2):
    P = GridProblem(euclid2.metric, (0, 1), (0, 1), 33, 33, "x1*x2")
    sol = solve_base(P)
    x, y = _grid(P)
    assert np.max(np.abs(sol.f - x * y)) <= 1e-8
    assert sol.residual <= 1e-8


def test_boundary_exact(euclid2):
    P = GridProblem(euclid2.metric, (0, 1), (0, 1), 17, 17, "exp(x1)*sin(x2)")
    sol = solve_base(P)
    x, y = _grid(P)
    exact = np.exp(x) * np.sin(y)
    for edge in (np.s_[0, :], np.s_[-1, :], np.s_[:, 0], np.s_[:, -1]):
        assert np.array_equal(sol.f[edge], exact[edge])


def test_quadratic_example(euclid2):
    P = GridProblem(euclid2.metric, (0, 1), (0, 1), 64, 64, "x1^2 - x2^2")
    sol = solve_base(P)
    x, y = _grid(P)
    assert np.max(np.abs(sol.f - (x**2 - y**2))) <= 2e-3


def test_refinement_order_two(euclid2):
    errs = []
    for n in (9, 17, 33, 65):
        P = GridProblem(euclid2.metric, (0, 1), (0, 1), n, n, "exp(x1)*sin(x2)", residual_tol=1e-10)
        x, y = _grid(P)
        errs.append(np.max(np.abs(solve_base(P).f - np.exp(x) * np.sin(y))))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert min(ratios) >= 3.5


def test_hyperbolic_vertical_family(hyp2):
    P = GridProblem(hyp2.metric, (0, 1), (1, 2), 33, 33, "0.3 + 0.1*x2")
    sol = solve_base(P)
    assert np.max(np.abs(sol.f - (0.3 + 0.1 * _grid(P)[1]))) <= 1e-8


def test_maximum_principle(hyp2):
    P = GridProblem(hyp2.metric, (-1, 1), (1, 2), 25, 25, "sin(3*x1)*x2")
    sol = solve_base(P)
    b = np.concatenate([sol.f[0], sol.f[-1], sol.f[:, 0], sol.f[:, -1]])
    assert sol.f.min() >= b.min() - 1e-10
    assert sol.f.max() <= b.max() + 1e-10


def test_energy_monotone(euclid2):
    P = GridProblem(euclid2.metric, (0, 1), (0, 1), 17, 17, "exp(x1)*sin(x2)")
    sol = solve_base(P, record_energy=True)
    E = np.array(sol.energies)
    assert np.all(np.diff(E) <= 1e-12 * np.abs(E[:-1]))
    assert energy(P, sol.f) == pytest.approx(E[-1])


def test_zero_and_bc_initial_guess_agree(euclid2):
    a = solve_base(GridProblem(euclid2.metric, (0, 1), (0, 1), 17, 17, "exp(x1)*sin(x2)"))
    b = solve_base(GridProblem(euclid2.metric, (0, 1), (0, 1), 17, 17, "exp(x1)*sin(x2)", initial="bc"))
    assert np.max(np.abs(a.f - b.f)) <= 1e-9


def test_affine_fixed_point(euclid2):
    P = GridProblem(euclid2.metric, (0, 1), (0, 1), 33, 33, "0.6*x1", mode="deformed")
    sol = solve_deformed(P)
    assert sol.iterations == 1
    assert sol.trace[0][0] <= 1e-10  # roundoff of one Picard update
    assert sol.max_s == pytest.approx(0.36)


def test_hyperbolic_horizontal_example(hyp2):
    P = GridProblem(hyp2.metric, (0, 1), (1, 2), 33, 33, "0.2*x1", mode="deformed")
    sol = solve_deformed(P)
    assert sol.residual <= 1e-8
    assert np.max(np.abs(sol.f - 0.2 * _grid(P)[0])) <= 1e-9
    assert np.max(np.abs(discrete_laplacian(P, sol.f, deformed=True))) <= 1e-8


def test_nonlinear_deformed_solution_differs(euclid2):
    P = GridProblem(euclid2.metric, (0, 1), (0, 1), 33, 33, "0.3*(x1^2 - x2^2)", mode="deformed")
    sol = solve_deformed(P)
    base = solve_base(P)
    assert sol.residual <= 1e-8
    assert len(sol.trace) == sol.iterations > 1
    assert np.max(np.abs(sol.f - base.f)) > 1e-4
    assert max(t[2] for t in sol.trace) <= 0.8 + 1e-8


def test_initial_margin_enforced(euclid2):
    P = GridProblem(euclid2.metric, (0, 1), (0, 1), 9, 9, "0.95*x1", mode="deformed")
    with pytest.raises(ValidityViolation):
        solve_deformed(P)


def test_non_convergence_reported(euclid2):
    P = GridProblem(euclid2.metric, (0, 1), (0, 1), 33, 33, "exp(x1)*sin(x2)", max_sweeps=3)
    with pytest.raises(SolverNonConvergence) as err:
        solve_base(P)
    assert err.value.solution.sweeps == 3 and not err.value.solution.converged


def test_report_format(euclid2):
    sol = solve_base(GridProblem(euclid2.metric, (0, 1), (0, 1), 8, 8, "x1*x2"))
    lines = sample_report(sol, ("f", "s")).splitlines()
    assert lines[0] == "x1,x2,f,s"
    assert len(lines) == 65
    rows = [list(map(float, r.split(","))) for r in lines[1:]]
    assert rows[1][:2] == [0.0, 1 / 7]  # x1 is the outer loop
    full = sample_report(sol).splitlines()
    assert full[0] == "x1,x2,f,s,lap,residual"
    assert full[1].endswith(",,")
    interior = [r.split(",") for r in full[1:] if not r.endswith(",,")]
    assert len(interior) == 36
    assert max(abs(float(r[4])) for r in interior) <= 1e-8
    with pytest.raises(ValueError):
        sample_report(sol, ("f", "energy"))


def test_deformed_s_column(euclid2):
    P = GridProblem(euclid2.metric, (0, 1), (0, 1), 17, 17, "0.3*(x1^2 - x2^2)", mode="deformed")
    sol = solve_deformed(P)
    s = [float(r.split(",")[3]) for r in sample_report(sol, ("f", "s")).splitlines()[1:]]
    assert max(s) <= 0.8 + 1e-8
    assert np.allclose(sorted(s), sorted(nodal_s(P, sol.f).ravel()))


def test_problem_validation(euclid2):
    with pytest.raises(ValueError):
        GridProblem(euclid2.metric, (0, 1), (0, 1), 2, 9, "x1")
    with pytest.raises(ValueError):
        GridProblem(euclid2.metric, (0, 1), (0, 1), 9, 9, "x1", mode="other")
    with pytest.raises(ValueError):
        GridProblem(euclid2.metric, (0, 1), (0, 1), 9, 9, "x1", theta=0.0)
    with pytest.raises(ValueError):
        GridProblem(model("euclidean", 3).metric, (0, 1), (0, 1), 9, 9, "x1")


def test_runtime_65(euclid2):
    t = time.perf_counter()
    solve_deformed(GridProblem(euclid2.metric, (0, 1), (0, 1), 65, 65, "0.3*(x1^2 - x2^2)", mode="deformed"))
    assert time.perf_counter() - t < 10.0
