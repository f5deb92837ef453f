"""Dirichlet-energy minimisation on 2-D grids.

The energy ``E(f) = 1/2 int g^ij d_i f d_j f sqrt(det g) dx`` is discretised
with bilinear elements on a uniform node grid; the coefficient matrix
``A = sqrt(det g) g^-1`` is frozen at each cell centre.  This yields a
symmetric 9-point stencil ``K``.  The discrete Laplace-Beltrami operator at an
interior node is ``-(K f) / (sqrt(det g) hx hy)``.

Linear problems are relaxed by four-colour successive over-relaxation:
nodes are coloured by (i mod 2, j mod 2), which makes each colour class
independent under a 9-point stencil.  For 0 < omega < 2 every sweep lowers
the discrete energy.

In ``deformed`` mode the metric is g - df (x) df, with df taken from the
current iterate.  Picard iteration solves the frozen linear problem and
under-relaxes.

Grids are indexed ``f[i, j]`` with i along x1 and j along x2.  Reports list
nodes in row-major order, so x1 is the outer loop.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import exprlang
from .deform import ValidityViolation
from .geometry import MetricField, spd_inverse

__all__ = [
    "GridProblem",
    "GridSolution",
    "SolverNonConvergence",
    "QUANTITIES",
    "solve_base",
    "solve_deformed",
    "solve",
    "energy",
    "discrete_laplacian",
    "sample_report",
]

ABORT_S = 0.999
INITIAL_S_MARGIN = 0.8
QUANTITIES = ("f", "s", "lap", "residual")


class SolverNonConvergence(RuntimeError):
    def __init__(self, message: str, solution: "GridSolution"):
        super().__init__(message)
        self.solution = solution


@dataclass
class GridProblem:
    """Dirichlet problem on the box ``[x_lo, x_hi] x [y_lo, y_hi]`` with ``nx x ny`` nodes."""

    metric: MetricField
    x_range: tuple
    y_range: tuple
    nx: int
    ny: int
    bc: Union[str, exprlang.Expr]
    mode: str = "base"
    residual_tol: float = 1e-8
    picard_tol: float = 1e-11
    max_sweeps: int = 50_000
    max_picard: int = 500
    theta: float = 0.5
    omega: Optional[float] = None
    initial: str = "zero"  # interior start: "zero" or "bc" (boundary expression evaluated inside)

    def __post_init__(self):
        if self.metric.chart.dim != 2:
            raise ValueError("the grid solver needs a 2-D metric")
        if self.nx < 3 or self.ny < 3:
            raise ValueError("grid needs at least 3 x 3 nodes")
        if self.mode not in ("base", "deformed"):
            raise ValueError(f"mode must be 'base' or 'deformed', got {self.mode!r}")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"damping theta must lie in (0, 1], got {self.theta}")
        if self.initial not in ("zero", "bc"):
            raise ValueError(f"initial must be 'zero' or 'bc', got {self.initial!r}")
        if self.omega is None:
            n = max(self.nx, self.ny) - 1
            self.omega = 2.0 / (1.0 + math.sin(math.pi / n))
        if not 0.0 < self.omega < 2.0:
            raise ValueError(f"relaxation factor must lie in (0, 2), got {self.omega}")
        if isinstance(self.bc, str):
            self.bc = exprlang.parse(self.bc)
        exprlang.bind(self.bc, self.metric.chart.coords)
        (x0, x1), (y0, y1) = self.x_range, self.y_range
        if not (x0 < x1 and y0 < y1):
            raise ValueError("empty grid box")

    @property
    def hx(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y_range[1] - self.y_range[0]) / (self.ny - 1)

    def nodes(self) -> np.ndarray:
        x = np.linspace(*self.x_range, self.nx)
        y = np.linspace(*self.y_range, self.ny)
        return np.stack(np.meshgrid(x, y, indexing="ij"), axis=-1)

    def centres(self) -> np.ndarray:
        P = self.nodes()
        return 0.25 * (P[:-1, :-1] + P[1:, :-1] + P[:-1, 1:] + P[1:, 1:])


@dataclass
class GridSolution:
    problem: GridProblem
    f: np.ndarray
    sweeps: int
    residual: float
    iterations: int = 0
    trace: list = field(default_factory=list)  # per Picard step: (change, residual, max s)
    energies: list = field(default_factory=list)
    converged: bool = True

    @property
    def max_s(self) -> float:
        return float(np.max(nodal_s(self.problem, self.f)))

    def summary(self) -> dict:
        return {
            "mode": self.problem.mode,
            "grid": [self.problem.nx, self.problem.ny],
            "converged": self.converged,
            "iterations": self.iterations,
            "sweeps": self.sweeps,
            "final_residual": self.residual,
            "max_s": self.max_s,
            "trace": [list(t) for t in self.trace],
        }


# -- assembly ---------------------------------------------------------------
_LOCAL = ((0, 0), (1, 0), (0, 1), (1, 1))
_M1 = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])


def _element_parts():
    kxx = np.zeros((4, 4))
    kyy = np.zeros((4, 4))
    kxy = np.zeros((4, 4))
    for p, (ip, jp) in enumerate(_LOCAL):
        for q, (iq, jq) in enumerate(_LOCAL):
            sxp, syp = 2 * ip - 1, 2 * jp - 1
            sxq, syq = 2 * iq - 1, 2 * jq - 1
            kxx[p, q] = sxp * sxq * _M1[jp, jq]
            kyy[p, q] = syp * syq * _M1[ip, iq]
            kxy[p, q] = (sxp * syq + syp * sxq) / 4.0
    return kxx, kyy, kxy


_KXX, _KYY, _KXY = _element_parts()


def _cell_coefficients(G: np.ndarray, points) -> tuple:
    """A = sqrt(det G) G^-1 per cell, and sqrt(det G)."""
    Ginv = spd_inverse(G, points)
    root = np.sqrt(np.linalg.det(G))
    return root[..., None, None] * Ginv, root


def _stencil(A: np.ndarray, hx: float, hy: float) -> np.ndarray:
    """Nodal 9-point stencil ``S[i, j, 1 + di, 1 + dj]`` from per-cell A."""
    a, b, c = A[..., 0, 0], A[..., 0, 1], A[..., 1, 1]
    Ke = (
        a[..., None, None] * (hy / hx) * _KXX
        + c[..., None, None] * (hx / hy) * _KYY
        + b[..., None, None] * _KXY
    )
    cx, cy = A.shape[:2]
    S = np.zeros((cx + 1, cy + 1, 3, 3))
    for p, (ip, jp) in enumerate(_LOCAL):
        for q, (iq, jq) in enumerate(_LOCAL):
            S[ip:ip + cx, jp:jp + cy, 1 + iq - ip, 1 + jq - jp] += Ke[..., p, q]
    return S


def _apply(S: np.ndarray, f: np.ndarray) -> np.ndarray:
    """(K f) at interior nodes, shape (nx - 2, ny - 2)."""
    nx, ny = f.shape
    out = np.zeros((nx - 2, ny - 2))
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            out += S[1:-1, 1:-1, 1 + di, 1 + dj] * f[1 + di:nx - 1 + di, 1 + dj:ny - 1 + dj]
    return out


def _colour_slices(n: int, parity: int, shift: int) -> slice:
    start = 1 if parity == 1 else 2
    return slice(start + shift, n - 1 + shift, 2)


def _sor_sweep(S: np.ndarray, f: np.ndarray, omega: float) -> None:
    nx, ny = f.shape
    for pi in (1, 0):
        for pj in (1, 0):
            I, J = _colour_slices(nx, pi, 0), _colour_slices(ny, pj, 0)
            Sc = S[I, J]
            if Sc.size == 0:
                continue
            acc = np.zeros(Sc.shape[:2])
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di == 0 and dj == 0:
                        continue
                    acc += Sc[..., 1 + di, 1 + dj] * f[_colour_slices(nx, pi, di), _colour_slices(ny, pj, dj)]
            f[I, J] = (1.0 - omega) * f[I, J] - omega * acc / Sc[..., 1, 1]


def energy_from_stencil(S: np.ndarray, f: np.ndarray) -> float:
    """1/2 f^T K f summed over all nodes (boundary rows included)."""
    nx, ny = f.shape
    fp = np.pad(f, 1)
    Kf = np.zeros_like(f)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            Kf += S[..., 1 + di, 1 + dj] * fp[1 + di:nx + 1 + di, 1 + dj:ny + 1 + dj]
    return 0.5 * float(np.sum(f * Kf))


# -- metric on the grid -----------------------------------------------------
def _node_gradient(P: GridProblem, f: np.ndarray) -> np.ndarray:
    gx, gy = np.gradient(f, P.hx, P.hy, edge_order=2)
    return np.stack([gx, gy], axis=-1)


def _cell_gradient(P: GridProblem, f: np.ndarray) -> np.ndarray:
    gx = 0.5 * ((f[1:, :-1] - f[:-1, :-1]) + (f[1:, 1:] - f[:-1, 1:])) / P.hx
    gy = 0.5 * ((f[:-1, 1:] - f[:-1, :-1]) + (f[1:, 1:] - f[1:, :-1])) / P.hy
    return np.stack([gx, gy], axis=-1)


def nodal_s(P: GridProblem, f: np.ndarray) -> np.ndarray:
    """g(grad f, grad f) at nodes from second-order differences of the grid field."""
    nodes = P.nodes()
    Ginv = spd_inverse(P.metric.values(nodes), nodes)
    d = _node_gradient(P, f)
    return np.einsum("...i,...ij,...j->...", d, Ginv, d)


def _deformed_cells(P: GridProblem, f: np.ndarray, G: np.ndarray):
    d = _cell_gradient(P, f)
    Ginv = spd_inverse(G)
    s = np.einsum("...i,...ij,...j->...", d, Ginv, d)
    worst = np.unravel_index(int(np.argmax(s)), s.shape)
    if s[worst] >= ABORT_S:
        raise ValidityViolation(P.centres()[worst], s[worst])
    return G - np.einsum("...i,...j->...ij", d, d)


def _node_weights(P: GridProblem, f: Optional[np.ndarray]) -> np.ndarray:
    """sqrt(det) of the (possibly deformed) metric at interior nodes."""
    nodes = P.nodes()[1:-1, 1:-1]
    G = P.metric.values(nodes)
    if f is not None:
        d = _node_gradient(P, f)[1:-1, 1:-1]
        G = G - np.einsum("...i,...j->...ij", d, d)
    spd_inverse(G, nodes)
    return np.sqrt(np.linalg.det(G))


class _Operator:
    """Frozen stencil plus nodal weights for one linear problem."""

    def __init__(self, P: GridProblem, f_metric: Optional[np.ndarray], G_cells: np.ndarray):
        G = G_cells if f_metric is None else _deformed_cells(P, f_metric, G_cells)
        A, _ = _cell_coefficients(G, P.centres())
        self.S = _stencil(A, P.hx, P.hy)
        self.mass = _node_weights(P, f_metric) * P.hx * P.hy

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return -_apply(self.S, f) / self.mass


def discrete_laplacian(P: GridProblem, f: np.ndarray, deformed: bool = False) -> np.ndarray:
    """Delta_h f (or the deformed Delta~_h f) at interior nodes."""
    G = P.metric.values(P.centres())
    op = _Operator(P, f if deformed else None, G)
    return op.laplacian(f)


def energy(P: GridProblem, f: np.ndarray) -> float:
    """Discrete Dirichlet energy for the base metric."""
    A, _ = _cell_coefficients(P.metric.values(P.centres()), P.centres())
    return energy_from_stencil(_stencil(A, P.hx, P.hy), f)


# -- solvers ------------------------------------------------------------------
def _boundary_field(P: GridProblem) -> np.ndarray:
    nodes = P.nodes()
    P.metric.chart.require(nodes)
    env = P.metric.chart.env(nodes)
    vals = np.broadcast_to(np.asarray(exprlang.evaluate(P.bc, env), dtype=float), nodes.shape[:2]).copy()
    if not np.all(np.isfinite(vals[[0, -1], :])) or not np.all(np.isfinite(vals[:, [0, -1]])):
        raise ValueError("boundary data is not finite on every boundary node")
    if P.initial == "zero":
        vals[1:-1, 1:-1] = 0.0
    return vals


def _relax(op: _Operator, f: np.ndarray, P: GridProblem, tol: float, energies: Optional[list] = None):
    """SOR until max |Delta_h f| <= tol; returns (sweeps, residual, converged)."""
    res = float(np.max(np.abs(op.laplacian(f)), initial=0.0))
    sweeps = 0
    while res > tol and sweeps < P.max_sweeps:
        _sor_sweep(op.S, f, P.omega)
        sweeps += 1
        if energies is not None:
            energies.append(energy_from_stencil(op.S, f))
        res = float(np.max(np.abs(op.laplacian(f)), initial=0.0))
    return sweeps, res, res <= tol


def solve_base(P: GridProblem, record_energy: bool = False) -> GridSolution:
    """Minimise the discrete energy of the base metric with Dirichlet data."""
    f = _boundary_field(P)
    op = _Operator(P, None, P.metric.values(P.centres()))
    energies = [energy_from_stencil(op.S, f)] if record_energy else None
    sweeps, res, ok = _relax(op, f, P, P.residual_tol, energies)
    sol = GridSolution(P, f, sweeps, res, energies=energies or [], converged=ok)
    if not ok:
        raise SolverNonConvergence(
            f"no convergence after {sweeps} sweeps: max |Delta_h f| = {res:.3e} > {P.residual_tol:g}", sol
        )
    return sol


def solve_deformed(P: GridProblem) -> GridSolution:
    """Picard iteration on Delta~ f = 0 for the metric g - df (x) df.

    Starts from the base-harmonic solution.  Stops once the update is at most
    ``picard_tol`` and the deformed residual is at most ``residual_tol``.
    """
    base = solve_base(P)
    f = base.f
    s0 = nodal_s(P, f)
    if np.max(s0) > INITIAL_S_MARGIN:
        k = np.unravel_index(int(np.argmax(s0)), s0.shape)
        raise ValidityViolation(P.nodes()[k], s0[k])
    G_cells = P.metric.values(P.centres())
    sweeps = base.sweeps
    trace = []
    lin_tol = 0.1 * P.residual_tol
    for it in range(1, P.max_picard + 1):
        op = _Operator(P, f, G_cells)
        new = f.copy()
        n, _, ok = _relax(op, new, P, lin_tol)
        sweeps += n
        if not ok:
            sol = GridSolution(P, f, sweeps, float("nan"), it, trace, converged=False)
            raise SolverNonConvergence(f"linear solve failed in Picard step {it}", sol)
        nxt = P.theta * new + (1.0 - P.theta) * f
        change = float(np.max(np.abs(nxt - f)))
        f = nxt
        s = nodal_s(P, f)
        if np.max(s) >= ABORT_S:
            k = np.unravel_index(int(np.argmax(s)), s.shape)
            raise ValidityViolation(P.nodes()[k], s[k])
        res = float(np.max(np.abs(_Operator(P, f, G_cells).laplacian(f)), initial=0.0))
        trace.append((change, res, float(np.max(s))))
        if change <= P.picard_tol and res <= P.residual_tol:
            return GridSolution(P, f, sweeps, res, it, trace)
    sol = GridSolution(P, f, sweeps, trace[-1][1], P.max_picard, trace, converged=False)
    raise SolverNonConvergence(
        f"Picard iteration did not converge in {P.max_picard} steps (last change {trace[-1][0]:.3e})", sol
    )


def solve(P: GridProblem) -> GridSolution:
    return solve_deformed(P) if P.mode == "deformed" else solve_base(P)


# -- reporting ----------------------------------------------------------------
def sample_report(sol: GridSolution, quantities=("f", "s", "lap", "residual")) -> str:
    """CSV text: header ``x1,x2,<quantities>``, one row per node, x1 outer.

    ``lap`` is the base discrete Laplacian, ``residual`` the discrete
    operator of the solve's mode; both are empty on boundary nodes.
    """
    quantities = tuple(quantities)
    for q in quantities:
        if q not in QUANTITIES:
            raise ValueError(f"unknown quantity {q!r}; choose from {QUANTITIES}")
    P = sol.problem
    nodes = P.nodes()
    cols = {}
    if "f" in quantities:
        cols["f"] = sol.f
    if "s" in quantities:
        cols["s"] = nodal_s(P, sol.f)
    for q, deformed in (("lap", False), ("residual", P.mode == "deformed")):
        if q in quantities:
            full = np.full(sol.f.shape, np.nan)
            full[1:-1, 1:-1] = discrete_laplacian(P, sol.f, deformed)
            cols[q] = full
    coords = list(P.metric.chart.coords)
    buf = io.StringIO()
    buf.write(",".join(coords + list(quantities)) + "\n")
    for i in range(P.nx):
        for j in range(P.ny):
            row = [repr(float(nodes[i, j, 0])), repr(float(nodes[i, j, 1]))]
            for q in quantities:
                v = float(cols[q][i, j])
                row.append("" if math.isnan(v) else repr(v))
            buf.write(",".join(row) + "\n")
    return buf.getvalue()
