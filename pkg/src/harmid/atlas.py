"""Model spaces and named example fields.

Models: ``euclidean``, ``hyperbolic`` (upper half space, x_n > 0) and
``sphere_stereo`` (stereographic chart of the round sphere), each for
1 <= n <= 8.  Fields are registered with their parameters baked into the
expression literals; every field carries an expectation table whose rows
are tagged with where the expected value comes from:

* ``closed-form`` - an explicit formula for the example family,
* ``derived`` - follows from a short hand computation,
* ``trivial`` - holds by definition.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import Chart, DomainError, MetricField, ScalarField

__all__ = [
    "MODEL_NAMES",
    "FIELD_NAMES",
    "Model",
    "Expectation",
    "FieldEntry",
    "model",
    "paper_field",
    "sample_points",
    "entry_sample",
    "random_cubic",
    "registry",
]

MODEL_NAMES = ("euclidean", "hyperbolic", "sphere_stereo")
FIELD_NAMES = ("linear_euclidean", "hyperbolic_vertical", "hyperbolic_horizontal", "sphere_test")
MAX_DIM = 8


def _lit(v: float) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _linear_combination(terms) -> str:
    """``sum c * t`` as source text, skipping zero coefficients."""
    out = ""
    for c, t in terms:
        c = float(c)
        if c == 0.0:
            continue
        mag = _lit(abs(c))
        piece = mag if t == "1" else (t if mag == "1" else f"{mag}*{t}")
        if not out:
            out = piece if c > 0 else f"-{piece}"
        else:
            out += f" + {piece}" if c > 0 else f" - {piece}"
    return out or "0"


@dataclass(frozen=True)
class Model:
    name: str
    n: int
    chart: Chart
    metric: MetricField
    box_lower: tuple
    box_upper: tuple
    ricci_factor: float  # Ric = ricci_factor * g

    @property
    def coords(self):
        return self.chart.coords


def model(name: str, n: int) -> Model:
    """Model space ``name`` in dimension ``n``."""
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_DIM:
        raise ValueError(f"dimension must be an integer in 1..{MAX_DIM}, got {n!r}")
    n = int(n)
    coords = tuple(f"x{i + 1}" for i in range(n))
    if name == "euclidean":
        chart = Chart(coords)
        metric = MetricField.diagonal(chart, ["1"] * n)
        box = ((-2.0,) * n, (2.0,) * n)
        ric = 0.0
    elif name == "hyperbolic":
        lower = (-np.inf,) * (n - 1) + (0.0,)
        chart = Chart(coords, lower, (np.inf,) * n)
        metric = MetricField.conformal(chart, f"1/{coords[-1]}^2")
        box = ((-2.0,) * (n - 1) + (0.5,), (2.0,) * (n - 1) + (5.0,))
        ric = -(n - 1.0)
    elif name == "sphere_stereo":
        chart = Chart(coords)
        r2 = " + ".join(f"{c}^2" for c in coords)
        metric = MetricField.conformal(chart, f"4/(1 + {r2})^2")
        box = ((-2.0,) * n, (2.0,) * n)
        ric = n - 1.0
    else:
        raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")
    return Model(name, n, chart, metric, box[0], box[1], ric)


@dataclass(frozen=True)
class Expectation:
    """One row of an expectation table.

    ``quantity`` is a predicate name (``harmonic_c``, ``harmonic_d``) with a
    boolean ``value``, or a pointwise quantity (``s``, ``laplacian``,
    ``residual_d``) whose ``value`` is a callable of the points.
    """

    quantity: str
    value: object
    provenance: str
    anchor: str


@dataclass(frozen=True)
class FieldEntry:
    name: str
    params: dict
    model: Model
    field: ScalarField
    constraints: tuple
    expectations: tuple = field(default=())

    @property
    def chart(self) -> Chart:
        return self.field.chart


def _vec(a) -> tuple:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.ndim != 1 or not np.all(np.isfinite(a)):
        raise ValueError(f"parameter vector must be finite and 1-D, got {a!r}")
    return tuple(float(v) for v in a)


def paper_field(name: str, **params) -> FieldEntry:
    """Named example field with its model, constraints and expectations.

    ``linear_euclidean(a)``: f = sum a_i x_i on R^n, n = len(a), sum a_i^2 < 1.
    ``hyperbolic_vertical(a, b, n)``: f = a + b x_n^(n-1) on H^n, with
    0 < b (n-1) x_n^(n-1) < 1.
    ``hyperbolic_horizontal(a, b, n)``: f = a + b (x_1 + ... + x_(n-1)) on
    H^n, with 0 < (n-1) b^2 x_n^2 < 1.
    ``sphere_test(c, n)``: f = c x_1 / (1 + |x|^2) on the sphere chart, |c| < 2.
    """
    if name == "linear_euclidean":
        a = _vec(params.get("a", (0.6, 0.0)))
        if sum(v * v for v in a) >= 1.0:
            raise ValueError(f"linear_euclidean needs sum a_i^2 < 1, got {sum(v * v for v in a):.17g}")
        M = model("euclidean", len(a))
        expr = _linear_combination(zip(a, M.coords))
        s = sum(v * v for v in a)
        f = ScalarField(M.chart, expr)
        ex = (
            Expectation("harmonic_c", True, "closed-form", "affine function on Euclidean space"),
            Expectation("harmonic_d", True, "closed-form", "affine function on Euclidean space"),
            Expectation("s", lambda p, s=s: np.full(np.shape(p)[:-1], s), "closed-form", "constant gradient norm"),
        )
        return FieldEntry(name, {"a": a}, M, f, (), ex)

    if name in ("hyperbolic_vertical", "hyperbolic_horizontal"):
        a = float(params.get("a", 0.0))
        b = float(params.get("b", 0.1 if name == "hyperbolic_vertical" else 0.2))
        n = int(params.get("n", 2))
        if n < 2:
            raise ValueError(f"{name} needs n >= 2")
        M = model("hyperbolic", n)
        xn = M.coords[-1]
        if name == "hyperbolic_vertical":
            if b <= 0:
                raise ValueError(f"hyperbolic_vertical needs b > 0 for 0 < b(n-1)x_n^(n-1), got b={b!r}")
            mono = xn if n == 2 else f"{xn}^{n - 1}"
            expr = _linear_combination([(a, "1"), (b, mono)])
            k = _lit(b * (n - 1))
            cons = (f"{k}*{mono}", f"1 - {k}*{mono}")
            f = ScalarField(M.chart.with_constraints(*cons), expr)
            s = lambda p, b=b, n=n: (b * (n - 1)) ** 2 * np.asarray(p)[..., -1] ** (2 * n - 2)
            ex = (
                Expectation("harmonic_c", True, "closed-form", "vertical harmonic family on hyperbolic space"),
                Expectation("laplacian", lambda p: np.zeros(np.shape(p)[:-1]), "closed-form",
                            "vertical harmonic family on hyperbolic space"),
                Expectation("s", s, "closed-form", "gradient norm of the vertical family"),
            )
        else:
            if b == 0:
                raise ValueError("hyperbolic_horizontal needs b != 0 for 0 < (n-1) b^2 x_n^2")
            expr = _linear_combination([(a, "1")] + [(b, c) for c in M.coords[:-1]])
            k = _lit((n - 1) * b * b)
            cons = (f"1 - {k}*{xn}^2",)
            f = ScalarField(M.chart.with_constraints(*cons), expr)
            s = lambda p, b=b, n=n: (n - 1) * b * b * np.asarray(p)[..., -1] ** 2
            zero = lambda p: np.zeros(np.shape(p)[:-1])
            ex = (
                Expectation("harmonic_d", True, "closed-form", "horizontal family on hyperbolic space"),
                Expectation("residual_d", zero, "closed-form", "horizontal family on hyperbolic space"),
                Expectation("s", s, "closed-form", "gradient norm of the horizontal family"),
            )
        return FieldEntry(name, {"a": a, "b": b, "n": n}, M, f, cons, ex)

    if name == "sphere_test":
        c = float(params.get("c", 1.0))
        n = int(params.get("n", 2))
        if not 0 < abs(c) < 2:
            raise ValueError(f"sphere_test needs 0 < |c| < 2 so that s <= c^2/4 < 1, got c={c!r}")
        M = model("sphere_stereo", n)
        r2 = " + ".join(f"{x}^2" for x in M.coords)
        expr = f"{_lit(c)}*x1/(1 + {r2})"
        f = ScalarField(M.chart, expr)
        ex = (
            Expectation("harmonic_c", False, "derived",
                        "nonconstant functions on a closed manifold are not harmonic"),
            Expectation("laplacian", lambda p, f=f, n=n: -n * f.values(p), "derived",
                        "first eigenfunction of the round sphere"),
        )
        return FieldEntry(name, {"c": c, "n": n}, M, f, (), ex)

    raise ValueError(f"unknown field {name!r}; choose from {FIELD_NAMES}")


def sample_points(chart: Chart, lower, upper, count: int, seed: int,
                  accept: Optional[Callable] = None, max_rounds: int = 1000) -> np.ndarray:
    """``count`` uniform points of the box that lie in ``chart`` (rejection sampling)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    got = []
    have = 0
    for _ in range(max_rounds):
        cand = rng.uniform(lower, upper, size=(max(2 * count, 16), lower.size))
        ok = chart.contains(cand)
        if accept is not None:
            ok &= accept(cand)
        got.append(cand[ok])
        have += int(ok.sum())
        if have >= count:
            return np.concatenate(got)[:count]
    raise DomainError(f"rejection sampling found only {have} of {count} points in the box")


def entry_sample(entry: FieldEntry, count: int, seed: int) -> np.ndarray:
    M = entry.model
    return sample_points(entry.chart, M.box_lower, M.box_upper, count, seed)


def _monomials(coords, degree: int):
    out = []
    for d in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(coords, d):
            out.append("*".join(combo))
    return out


def random_cubic(M: Model, rng: np.random.Generator, points, target_s: float = 0.5) -> ScalarField:
    """Random polynomial of degree <= 3 scaled so max s over ``points`` is ``target_s``."""
    mons = _monomials(M.coords, 3)
    coef = rng.normal(size=len(mons))
    raw = ScalarField(M.chart, _linear_combination(zip(coef, mons)))
    from .geometry import norm2  # local to keep import graph flat

    smax = float(np.max(norm2(raw, M.metric, points)))
    if smax <= 0:
        return raw
    scale = np.sqrt(target_s / smax)
    return ScalarField(M.chart, _linear_combination(zip(coef * scale, mons)))


def registry() -> dict:
    """Fixed set of named fixtures used by the verification suite."""
    out = {
        "linear_euclidean[a=(0.6,0)]": paper_field("linear_euclidean", a=(0.6, 0.0)),
        "linear_euclidean[a=(0.3,-0.4,0.5)]": paper_field("linear_euclidean", a=(0.3, -0.4, 0.5)),
        "sphere_test[c=1,n=2]": paper_field("sphere_test", c=1.0, n=2),
        "sphere_test[c=1,n=3]": paper_field("sphere_test", c=1.0, n=3),
    }
    for n in (2, 3):
        out[f"hyperbolic_vertical[a=0,b=0.1,n={n}]"] = paper_field("hyperbolic_vertical", a=0.0, b=0.1, n=n)
        out[f"hyperbolic_horizontal[a=0,b=0.2,n={n}]"] = paper_field("hyperbolic_horizontal", a=0.0, b=0.2, n=n)
    return out
