"""JSON manifests describing a chart, a metric and a scalar field.

Example::

    {
      "dimension": 2,
      "coordinates": ["x1", "x2"],
      "model": "hyperbolic",
      "field": {"name": "hyperbolic_horizontal", "params": {"b": 0.2}},
      "domain": {"lower": [-1, 0.5], "upper": [1, 2], "constraints": []},
      "points": [[1, 2]],
      "seed": 0,
      "tolerances": {"check": 1e-8, "residual": 1e-8, "picard": 1e-11}
    }

Exactly one of ``metric`` (lower-triangular rows of expressions) and
``model`` (a name, or ``{"name": ..., "n": ...}``) is required.  Exactly one
of ``f`` and ``field`` is required, except that commands which do not need a
field (``solve``) accept neither.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import atlas, exprlang
from .deform import DeformedMetric
from .geometry import Chart, MetricField, ScalarField

__all__ = ["ManifestError", "Manifest", "load_manifest", "parse_manifest"]

KNOWN_KEYS = {"dimension", "coordinates", "metric", "model", "f", "field", "domain", "points", "seed",
              "tolerances"}


class ManifestError(ValueError):
    """Invalid manifest; ``where`` names the offending key and position."""

    def __init__(self, message: str, where: str = ""):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


@dataclass
class Manifest:
    chart: Chart
    metric: MetricField
    field: Optional[ScalarField]
    box_lower: tuple
    box_upper: tuple
    points: Optional[np.ndarray] = None
    seed: Optional[int] = None
    tolerances: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.chart.dim

    def deformed(self) -> DeformedMetric:
        if self.field is None:
            raise ManifestError("this command needs a scalar field ('f' or 'field')")
        return DeformedMetric(self.metric, self.field)

    def sample_chart(self) -> Chart:
        return self.field.chart if self.field is not None else self.chart


def load_manifest(path, need_field: bool = True) -> Manifest:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest: {exc.strerror}", str(path)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"invalid JSON: {exc.msg}", f"line {exc.lineno}, column {exc.colno}") from None
    return parse_manifest(data, need_field)


def _expr(text, where: str):
    if not isinstance(text, str):
        raise ManifestError("expected an expression string", where)
    try:
        return exprlang.parse(text)
    except exprlang.ExprSyntaxError as exc:
        raise ManifestError(str(exc), f"{where} offset {exc.offset}") from None


def _floats(v, n: int, where: str) -> tuple:
    try:
        out = tuple(float(x) for x in v)
    except (TypeError, ValueError):
        raise ManifestError("expected a list of numbers", where) from None
    if len(out) != n:
        raise ManifestError(f"expected {n} numbers, got {len(out)}", where)
    return out


def parse_manifest(data, need_field: bool = True) -> Manifest:
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a JSON object")
    unknown = sorted(set(data) - KNOWN_KEYS)
    if unknown:
        raise ManifestError(f"unknown keys {unknown}")
    if ("metric" in data) == ("model" in data):
        raise ManifestError("exactly one of 'metric' and 'model' is required")
    if "f" in data and "field" in data:
        raise ManifestError("give only one of 'f' and 'field'")
    if need_field and "f" not in data and "field" not in data:
        raise ManifestError("one of 'f' and 'field' is required")

    dim = data.get("dimension")
    model = None
    if "model" in data:
        spec = data["model"]
        name, n = (spec, dim) if isinstance(spec, str) else (spec.get("name"), spec.get("n", dim))
        if n is None:
            raise ManifestError("model dimension missing", "model")
        try:
            model = atlas.model(name, int(n))
        except (ValueError, TypeError) as exc:
            raise ManifestError(str(exc), "model") from None
        dim = model.n
    if not isinstance(dim, int) or dim < 1:
        raise ManifestError("'dimension' must be a positive integer", "dimension")
    if dim != data.get("dimension", dim):
        raise ManifestError(f"model dimension {dim} differs from 'dimension'", "dimension")

    coords = tuple(data.get("coordinates", [f"x{i + 1}" for i in range(dim)]))
    if len(coords) != dim:
        raise ManifestError(f"expected {dim} coordinate names", "coordinates")
    if model is not None and coords != model.coords:
        raise ManifestError(f"model charts use coordinates {list(model.coords)}", "coordinates")

    dom = data.get("domain", {})
    if not isinstance(dom, dict):
        raise ManifestError("expected an object", "domain")
    lower = dom.get("lower")
    upper = dom.get("upper")
    cons = [_expr(c, f"domain.constraints[{k}]") for k, c in enumerate(dom.get("constraints", []))]
    try:
        if model is not None:
            box_lo = _floats(lower, dim, "domain.lower") if lower is not None else model.box_lower
            box_hi = _floats(upper, dim, "domain.upper") if upper is not None else model.box_upper
            chart = model.chart.with_constraints(*cons) if cons else model.chart
            metric = MetricField(chart, [[model.metric.component(i, j) for j in range(i + 1)] for i in range(dim)])
        else:
            if lower is None or upper is None:
                raise ManifestError("a custom metric needs domain.lower and domain.upper", "domain")
            box_lo = _floats(lower, dim, "domain.lower")
            box_hi = _floats(upper, dim, "domain.upper")
            chart = Chart(coords, box_lo, box_hi, tuple(cons))
            rows = data["metric"]
            if not isinstance(rows, list) or len(rows) != dim:
                raise ManifestError(f"expected {dim} lower-triangular rows", "metric")
            entries = []
            for i, row in enumerate(rows):
                if not isinstance(row, list) or len(row) != i + 1:
                    raise ManifestError(f"row {i} must have {i + 1} entries", "metric")
                entries.append([_expr(e, f"metric[{i}][{j}]") for j, e in enumerate(row)])
            metric = MetricField(chart, entries)
    except exprlang.UnboundVariable as exc:
        raise ManifestError(str(exc), "expressions") from None
    except ValueError as exc:
        if isinstance(exc, ManifestError):
            raise
        raise ManifestError(str(exc), "domain") from None

    f = None
    if "f" in data:
        try:
            f = ScalarField(chart, _expr(data["f"], "f"))
        except exprlang.UnboundVariable as exc:
            raise ManifestError(str(exc), "f") from None
    elif "field" in data:
        spec = data["field"]
        if not isinstance(spec, dict) or "name" not in spec:
            raise ManifestError("expected {'name': ..., 'params': {...}}", "field")
        params = dict(spec.get("params", {}))
        if spec["name"] != "linear_euclidean":
            params.setdefault("n", dim)
        try:
            entry = atlas.paper_field(spec["name"], **params)
        except (ValueError, TypeError) as exc:
            raise ManifestError(str(exc), "field") from None
        if model is None or entry.model.name != model.name or entry.model.n != dim:
            raise ManifestError(f"field {spec['name']!r} belongs to model {entry.model.name}({entry.model.n})",
                                "field")
        f = ScalarField(chart.with_constraints(*entry.chart.constraints[len(model.chart.constraints):]),
                        entry.field.expr)

    points = None
    if "points" in data:
        try:
            points = np.asarray(data["points"], dtype=float).reshape(-1, dim)
        except (TypeError, ValueError):
            raise ManifestError(f"expected a list of {dim}-vectors", "points") from None
    seed = data.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise ManifestError("seed must be an integer", "seed")
    tols = data.get("tolerances", {})
    if not isinstance(tols, dict):
        raise ManifestError("expected an object", "tolerances")
    return Manifest(chart, metric, f, tuple(box_lo), tuple(box_hi), points, seed,
                    {k: float(v) for k, v in tols.items()})
