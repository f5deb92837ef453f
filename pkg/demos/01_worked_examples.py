"""Tour of the closed-form example families.

Run with ``python demos/01_worked_examples.py``.

Deform a metric g to g~ = g - df (x) df.  Two identity maps are of
interest: id: (M, g) -> (M, g~), whose tension we call tension_c, and
id: (M, g~) -> (M, g), whose tension we call tension_d.  This script
evaluates both on the named families and on one field where neither
vanishes.
"""
import numpy as np

from harmid import deform
from harmid.atlas import entry_sample, model, paper_field
from harmid.deform import DeformedMetric
from harmid.geometry import ScalarField


def show(title, D, pts):
    tc = np.max(np.abs(deform.tension_c(D, pts)))
    td = np.max(np.abs(deform.tension_d(D, pts)))
    rd = np.max(np.abs(deform.residual_d(D, pts)))
    print(f"{title:42s} max|tension_c| {tc:9.2e}  max|tension_d| {td:9.2e}  max|residual_d| {rd:9.2e}")


print("Families where one or both identity maps are harmonic (30 sample points each):\n")
for name, kw in [("linear_euclidean", dict(a=(0.6, 0.0))),
                 ("hyperbolic_vertical", dict(b=0.1, n=2)),
                 ("hyperbolic_vertical", dict(b=0.1, n=3)),
                 ("hyperbolic_horizontal", dict(b=0.2, n=2)),
                 ("hyperbolic_horizontal", dict(b=0.2, n=3))]:
    e = paper_field(name, **kw)
    show(f"{name} {kw}", DeformedMetric(e.model.metric, e.field), entry_sample(e, 30, 0))

print("""
The vertical family f = b*x_n^(n-1) is harmonic for the base metric, so
tension_c vanishes, but tension_d does not.  For the horizontal family it is
the other way round.  Only affine fields on flat space kill both.
""")

E = model("euclidean", 2)
D = DeformedMetric(E.metric, ScalarField(E.chart, "0.1*(x1^2 + x2^2)"))
p = np.array([[1.0, 1.0]])
print("A field that is harmonic for neither metric: f = 0.1 (x1^2 + x2^2), at (1, 1)")
print("  s = |grad f|^2          =", float(deform.Ingredients.build(D, p).s.value[0]))
print("  residual_d              =", float(deform.residual_d(D, p)[0]), "(hand value 0.384)")
print("  tension_c               =", deform.tension_c(D, p)[0])
print("  tension_d               =", deform.tension_d(D, p)[0])
print("  deformed Laplacian of f =", float(deform.deformed_laplacian(D, p)[0]))
print("tension_d is the deformed Laplacian of f times grad f:",
      np.allclose(deform.tension_d(D, p), deform.deformed_laplacian(D, p)[:, None] * np.array([[0.2, 0.2]])))
