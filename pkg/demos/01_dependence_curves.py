"""Extremal coefficient curves and practical ranges for several max-stable models.

Run: python demos/01_dependence_curves.py
"""
import numpy as np

from spatial_extremes import (
    BrownResnick, CorrelationSpec, GeometricGaussian, Schlather, Smith, VariogramSpec,
    extremal_coefficient, practical_range,
)

models = {
    "smith": Smith(150.0),
    "schlather": Schlather(CorrelationSpec("whittle_matern", 20.0, 1.0)),
    "brown_resnick": BrownResnick(VariogramSpec(20.0, 1.0)),
    "geometric_gaussian": GeometricGaussian(1.5, CorrelationSpec("whittle_matern", 20.0, 1.0)),
}

h = np.array([1.0, 5.0, 10.0, 20.0, 50.0, 100.0])
print("distance (km): " + "  ".join(f"{d:6.0f}" for d in h))
for name, spec in models.items():
    theta = [extremal_coefficient(np.array([d, 0.0]), spec) for d in h]
    lo, hi = practical_range(spec)
    print(f"{name:>18}: " + "  ".join(f"{t:6.3f}" for t in theta)
          + f"   theta=1.3 at {lo:.1f} km, theta=1.7 at {hi:.1f} km")
