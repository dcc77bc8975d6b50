"""Desk-scale numerical laboratory for long-range collisional kinetics.

Subpackages cover exact exponent arithmetic, velocity-grid quadrature,
hyperplane collision kernels, the truncated convex machinery, two-sided
inequality checks, decay barriers and a small space-inhomogeneous solver.
"""

__version__ = "0.1.0"
