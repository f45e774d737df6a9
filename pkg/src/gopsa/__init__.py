"""Geodesic optimization for predictive shift adaptation on SPD matrices."""
