"""Geometry of Cartan spaces on the cotangent bundle, verified numerically."""
