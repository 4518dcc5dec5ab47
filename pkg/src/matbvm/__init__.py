"""Bernstein-von Mises experiments for functionals of covariance matrices."""

__version__ = "0.1.0"
