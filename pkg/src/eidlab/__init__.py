"""Numerical laboratory for energy image density on graphs and fractals."""
__version__ = "0.1.0"
