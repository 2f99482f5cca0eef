"""Monte Carlo and exact-enumeration laboratory for small singular values of
powers of Gaussian matrices."""

__version__ = "0.1.0"
