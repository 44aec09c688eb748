"""Numerical experiments on the Weyl law for exponentially small singular
values of h dbar + dbar(phi) on the flat torus."""

__version__ = "0.1.0"
