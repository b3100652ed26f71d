"""Numerical laboratory for the semiclassical and mean-field limits of
Coulomb systems: Hartree vs. pressureless Euler-Poisson vs. classical N-body."""

__version__ = "0.1.0"
