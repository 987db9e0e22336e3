"""Variational ground-state search over tetrahedral POVM outcome
distributions, with momentum-resolved Gram-matrix positivity constraints
and an exact-diagonalization oracle for small rings."""

__version__ = "0.1.0"
