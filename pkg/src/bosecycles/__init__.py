"""Permutation-cycle statistics of Bose gases: exact recursions, lattice
exact diagonalization, path-integral sampling and free-energy bounds."""

__version__ = "0.1.0"
