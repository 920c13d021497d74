"""Reaction dynamics from VQE energies, correlated-sampling forces and Hessians."""

__version__ = "0.1.0"
