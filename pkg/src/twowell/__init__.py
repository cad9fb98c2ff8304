"""Discrete two-well lattice energies: evaluation, minimization and diagnostics."""
from .wells import WellSystem, make_wells
from .lattice import Deformation, LatticeDomain, build_domain, standard_domain
from .energy import hamiltonian, total_energy

__version__ = "0.1.0"

__all__ = [
    "WellSystem",
    "make_wells",
    "Deformation",
    "LatticeDomain",
    "build_domain",
    "standard_domain",
    "hamiltonian",
    "total_energy",
]
