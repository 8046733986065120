"""pamlab: a desk-scale laboratory for the parabolic Anderson model on lattice boxes."""

from pamlab.lattice import BoundaryCondition, BoxSpec, HamiltonianMatrix, build_box, hamiltonian
from pamlab.tails import DoubleExponential, Pareto, Weibull

__all__ = [
    "BoundaryCondition",
    "BoxSpec",
    "HamiltonianMatrix",
    "build_box",
    "hamiltonian",
    "Weibull",
    "DoubleExponential",
    "Pareto",
]

__version__ = "0.1.0"
