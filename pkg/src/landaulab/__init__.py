"""Desk-scale numerical laboratory for grazing-collision relaxation dynamics.

Submodules
----------
grid        velocity grids, densities, moments, normalization, snapshots
hermite     Gaussian-weighted Hermite transforms and inequality checks
maxwell     reduced Maxwell-molecules solver, moment closed form, L2 decay
landau3d    full pairwise collision operator for power-law potentials
transport   exact and entropic quadratic optimal transport
functionals entropy, singular integrals, contraction constants
harness     experiment runner, functional traces, verification reports
cli         the landau-lab command line
"""

from . import functionals, grid, harness, hermite, landau3d, maxwell, transport
from .grid import (Density, GaussianSpec, MaxwellianSpec, MixtureSpec, VelocityGrid,
                   discretize, lp_norm, make_grid, moments, normalize_to_standard)
from .harness import ExperimentConfig, FunctionalTrace, run

__version__ = "0.1.0"

__all__ = [
    "functionals", "grid", "harness", "hermite", "landau3d", "maxwell",
    "transport", "Density", "GaussianSpec", "MaxwellianSpec", "MixtureSpec",
    "VelocityGrid", "discretize", "lp_norm", "make_grid", "moments",
    "normalize_to_standard", "ExperimentConfig", "FunctionalTrace", "run",
]
