"""Simulation toolkit for a spatial branching system with local regulation."""

from .lattice import (
    DispersalKernel,
    CompetitionKernel,
    ModelParams,
    OccupancyParams,
    colonization_horizon,
    derived_constants,
    dispersed_means,
    make_competition_kernel,
    make_dispersal_kernel,
)
from .rng import RngKeyStream

__version__ = "0.1.0"

__all__ = [
    "DispersalKernel",
    "CompetitionKernel",
    "ModelParams",
    "OccupancyParams",
    "RngKeyStream",
    "colonization_horizon",
    "derived_constants",
    "dispersed_means",
    "make_competition_kernel",
    "make_dispersal_kernel",
]
