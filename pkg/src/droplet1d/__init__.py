"""1D two-phase flow: a moving liquid droplet inside a (possibly rarefied) gas.

Two coupled solution routes over the same scenario:

* continuum route ("I"): compressible Navier-Stokes gas, solved with a
  meshfree weighted-least-squares particle discretization, coupled to an
  incompressible liquid column;
* kinetic route ("II"): particle-resolved Boltzmann gas (free flight plus
  binary hard-sphere collisions in cells), coupled to the same liquid solver
  through sampled and smoothed cell moments.
"""

from .physics import (
    ARGON,
    Algorithm,
    DomainError,
    FieldSummary,
    GasRegion,
    GasSpecies,
    LiquidSpecies,
    SafetyFactors,
    compute_time_step,
    eos_pressure,
    eos_temperature,
    knudsen_number,
    mean_free_path,
    transport_coefficients,
    water_like,
)

__all__ = [
    "ARGON",
    "Algorithm",
    "DomainError",
    "FieldSummary",
    "GasRegion",
    "GasSpecies",
    "LiquidSpecies",
    "SafetyFactors",
    "compute_time_step",
    "eos_pressure",
    "eos_temperature",
    "knudsen_number",
    "mean_free_path",
    "transport_coefficients",
    "water_like",
]

__version__ = "0.1.0"
