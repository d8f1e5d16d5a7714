"""Material properties, equation of state, mean free path and time-step control.

Everything here is shared by the kinetic gas solver, the continuum gas solver
and the liquid solver. All quantities are SI. The gas is a monoatomic
hard-sphere gas; transport coefficients are evaluated once per run at the
initial temperature and then held fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

BOLTZMANN = 1.38e-23  # J/K


class DomainError(ValueError):
    """A physically inadmissible input (non-positive temperature, density, ...)."""


class Algorithm(str, Enum):
    """Which gas model drives the coupled run.

    CONTINUUM ("I"): compressible Navier-Stokes gas coupled to the liquid.
    KINETIC   ("II"): particle-resolved Boltzmann gas coupled to the liquid.
    """

    CONTINUUM = "I"
    KINETIC = "II"


@dataclass(frozen=True)
class GasSpecies:
    """Monoatomic hard-sphere gas.

    m : molecular mass [kg]
    d : molecular diameter [m]
    R : specific gas constant [J/(kg K)]
    k : Boltzmann constant [J/K]
    """

    m: float
    d: float
    R: float
    k: float = BOLTZMANN
    gamma: float = 5.0 / 3.0

    def __post_init__(self) -> None:
        if self.m <= 0 or self.d <= 0 or self.R <= 0:
            raise DomainError("species parameters must be positive")
        if abs(self.k / self.m - self.R) > 0.01 * self.R:
            raise DomainError(
                f"inconsistent gas constant: k/m = {self.k / self.m:.4g}, R = {self.R:.4g}"
            )

    @property
    def c_v(self) -> float:
        """Specific heat at constant volume, (3/2) R for a monoatomic gas."""
        return 1.5 * self.R


@dataclass(frozen=True)
class LiquidSpecies:
    """Incompressible liquid.

    rho   : density [kg/m^3]
    kappa : thermal conductivity [J/(m K s)]
    c_p   : specific heat at constant pressure [J/(kg K)]
    """

    rho: float
    kappa: float
    c_p: float

    def __post_init__(self) -> None:
        if self.rho <= 0 or self.kappa <= 0 or self.c_p <= 0:
            raise DomainError("liquid parameters must be positive")

    @property
    def thermal_diffusivity(self) -> float:
        return self.kappa / (self.rho * self.c_p)


#: Argon, the working gas of all preset scenarios.
ARGON = GasSpecies(m=6.63e-26, d=3.68e-10, R=208.0)


def water_like(rho: float) -> LiquidSpecies:
    """Liquid with the thermal properties of water and a configurable density."""
    return LiquidSpecies(rho=rho, kappa=0.63, c_p=4181.0)


@dataclass(frozen=True)
class GasRegion:
    """A spatial interval [lo, hi) with a uniform initial gas state."""

    lo: float
    hi: float
    rho: float
    u: float
    T: float

    @property
    def p(self) -> float:
        return eos_pressure(self.rho, self.T)


def transport_coefficients(T: float, species: GasSpecies = ARGON) -> tuple[float, float]:
    """Dynamic viscosity and thermal conductivity of the hard-sphere gas at T.

    mu    = 5/(16 d^2) sqrt(m k T / pi)     [Pa s]
    kappa = 15 k / (4 m) * mu               [W/(m K)]

    Evaluated once at the initial temperature of a run and held constant.
    """
    if T <= 0:
        raise DomainError(f"non-positive temperature {T}")
    mu = 5.0 / (16.0 * species.d**2) * math.sqrt(species.m * species.k * T / math.pi)
    kappa = 15.0 * species.k / (4.0 * species.m) * mu
    return mu, kappa


def eos_pressure(rho, T, species: GasSpecies = ARGON):
    """Ideal-gas pressure p = rho R T. Accepts scalars or arrays."""
    if np.any(np.asarray(rho) <= 0) or np.any(np.asarray(T) <= 0):
        raise DomainError("non-positive density or temperature")
    return rho * species.R * T


def eos_temperature(rho, p, species: GasSpecies = ARGON):
    """Ideal-gas temperature T = p / (rho R). Accepts scalars or arrays."""
    if np.any(np.asarray(rho) <= 0) or np.any(np.asarray(p) <= 0):
        raise DomainError("non-positive density or pressure")
    return p / (rho * species.R)


def mean_free_path(rho, species: GasSpecies = ARGON):
    """Hard-sphere mean free path, lambda = m / (sqrt(2) pi d^2 rho)."""
    if np.any(np.asarray(rho) <= 0):
        raise DomainError("non-positive density")
    return species.m / (math.sqrt(2.0) * math.pi * species.d**2 * rho)


def knudsen_number(rho: float, char_length: float, species: GasSpecies = ARGON) -> float:
    """Mean free path over characteristic length."""
    if char_length <= 0:
        raise DomainError("non-positive characteristic length")
    return mean_free_path(rho, species) / char_length


def sound_speed(T, species: GasSpecies = ARGON):
    """Adiabatic sound speed sqrt(gamma R T)."""
    return np.sqrt(species.gamma * species.R * T)


def thermal_speed(T, species: GasSpecies = ARGON):
    """Most probable molecular speed sqrt(2 R T)."""
    return np.sqrt(2.0 * species.R * T)


@dataclass(frozen=True)
class SafetyFactors:
    """Dimensionless prefactors of the time-step bounds and shock capturing.

    c_art_visc scales the grid-scale compression viscosity of the continuum
    gas solver (von Neumann-Richtmyer form, zero in smooth flow).
    """

    c_cfl: float = 0.5
    c_diff: float = 0.25
    c_coll: float = 0.2
    c_art_visc: float = 1.0


@dataclass(frozen=True)
class FieldSummary:
    """Reduction of the current gas field used by the time-step controller.

    max_speed : largest |u| over the gas [m/s]
    max_temperature : largest temperature [K]
    min_spacing : smallest cell width / particle spacing [m]
    rho_min, rho_max : density range [kg/m^3]
    """

    max_speed: float
    max_temperature: float
    min_spacing: float
    rho_min: float
    rho_max: float


def compute_time_step(
    gas: FieldSummary,
    liquid: LiquidSpecies | None,
    species: GasSpecies,
    mode: Algorithm,
    safety: SafetyFactors = SafetyFactors(),
    mu: float | None = None,
    kappa: float | None = None,
) -> float:
    """Global time step shared by both phases within one coupled step.

    Takes the minimum of
      (a) the convective CFL bound c_cfl * dx / (max|u| + c_sound),
      (b) the diffusive bound c_diff * dx^2 / max(diffusivities); the gas
          viscous/conductive terms enter only in CONTINUUM mode, the liquid
          heat diffusivity always,
      (c) in KINETIC mode, the mean-collision-time bound
          c_coll * lambda / sqrt(2 R T) at the densest, hottest state.
    """
    if not (gas.min_spacing > 0 and gas.max_temperature > 0 and gas.rho_max > 0):
        raise DomainError(f"invalid field summary {gas}")
    if gas.rho_min <= 0 or gas.rho_min > gas.rho_max:
        raise DomainError(f"invalid density range in {gas}")

    c = sound_speed(gas.max_temperature, species)
    bounds = [safety.c_cfl * gas.min_spacing / (gas.max_speed + c)]

    diffusivities = []
    if mode is Algorithm.CONTINUUM:
        if mu is None or kappa is None:
            raise DomainError("continuum mode requires frozen mu and kappa")
        diffusivities.append(mu / gas.rho_min)
        diffusivities.append(kappa / (gas.rho_min * species.c_v))
    if liquid is not None:
        diffusivities.append(liquid.thermal_diffusivity)
    if diffusivities:
        bounds.append(safety.c_diff * gas.min_spacing**2 / max(diffusivities))

    if mode is Algorithm.KINETIC:
        lam = mean_free_path(gas.rho_max, species)
        bounds.append(safety.c_coll * lam / thermal_speed(gas.max_temperature, species))

    return min(bounds)
