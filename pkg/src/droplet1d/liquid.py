"""Incompressible liquid column solver.

In one dimension the divergence-free constraint makes the liquid velocity
spatially uniform and the pressure field exactly linear between the two
interface values, so both are available in closed form. Only the heat
equation needs a discretization: an explicit Euler step with meshfree
second derivatives, Dirichlet temperatures carried by the two extreme
particles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fpm import lsq_fit_widening, second_derivative_3pt
from .physics import DomainError, LiquidSpecies


def pressure_field(p_left: float, p_right: float, x_left: float, x_right: float, x):
    """Linear pressure profile: the solution of p_xx = 0 with Dirichlet ends."""
    if x_right <= x_left:
        raise DomainError("interfaces coincide or are inverted")
    return ((p_right - p_left) / (x_right - x_left) * x
            + (p_right * x_left - p_left * x_right) / (x_left - x_right))


def velocity_update(u: float, dt: float, p_left: float, p_right: float,
                    x_left: float, x_right: float, rho: float) -> float:
    """New uniform liquid velocity from the constant pressure gradient."""
    if x_right <= x_left:
        raise DomainError("interfaces coincide or are inverted")
    return u - dt / rho * (p_right - p_left) / (x_right - x_left)


def temperature_step(x: np.ndarray, T: np.ndarray, T_left: float, T_right: float,
                     dt: float, species: LiquidSpecies, h: float) -> np.ndarray:
    """Explicit Euler step of the liquid heat equation.

    The extreme particles take the interface temperatures as Dirichlet
    values; interior particles advance with the nearest-neighbor parabola
    curvature over liquid points (explicit diffusion needs its sign-definite
    operator, see second_derivative_3pt).
    """
    out = T.copy()
    i_left = int(np.argmin(x))
    i_right = int(np.argmax(x))
    out[i_left] = T_left
    out[i_right] = T_right

    diffusivity = species.thermal_diffusivity
    base = out.copy()
    for i in range(x.size):
        if i == i_left or i == i_right:
            continue
        sel = np.abs(x - x[i]) <= h
        t_xx = second_derivative_3pt(x[sel] - x[i], base[sel])
        out[i] = base[i] + dt * diffusivity * t_xx
    return out


def advect(x: np.ndarray, u: float, dt: float) -> np.ndarray:
    """Move all liquid particles with the common velocity (explicit Euler)."""
    return x + dt * u


def boundary_heat_flux(x: np.ndarray, T: np.ndarray, species: LiquidSpecies,
                       h: float) -> tuple[float, float]:
    """Conductive fluxes -kappa T_x at the left and right ends (one-sided fits)."""
    x_left, x_right = x.min(), x.max()
    sel_l = np.abs(x - x_left) <= h
    sel_r = np.abs(x - x_right) <= h
    fit_l = lsq_fit_widening(x[sel_l] - x_left, T[sel_l], h)
    fit_r = lsq_fit_widening(x[sel_r] - x_right, T[sel_r], h)
    return -species.kappa * fit_l[1], -species.kappa * fit_r[1]


@dataclass
class LiquidState:
    """Droplet state for the kinetic route (standalone particle cloud)."""

    x: np.ndarray
    u: float
    T: np.ndarray
    p_left: float
    p_right: float
    species: LiquidSpecies

    @property
    def x_left(self) -> float:
        return float(self.x.min())

    @property
    def x_right(self) -> float:
        return float(self.x.max())

    def pressure_at(self, x) -> np.ndarray:
        return pressure_field(self.p_left, self.p_right,
                              self.x_left, self.x_right, x)
