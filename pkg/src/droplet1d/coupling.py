"""Interface reconstruction and the two coupled run orchestrators.

The liquid column always runs the incompressible solver. For the gas there
are two routes, selected per run: the continuum route advances compressible
Navier-Stokes on meshfree particles; the kinetic route advances molecules
with free flight and hard-sphere collisions and reads macroscopic fields
from smoothed cell moments. Both exchange the same pair of interface
quantities with the liquid each step: the interfacial pressure (normal
momentum flux) and the interfacial temperature with flux-matched one-sided
gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dsmc, fpm, liquid
from .physics import (
    Algorithm,
    FieldSummary,
    compute_time_step,
    eos_pressure,
    mean_free_path,
    transport_coefficients,
)
from .scenarios import OutputFrame, ScenarioConfig, WallSpec

#: active cell centers used for interfacial extrapolation in the kinetic route
KINETIC_STENCIL_CELLS = 4

#: smoothed fields handed from the kinetic gas to the coupling
SMOOTHED_FIELDS = ("rho", "u1", "T", "p", "phi11", "q1")


class InterfaceStateError(RuntimeError):
    """The liquid column degenerated (fewer than two particles)."""


class ReconstructionError(RuntimeError):
    """Interfacial extrapolation has no usable gas information."""


@dataclass
class InterfaceState:
    """Both interface positions plus the interfacial data of one step."""

    x_left: float
    x_right: float
    u: float
    T_left: float
    T_right: float
    p_left: float
    p_right: float
    source: str  # "I" (continuum) or "II" (kinetic)


def detect_interface(x_liquid: np.ndarray) -> tuple[float, float]:
    """Extreme liquid particle positions, re-evaluated every step."""
    if x_liquid.size < 2:
        raise InterfaceStateError(
            f"need at least two liquid particles, have {x_liquid.size}")
    return float(x_liquid.min()), float(x_liquid.max())


def _one_sided(x: np.ndarray, x_i: float, side: str, h: float) -> np.ndarray:
    if side == "left":
        sel = (x < x_i) & (x >= x_i - h)
    else:
        sel = (x > x_i) & (x <= x_i + h)
    return np.flatnonzero(sel)


def interface_pressure_continuum(
    x_gas: np.ndarray, p_gas: np.ndarray, u_gas: np.ndarray,
    x_i: float, side: str, mu: float, h: float,
    u_interface: float | None = None,
) -> float:
    """Interfacial pressure from the gas side: p_hat - (4/3) mu du/dx.

    Pressure and velocity are least-squares extrapolated to the interface
    from one-sided gas stencils; the interface velocity, when known, joins
    the velocity stencil as a Dirichlet row.
    """
    for radius in (h, fpm.WIDEN_FACTOR * h):
        sel = _one_sided(x_gas, x_i, side, radius)
        if sel.size >= 3:
            break
    else:
        raise ReconstructionError(
            f"only {sel.size} gas particles within reach of x = {x_i:.6g}")
    dx = x_gas[sel] - x_i
    p_fit = fpm.lsq_fit_widening(dx, p_gas[sel], radius)
    du_rows = dx
    u_rows = u_gas[sel]
    if u_interface is not None:
        du_rows = np.concatenate((du_rows, [0.0]))
        u_rows = np.concatenate((u_rows, [u_interface]))
    u_fit = fpm.lsq_fit_widening(du_rows, u_rows, radius)
    return float(p_fit[0] - (4.0 / 3.0) * mu * u_fit[1])


def _nearest_active(centers: np.ndarray, values: np.ndarray, active: np.ndarray,
                    x_i: float, side: str, count: int) -> tuple[np.ndarray, np.ndarray]:
    if side == "left":
        sel = np.flatnonzero(active & (centers < x_i))
    else:
        sel = np.flatnonzero(active & (centers > x_i))
    if sel.size < 2:
        raise ReconstructionError(
            f"only {sel.size} active cells on the {side} side of x = {x_i:.6g}")
    order = np.argsort(np.abs(centers[sel] - x_i))[:count]
    chosen = sel[order]
    return centers[chosen] - x_i, values[chosen]


def _soft_weight(dx: np.ndarray, h: float) -> np.ndarray:
    """Gaussian weight without the compact-support cutoff.

    Interfacial fits already select their k nearest rows, so a hard cutoff
    could zero out every row and lose the system; the soft tail keeps it
    solvable while still favoring near points.
    """
    return np.exp(-2.0 * (dx / h) ** 2)


def _linear_value_at(dx: np.ndarray, values: np.ndarray, h: float) -> np.ndarray:
    """Weighted linear fit; value(s) at dx = 0. values may be (n,) or (n, k)."""
    w = _soft_weight(dx, h)
    basis = np.column_stack((np.ones_like(dx), dx / h))
    aw = basis * w[:, None]
    m = aw.T @ basis
    coef = np.linalg.solve(m, aw.T @ values)
    return coef[0]


def interface_pressure_kinetic(
    centers: np.ndarray, phi11: np.ndarray, active: np.ndarray,
    x_i: float, side: str, h: float,
) -> float:
    """Interfacial pressure as the extrapolated normal stress moment."""
    dx, vals = _nearest_active(centers, phi11, active, x_i, side,
                               KINETIC_STENCIL_CELLS)
    return float(_linear_value_at(dx, vals, h))


def interface_temperature_continuum(
    x_gas: np.ndarray, T_gas: np.ndarray,
    x_liq: np.ndarray, T_liq: np.ndarray,
    kappa_gas: float, kappa_liq: float, x_i: float, h: float,
) -> tuple[float, float, float]:
    """Interface temperature with conductive-flux-matched gradients.

    Solves the weighted least-squares system of first-order Taylor rows
    T_side = T_i + dx * s_side over both one-sided neighborhoods, with the
    flux continuity kappa_l s_l = kappa_g s_g eliminated exactly.
    Returns (T_i, s_gas, s_liquid).
    """
    gas_sel = np.flatnonzero((np.abs(x_gas - x_i) <= h) & (x_gas != x_i))
    liq_sel = np.flatnonzero((np.abs(x_liq - x_i) <= h) & (x_liq != x_i))
    if gas_sel.size < 2 or liq_sel.size < 2:
        raise ReconstructionError(
            f"need 2+2 neighbors at x = {x_i:.6g}, have "
            f"{gas_sel.size} gas and {liq_sel.size} liquid")
    ratio = kappa_gas / kappa_liq  # s_l = ratio * s_g
    dx_g = x_gas[gas_sel] - x_i
    dx_l = x_liq[liq_sel] - x_i
    rows_dx = np.concatenate((dx_g, dx_l))
    slope_col = np.concatenate((dx_g, ratio * dx_l))
    values = np.concatenate((T_gas[gas_sel], T_liq[liq_sel]))
    t_i, s_gas = _solve_two_column(rows_dx, slope_col, values, h)
    return t_i, s_gas, ratio * s_gas


def interface_temperature_kinetic(
    centers: np.ndarray, T_cells: np.ndarray, active: np.ndarray,
    x_liq: np.ndarray, T_liq: np.ndarray,
    kappa_liq: float, q_gas: float, x_i: float, side: str, h: float,
) -> tuple[float, float, float]:
    """Interface temperature with the liquid gradient pinned by the gas heat flux.

    The kinetic side supplies the interfacial heat flux directly, fixing
    s_l = -q_gas / kappa_l; the remaining unknowns (T_i, s_gas) come from the
    weighted least-squares system over smoothed gas cell temperatures and
    liquid particle temperatures. Returns (T_i, s_gas, s_liquid).
    """
    s_liq = -q_gas / kappa_liq
    dx_g, T_g = _nearest_active(centers, T_cells, active, x_i, side,
                                KINETIC_STENCIL_CELLS)
    liq_sel = np.flatnonzero((np.abs(x_liq - x_i) <= h) & (x_liq != x_i))
    if liq_sel.size < 2:
        raise ReconstructionError(
            f"need 2 liquid neighbors at x = {x_i:.6g}, have {liq_sel.size}")
    dx_l = x_liq[liq_sel] - x_i
    rows_dx = np.concatenate((dx_g, dx_l))
    slope_col = np.concatenate((dx_g, np.zeros(dx_l.size)))
    values = np.concatenate((T_g, T_liq[liq_sel] - dx_l * s_liq))
    t_i, s_gas = _solve_two_column(rows_dx, slope_col, values, h)
    return t_i, s_gas, s_liq


def _solve_two_column(rows_dx, slope_col, values, h) -> tuple[float, float]:
    """Weighted least squares for (value at 0, slope) with given slope column."""
    w = _soft_weight(rows_dx, h)
    basis = np.column_stack((np.ones_like(rows_dx), slope_col / h))
    aw = basis * w[:, None]
    m = aw.T @ basis
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > fpm.CONDITION_LIMIT:
        raise ReconstructionError(f"interface system condition {cond:.2e}")
    coef = np.linalg.solve(m, aw.T @ values)
    return float(coef[0]), float(coef[1] / h)


@dataclass
class RunTrace:
    """Per-step time series of the interface quantities."""

    t: list = field(default_factory=list)
    x_left: list = field(default_factory=list)
    x_right: list = field(default_factory=list)
    u_liquid: list = field(default_factory=list)
    p_left: list = field(default_factory=list)
    p_right: list = field(default_factory=list)
    T_left: list = field(default_factory=list)
    T_right: list = field(default_factory=list)
    jump_left: list = field(default_factory=list)
    jump_right: list = field(default_factory=list)

    def append(self, t, state: InterfaceState, jump_left, jump_right):
        self.t.append(t)
        self.x_left.append(state.x_left)
        self.x_right.append(state.x_right)
        self.u_liquid.append(state.u)
        self.p_left.append(state.p_left)
        self.p_right.append(state.p_right)
        self.T_left.append(state.T_left)
        self.T_right.append(state.T_right)
        self.jump_left.append(jump_left)
        self.jump_right.append(jump_right)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(getattr(self, k)) for k in (
            "t", "x_left", "x_right", "u_liquid", "p_left", "p_right",
            "T_left", "T_right", "jump_left", "jump_right")}


@dataclass
class RunResult:
    frames: list[OutputFrame]
    trace: RunTrace
    metadata: dict


def _output_schedule(config: ScenarioConfig) -> list[float]:
    times = sorted(set(config.output_times))
    return times


def _next_stop(t: float, schedule: list[float], t_end: float) -> float:
    for ts in schedule:
        if ts > t * (1 + 1e-12) + 1e-300:
            return ts
    return t_end


def _frame_grid(config: ScenarioConfig) -> np.ndarray:
    return np.linspace(config.a, config.b, config.grid_points)


def _base_meta(config: ScenarioConfig, algorithm: str) -> dict:
    kn = config.knudsen_numbers()
    return {
        "algorithm": algorithm,
        "seed": config.seed,
        "scenario": config.name,
        "kn": [round(v, 6) for v in kn.values()],
    }


# ---------------------------------------------------------------------------
# continuum route (coupled compressible / incompressible solver)
# ---------------------------------------------------------------------------


def _init_particles(config: ScenarioConfig) -> fpm.FpmParticleSet:
    dx = config.dx
    n_left = int(round((config.liquid_lo - config.a) / dx))
    n_liq = int(round((config.liquid_hi - config.liquid_lo) / dx))
    n_right = int(round((config.b - config.liquid_hi) / dx))
    x_left = config.a + dx * np.arange(n_left)
    x_liq = np.linspace(config.liquid_lo, config.liquid_hi, n_liq + 1)
    x_right = config.liquid_hi + dx * np.arange(1, n_right + 1)

    x = np.concatenate((x_left, x_liq, x_right))
    flag = np.concatenate((
        np.full(n_left, fpm.GAS), np.full(n_liq + 1, fpm.LIQUID),
        np.full(n_right, fpm.GAS))).astype(np.int8)
    rho = np.empty_like(x)
    u = np.empty_like(x)
    T = np.empty_like(x)
    for i, xi in enumerate(x):
        if flag[i] == fpm.LIQUID:
            rho[i], u[i], T[i] = (config.liquid_species.rho, config.liquid_u,
                                  config.liquid_T)
        else:
            reg = config.region_at(xi)
            rho[i], u[i], T[i] = reg.rho, reg.u, reg.T
    p = np.where(flag == fpm.GAS, rho * config.species.R * T, config.liquid_p)
    anchored = np.zeros(x.size, dtype=bool)
    anchored[0] = anchored[-1] = True

    pset = fpm.FpmParticleSet(x=x, rho=rho, u=u, T=T, p=p, flag=flag,
                              dx0=dx, anchored=anchored)
    # wall anchors carry the boundary values
    for pos, wall in ((0, config.wall_left), (-1, config.wall_right)):
        if wall.u is not None:
            pset.u[pos] = wall.u
        if wall.T is not None:
            pset.T[pos] = wall.T
    return pset.sort()


def _continuum_summary(pset: fpm.FpmParticleSet, u_liq: float) -> FieldSummary:
    gas = pset.flag == fpm.GAS
    spacing = np.diff(pset.x)
    return FieldSummary(
        max_speed=max(float(np.abs(pset.u[gas]).max()), abs(u_liq)),
        max_temperature=float(pset.T[gas].max()),
        min_spacing=float(spacing[spacing > 0].min()),
        rho_min=float(pset.rho[gas].min()),
        rho_max=float(pset.rho[gas].max()),
    )


def _wall_setup(config: ScenarioConfig):
    """Anchor pinning, mirrors and fill points per wall kind."""
    mirrors = [fpm.MirrorSpec(x=config.a, side=0, fields=("rho",)),
               fpm.MirrorSpec(x=config.b, side=1, fields=("rho",))]
    pin_u = [True, True]
    fill = []
    for side, wall in enumerate((config.wall_left, config.wall_right)):
        xw = config.a if side == 0 else config.b
        if wall.kind == "outflow":
            pin_u[side] = False
            mirrors.append(fpm.MirrorSpec(x=xw, side=side, fields=("u",)))
        if wall.kind in ("inflow", "outflow"):
            fill.append(fpm.DirichletPoint(x=xw, u=wall.u, T=wall.T))
    anchor = fpm.AnchorSpec(pin_u_left=pin_u[0], pin_u_right=pin_u[1],
                            pin_T_left=True, pin_T_right=True)
    return anchor, mirrors, fill


def run_continuum(config: ScenarioConfig) -> RunResult:
    """Coupled compressible gas / incompressible liquid run ("I")."""
    species = config.species
    liq_species = config.liquid_species
    if config.transport_override is not None:
        mu, kappa = config.transport_override
    else:
        mu, kappa = transport_coefficients(config.initial_gas_temperature(), species)
    kappa_liq = liq_species.kappa

    pset = _init_particles(config)
    anchor, mirrors, wall_fill = _wall_setup(config)
    schedule = _output_schedule(config)
    grid_x = _frame_grid(config)
    trace = RunTrace()
    frames: list[OutputFrame] = []
    meta = _base_meta(config, Algorithm.CONTINUUM.value)
    meta.update({"mu": mu, "kappa": kappa, "particles": int(pset.n),
                 "liquid_particles_initial": int(pset.liquid_indices().size),
                 "gas_mass_initial": _gas_mass(pset, config)})

    t = 0.0
    steps = 0
    if any(math.isclose(ts, 0.0, abs_tol=1e-30) for ts in schedule):
        frames.append(_continuum_frame(pset, config, grid_x, t, meta))

    while t < config.t_end * (1 - 1e-12):
        pset.sort()
        liq_idx = pset.liquid_indices()
        x_l_arr = pset.x[liq_idx]
        x_left, x_right = detect_interface(x_l_arr)
        u_i = float(pset.u[liq_idx[0]])
        T_i_left = float(pset.T[liq_idx[np.argmin(x_l_arr)]])
        T_i_right = float(pset.T[liq_idx[np.argmax(x_l_arr)]])

        summary = _continuum_summary(pset, u_i)
        dt = compute_time_step(summary, liq_species, species,
                               Algorithm.CONTINUUM, config.safety,
                               mu=mu, kappa=kappa)
        dt = min(dt, _next_stop(t, schedule, config.t_end) - t)

        dirichlet = [fpm.DirichletPoint(x=x_left, u=u_i, T=T_i_left),
                     fpm.DirichletPoint(x=x_right, u=u_i, T=T_i_right)]

        def rhs(state):
            trial = pset.copy()
            trial.x, trial.rho, trial.u, trial.T = state
            return fpm.compressible_rhs(trial, species, mu, kappa, dirichlet,
                                        mirrors, (x_left, x_right), anchor,
                                        art_visc=config.safety.c_art_visc)

        state = (pset.x, pset.rho, pset.u, pset.T)
        for attempt in range(2):
            new_state = fpm.heun_step(state, rhs, dt)
            gas = pset.flag == fpm.GAS
            if (np.all(new_state[1][gas] > 0.0) and np.all(new_state[3][gas] > 0.0)):
                break
            dt *= 0.5
        else:
            raise fpm.StepRejectedError(
                f"negative gas density/temperature at t = {t:.4e}")
        pset.x, pset.rho, pset.u, pset.T = new_state
        gas = pset.flag == fpm.GAS
        pset.p[gas] = pset.rho[gas] * species.R * pset.T[gas]

        pset.sort()
        gas = pset.flag == fpm.GAS
        xg, pg, ug, Tg = (pset.x[gas], pset.p[gas], pset.u[gas], pset.T[gas])
        p_left = interface_pressure_continuum(xg, pg, ug, x_left, "left",
                                              mu, pset.h, u_interface=u_i)
        p_right = interface_pressure_continuum(xg, pg, ug, x_right, "right",
                                               mu, pset.h, u_interface=u_i)
        liq_idx = pset.liquid_indices()
        xl, Tl = pset.x[liq_idx], pset.T[liq_idx]
        T_left_new, sg_l, _ = interface_temperature_continuum(
            xg, Tg, xl, Tl, kappa, kappa_liq, x_left, pset.h)
        T_right_new, sg_r, _ = interface_temperature_continuum(
            xg, Tg, xl, Tl, kappa, kappa_liq, x_right, pset.h)

        # liquid update: new pressure/velocity fields, explicit heat step,
        # positions advanced with the pre-update velocity
        u_old = u_i
        u_new = liquid.velocity_update(u_old, dt, p_left, p_right,
                                       x_left, x_right, liq_species.rho)
        T_liq_new = liquid.temperature_step(xl, Tl, T_left_new, T_right_new,
                                            dt, liq_species, pset.h)
        x_liq_new = liquid.advect(xl, u_old, dt)
        pset.x[liq_idx] = x_liq_new
        pset.u[liq_idx] = u_new
        pset.T[liq_idx] = T_liq_new
        pset.rho[liq_idx] = liq_species.rho
        new_left, new_right = detect_interface(x_liq_new)
        pset.p[liq_idx] = liquid.pressure_field(p_left, p_right,
                                                new_left, new_right, x_liq_new)

        _enforce_bounds(pset, config)
        pset.sort()
        pset, _ = fpm.manage_particles(pset, species,
                                       interface=(new_left, new_right),
                                       wall_fill=wall_fill or None)

        t += dt
        steps += 1
        jump_l = _continuum_jump(pset, x_left, "left", T_left_new)
        jump_r = _continuum_jump(pset, x_right, "right", T_right_new)
        state_rec = InterfaceState(
            x_left=new_left, x_right=new_right, u=u_new,
            T_left=T_left_new, T_right=T_right_new,
            p_left=p_left, p_right=p_right, source=Algorithm.CONTINUUM.value)
        trace.append(t, state_rec, jump_l, jump_r)
        if any(math.isclose(t, ts, rel_tol=1e-9) for ts in schedule):
            frames.append(_continuum_frame(pset, config, grid_x, t, meta))

    meta["steps"] = steps
    meta["liquid_particles_final"] = int(pset.liquid_indices().size)
    meta["gas_mass_final"] = _gas_mass(pset, config)
    meta["final_interface"] = {
        "x_left": trace.x_left[-1], "x_right": trace.x_right[-1],
        "u": trace.u_liquid[-1]}
    return RunResult(frames=frames, trace=trace, metadata=meta)


def _gas_mass(pset: fpm.FpmParticleSet, config: ScenarioConfig) -> float:
    """Discrete Lagrangian gas mass: sum of rho_i times half-gap volume shares.

    Each of the two gas segments is bounded by a wall and an interface; end
    particles absorb the leftover strip to their segment boundary.
    """
    liq = pset.liquid_indices()
    x_left, x_right = detect_interface(pset.x[liq])
    total = 0.0
    for seg_lo, seg_hi in ((config.a, x_left), (x_right, config.b)):
        sel = (pset.flag == fpm.GAS) & (pset.x >= seg_lo) & (pset.x <= seg_hi)
        x = np.sort(pset.x[sel])
        rho = pset.rho[sel][np.argsort(pset.x[sel], kind="stable")]
        if x.size == 0:
            continue
        shares = np.empty(x.size)
        if x.size == 1:
            shares[0] = seg_hi - seg_lo
        else:
            shares[1:-1] = 0.5 * (x[2:] - x[:-2])
            shares[0] = (x[0] - seg_lo) + 0.5 * (x[1] - x[0])
            shares[-1] = (seg_hi - x[-1]) + 0.5 * (x[-1] - x[-2])
        total += float(np.sum(rho * shares))
    return total


def _continuum_jump(pset, x_i, side, T_i) -> float:
    """Unconstrained gas-side temperature extrapolation minus the solved T_i."""
    gas = pset.flag == fpm.GAS
    try:
        sel = _one_sided(pset.x[gas], x_i, side, pset.h)
        if sel.size < 3:
            return float("nan")
        dx = pset.x[gas][sel] - x_i
        fit = fpm.lsq_fit_widening(dx, pset.T[gas][sel], pset.h)
        return float(fit[0] - T_i)
    except fpm.StencilError:
        return float("nan")


def _enforce_bounds(pset: fpm.FpmParticleSet, config: ScenarioConfig) -> None:
    """Keep gas particles out of walls and out of the liquid interval."""
    gas = pset.flag == fpm.GAS
    eps = 0.25 * pset.dx0
    liq = pset.liquid_indices()
    x_left, x_right = detect_interface(pset.x[liq])
    inside = gas & (pset.x > x_left) & (pset.x < x_right) & ~pset.anchored
    if np.any(inside):
        mid = 0.5 * (x_left + x_right)
        pset.x[inside & (pset.x <= mid)] = x_left - eps
        pset.x[inside & (pset.x > mid)] = x_right + eps

    drop = np.zeros(pset.n, dtype=bool)
    for bound, wall, lo_side in ((config.a, config.wall_left, True),
                                 (config.b, config.wall_right, False)):
        out = gas & ~pset.anchored & (
            (pset.x < bound) if lo_side else (pset.x > bound))
        if not np.any(out):
            continue
        if wall.kind == "outflow":
            drop |= out
        else:
            pset.x[out] = bound + eps if lo_side else bound - eps
    if np.any(drop):
        keep = ~drop
        for name in ("x", "rho", "u", "T", "p", "flag", "anchored"):
            setattr(pset, name, getattr(pset, name)[keep])


def _continuum_frame(pset, config, grid_x, t, meta) -> OutputFrame:
    pset.sort()
    gas = pset.flag == fpm.GAS
    liq = pset.liquid_indices()
    x_left, x_right = detect_interface(pset.x[liq])
    is_gas = (grid_x < x_left) | (grid_x > x_right)

    rho = np.empty_like(grid_x)
    p = np.empty_like(grid_x)
    u = np.empty_like(grid_x)
    T = np.empty_like(grid_x)
    xg = pset.x[gas]
    for name, arr in (("rho", rho), ("p", p), ("u", u), ("T", T)):
        arr[is_gas] = np.interp(grid_x[is_gas], xg, getattr(pset, name)[gas])
    lx = pset.x[liq]
    inside = ~is_gas
    rho[inside] = config.liquid_species.rho
    u[inside] = pset.u[liq[0]]
    T[inside] = np.interp(grid_x[inside], lx, pset.T[liq])
    p_l_val = pset.p[liq[np.argmin(lx)]]
    p_r_val = pset.p[liq[np.argmax(lx)]]
    p[inside] = liquid.pressure_field(p_l_val, p_r_val, x_left, x_right,
                                      grid_x[inside])
    return OutputFrame(time=t, x=grid_x.copy(), rho=rho, p=p, u=u, T=T,
                       is_gas=is_gas, x_left=x_left, x_right=x_right,
                       meta=dict(meta))


# ---------------------------------------------------------------------------
# kinetic route (coupled particle-Boltzmann / incompressible solver)
# ---------------------------------------------------------------------------


def _lambda_per_cell(config: ScenarioConfig, base: dsmc.CellGrid) -> np.ndarray:
    """Mean free path per base cell; liquid-covered cells inherit the value
    of the nearest gas region so the grid stays usable after the droplet
    sweeps through."""
    lam = np.empty(base.n_cells)
    for i, xc in enumerate(base.centers):
        if config.liquid_lo <= xc <= config.liquid_hi:
            d_left = abs(xc - config.liquid_lo)
            d_right = abs(xc - config.liquid_hi)
            probe = config.liquid_lo - 1e-12 if d_left <= d_right \
                else config.liquid_hi + 1e-12
        else:
            probe = xc
        lam[i] = mean_free_path(config.region_at(probe).rho, config.species)
    return lam


def _kinetic_walls(config: ScenarioConfig):
    walls = []
    inflows = [None, None]
    for side, wall in enumerate((config.wall_left, config.wall_right)):
        if wall.kind == "wall":
            walls.append(dsmc.WallState("diffuse", u=wall.u or 0.0, T=wall.T))
        else:
            walls.append(dsmc.WallState("open"))
            inflows[side] = wall
    return tuple(walls), inflows


def run_kinetic(config: ScenarioConfig) -> RunResult:
    """Coupled particle-Boltzmann gas / incompressible liquid run ("II")."""
    species = config.species
    liq_species = config.liquid_species
    rng = np.random.default_rng(config.seed)

    base = dsmc.CellGrid.uniform(config.a, config.b, config.n_cells)
    grid = dsmc.refine_cells(base, _lambda_per_cell(config, base),
                             cap=config.refinement_cap)
    h_smooth = 3.0 * config.dx
    smoother = dsmc.ShepardSmoother(grid.centers, h_smooth)

    n_liq = int(round((config.liquid_hi - config.liquid_lo) / config.dx))
    liq = liquid.LiquidState(
        x=np.linspace(config.liquid_lo, config.liquid_hi, n_liq + 1),
        u=config.liquid_u,
        T=np.full(n_liq + 1, config.liquid_T),
        p_left=config.liquid_p, p_right=config.liquid_p,
        species=liq_species)

    ens = dsmc.init_maxwellian_cells(
        grid, config.gas_regions, config.molecules_per_cell, config.dx,
        species, rng, exclude=(config.liquid_lo, config.liquid_hi))
    walls, inflows = _kinetic_walls(config)

    schedule = _output_schedule(config)
    grid_x = _frame_grid(config)
    trace = RunTrace()
    frames: list[OutputFrame] = []
    meta = _base_meta(config, Algorithm.KINETIC.value)
    meta.update({
        "molecules": int(ens.n),
        "molecule_weight": ens.weight,
        "cells": int(grid.n_cells),
        "liquid_particles_initial": int(liq.x.size),
    })

    interface = (liq.x_left, liq.x_right)
    gas_vol = grid.gas_volumes(interface)
    moments = dsmc.sample_moments(ens, grid, species, gas_volumes=gas_vol)
    smoothed = {name: smoother.smooth(moments.field(name), moments.active)
                for name in SMOOTHED_FIELDS}

    t = 0.0
    steps = 0
    collisions = 0
    if any(math.isclose(ts, 0.0, abs_tol=1e-30) for ts in schedule):
        frames.append(_kinetic_frame(grid, moments, smoothed, liq, config,
                                     grid_x, t, meta))

    while t < config.t_end * (1 - 1e-12):
        x_left, x_right = detect_interface(liq.x)
        interface = (x_left, x_right)
        i_left = int(np.argmin(liq.x))
        i_right = int(np.argmax(liq.x))
        iface = dsmc.InterfaceView(
            x_left=x_left, x_right=x_right, u=liq.u,
            T_left=float(liq.T[i_left]), T_right=float(liq.T[i_right]))

        summary = _kinetic_summary(grid, moments, smoothed, liq.u, config)
        dt = compute_time_step(summary, liq_species, species,
                               Algorithm.KINETIC, config.safety)
        dt = min(dt, _next_stop(t, schedule, config.t_end) - t)

        for side in (0, 1):
            spec = inflows[side]
            if spec is None:
                continue
            u_res = spec.u
            if u_res is None:
                u_res = _edge_velocity(grid, moments, smoothed, side)
            dsmc.spawn_inflow_molecules(
                ens, grid, side, dsmc.InflowSpec(rho=spec.rho, u=u_res, T=spec.T),
                species, rng)

        x_prev = ens.x.copy()
        dsmc.free_flight(ens, dt)
        dsmc.apply_boundary_interface(ens, x_prev, (config.a, config.b),
                                      walls, iface, species, rng, dt=dt)
        if dsmc.count_inside_liquid(ens, iface):
            raise RuntimeError(
                f"molecules inside the liquid after boundary handling at t = {t:.4e}")

        gas_vol = grid.gas_volumes(interface)
        grouping = dsmc.group_by_cell(ens, grid, rng)
        collisions += dsmc.collide_cells(ens, grid, dt, species, rng,
                                         gas_volumes=gas_vol, grouping=grouping)
        moments = dsmc.sample_moments(ens, grid, species, gas_volumes=gas_vol,
                                      grouping=grouping)
        smoothed = {name: smoother.smooth(moments.field(name), moments.active)
                    for name in SMOOTHED_FIELDS}

        p_left = interface_pressure_kinetic(
            grid.centers, smoothed["phi11"], moments.active, x_left, "left", h_smooth)
        p_right = interface_pressure_kinetic(
            grid.centers, smoothed["phi11"], moments.active, x_right, "right", h_smooth)
        q_left = float(_linear_value_at(*_nearest_active(
            grid.centers, smoothed["q1"], moments.active, x_left, "left",
            KINETIC_STENCIL_CELLS), h_smooth))
        q_right = float(_linear_value_at(*_nearest_active(
            grid.centers, smoothed["q1"], moments.active, x_right, "right",
            KINETIC_STENCIL_CELLS), h_smooth))
        T_left_new, _, _ = interface_temperature_kinetic(
            grid.centers, smoothed["T"], moments.active, liq.x, liq.T,
            liq_species.kappa, q_left, x_left, "left", h_smooth)
        T_right_new, _, _ = interface_temperature_kinetic(
            grid.centers, smoothed["T"], moments.active, liq.x, liq.T,
            liq_species.kappa, q_right, x_right, "right", h_smooth)

        u_old = liq.u
        liq.u = liquid.velocity_update(u_old, dt, p_left, p_right,
                                       x_left, x_right, liq_species.rho)
        liq.T = liquid.temperature_step(liq.x, liq.T, T_left_new, T_right_new,
                                        dt, liq_species, 3.0 * config.dx)
        liq.x = liquid.advect(liq.x, u_old, dt)
        liq.p_left, liq.p_right = p_left, p_right
        _manage_liquid(liq, config.dx)

        t += dt
        steps += 1
        jump_l = _kinetic_jump(grid, smoothed, moments, x_left, "left",
                               T_left_new, h_smooth)
        jump_r = _kinetic_jump(grid, smoothed, moments, x_right, "right",
                               T_right_new, h_smooth)
        state_rec = InterfaceState(
            x_left=liq.x_left, x_right=liq.x_right, u=liq.u,
            T_left=T_left_new, T_right=T_right_new,
            p_left=p_left, p_right=p_right, source=Algorithm.KINETIC.value)
        trace.append(t, state_rec, jump_l, jump_r)
        if any(math.isclose(t, ts, rel_tol=1e-9) for ts in schedule):
            frames.append(_kinetic_frame(grid, moments, smoothed, liq, config,
                                         grid_x, t, meta))

    meta["steps"] = steps
    meta["collisions"] = int(collisions)
    meta["liquid_particles_final"] = int(liq.x.size)
    meta["molecules_final"] = int(ens.n)
    meta["final_interface"] = {
        "x_left": trace.x_left[-1], "x_right": trace.x_right[-1],
        "u": trace.u_liquid[-1]}
    return RunResult(frames=frames, trace=trace, metadata=meta)


def _manage_liquid(liq: liquid.LiquidState, dx0: float) -> None:
    """Add/remove pass for the standalone liquid cloud of the kinetic route.

    The uniform velocity keeps spacings frozen, so this only ever fires on
    exotic configurations; thresholds match the particle management of the
    continuum route.
    """
    order = np.argsort(liq.x, kind="stable")
    x = liq.x[order]
    T = liq.T[order]
    gaps = np.diff(x)
    if not (np.any(gaps > fpm.GAP_INSERT * dx0) or np.any(gaps < fpm.GAP_REMOVE * dx0)):
        liq.x, liq.T = x, T
        return
    new_x: list[float] = []
    new_T: list[float] = []
    i = 0
    while i < x.size:
        if i + 1 < x.size and gaps[i] < fpm.GAP_REMOVE * dx0:
            new_x.append(0.5 * (x[i] + x[i + 1]))
            new_T.append(0.5 * (T[i] + T[i + 1]))
            i += 2
            continue
        new_x.append(x[i])
        new_T.append(T[i])
        if i + 1 < x.size and gaps[i] > fpm.GAP_INSERT * dx0:
            xm = 0.5 * (x[i] + x[i + 1])
            sel = np.abs(x - xm) <= 3.0 * dx0
            new_x.append(xm)
            new_T.append(fpm.lsq_value(x[sel] - xm, T[sel], 3.0 * dx0))
        i += 1
    liq.x = np.asarray(new_x)
    liq.T = np.asarray(new_T)


def _edge_velocity(grid, moments, smoothed, side) -> float:
    """Reservoir mean velocity extrapolated from the adjacent interior cells."""
    active = np.flatnonzero(moments.active)
    if active.size == 0:
        return 0.0
    chosen = active[-2:] if side == 1 else active[:2]
    vals = smoothed["u1"][chosen]
    vals = vals[np.isfinite(vals)]
    return float(vals.mean()) if vals.size else 0.0


def _kinetic_summary(grid, moments, smoothed, u_liq, config) -> FieldSummary:
    act = moments.active
    if not np.any(act):
        reg_rho = [r.rho for r in config.gas_regions]
        reg_T = [r.T for r in config.gas_regions]
        return FieldSummary(max_speed=abs(u_liq), max_temperature=max(reg_T),
                            min_spacing=float(grid.widths.min()),
                            rho_min=min(reg_rho), rho_max=max(reg_rho))
    rho = smoothed["rho"][act]
    temp = smoothed["T"][act]
    speed = np.abs(smoothed["u1"][act])
    rho_max = float(np.nanmax(rho))
    rho_min = max(float(np.nanmin(rho)), 1e-9 * rho_max)
    return FieldSummary(
        max_speed=max(float(np.nanmax(speed)), abs(u_liq)),
        max_temperature=float(np.nanmax(temp)),
        min_spacing=float(grid.widths.min()),
        rho_min=rho_min,
        rho_max=rho_max,
    )


def _kinetic_jump(grid, smoothed, moments, x_i, side, T_i, h) -> float:
    try:
        dx, vals = _nearest_active(grid.centers, smoothed["T"], moments.active,
                                   x_i, side, KINETIC_STENCIL_CELLS)
        return float(_linear_value_at(dx, vals, h) - T_i)
    except ReconstructionError:
        return float("nan")


def _kinetic_frame(grid, moments, smoothed, liq, config, grid_x, t, meta) -> OutputFrame:
    x_left, x_right = liq.x_left, liq.x_right
    is_gas = (grid_x < x_left) | (grid_x > x_right)
    act = moments.active
    centers = grid.centers[act]

    rho = np.empty_like(grid_x)
    p = np.empty_like(grid_x)
    u = np.empty_like(grid_x)
    T = np.empty_like(grid_x)
    for name, arr in (("rho", rho), ("p", p), ("u1", u), ("T", T)):
        vals = smoothed[name][act]
        arr[is_gas] = np.interp(grid_x[is_gas], centers, vals)
    inside = ~is_gas
    rho[inside] = config.liquid_species.rho
    u[inside] = liq.u
    T[inside] = np.interp(grid_x[inside], liq.x, liq.T)
    p[inside] = liq.pressure_at(grid_x[inside])
    return OutputFrame(time=t, x=grid_x.copy(), rho=rho, p=p, u=u, T=T,
                       is_gas=is_gas, x_left=x_left, x_right=x_right,
                       meta=dict(meta))


def run(config: ScenarioConfig, algorithm: Algorithm) -> RunResult:
    if algorithm is Algorithm.CONTINUUM:
        return run_continuum(config)
    return run_kinetic(config)
