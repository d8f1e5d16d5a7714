"""Particle solver for the rarefied gas phase.

Molecules carry a 1D position and a 3D velocity and evolve by operator
splitting: free flight with diffuse re-emission at walls and at the moving
liquid interface, then binary hard-sphere collisions between random disjoint
pairs inside spatial cells. Macroscopic cell moments are sampled from the
molecules and smoothed with a Shepard kernel before anything is handed to the
continuum side of the coupling.

All per-step operations are vectorized over the full ensemble; the random
stream is consumed in a fixed order so runs are reproducible bit for bit
given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .physics import DomainError, GasRegion, GasSpecies


class TimeStepError(RuntimeError):
    """A pair collision probability exceeded one: the time step is too large."""


class RefinementError(RuntimeError):
    """Cell refinement would exceed the configured subdivision cap."""


class BoundaryError(ValueError):
    """Inconsistent wall/interface configuration."""


@dataclass
class MoleculeEnsemble:
    """Simulated gas molecules.

    x : (N,) positions [m]
    v : (N, 3) velocities [m/s]
    weight : real molecules represented by one simulated molecule
    """

    x: np.ndarray
    v: np.ndarray
    weight: float

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.v.shape != (self.x.size, 3):
            raise ValueError("velocity array must have shape (N, 3)")
        if self.weight <= 0:
            raise ValueError("molecule weight must be positive")

    @property
    def n(self) -> int:
        return self.x.size

    def compact(self, keep: np.ndarray) -> "MoleculeEnsemble":
        self.x = self.x[keep]
        self.v = self.v[keep]
        return self


class CellGrid:
    """Sorted cell edges partitioning [a, b]; uniform base, optionally refined."""

    def __init__(self, edges: np.ndarray):
        edges = np.asarray(edges, dtype=float)
        if edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("cell edges must be strictly increasing")
        self.edges = edges
        self.centers = 0.5 * (edges[:-1] + edges[1:])
        self.widths = np.diff(edges)

    @classmethod
    def uniform(cls, a: float, b: float, n_cells: int) -> "CellGrid":
        return cls(np.linspace(a, b, n_cells + 1))

    @property
    def n_cells(self) -> int:
        return self.widths.size

    @property
    def a(self) -> float:
        return float(self.edges[0])

    @property
    def b(self) -> float:
        return float(self.edges[-1])

    def locate(self, x: np.ndarray) -> np.ndarray:
        """Cell index per position; positions at b map to the last cell."""
        idx = np.searchsorted(self.edges, x, side="right") - 1
        return np.clip(idx, 0, self.n_cells - 1)

    def gas_volumes(self, interface: tuple[float, float] | None) -> np.ndarray:
        """Cell volume outside the liquid interval, unit cross section.

        Cells overlapping (x_left, x_right) are credited only with their gas
        fraction so sampled densities stay unbiased at the interface.
        """
        if interface is None:
            return self.widths.copy()
        x_left, x_right = interface
        overlap = np.minimum(self.edges[1:], x_right) - np.maximum(self.edges[:-1], x_left)
        return self.widths - np.clip(overlap, 0.0, None)


def refine_cells(grid: CellGrid, lam: np.ndarray, cap: int = 64) -> CellGrid:
    """Split every cell wider than its local mean free path.

    Each offending cell is divided into the smallest power-of-two number of
    equal subcells whose width does not exceed lam.
    """
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (grid.n_cells,))
    if np.any(lam <= 0):
        raise DomainError("mean free path field must be positive")
    factors = np.ones(grid.n_cells, dtype=int)
    need = grid.widths > lam
    factors[need] = 2 ** np.ceil(np.log2(grid.widths[need] / lam[need])).astype(int)
    if factors.max(initial=1) > cap:
        raise RefinementError(
            f"refinement factor {factors.max()} exceeds cap {cap}"
        )
    if np.all(factors == 1):
        return CellGrid(grid.edges.copy())
    pieces = [
        np.linspace(grid.edges[i], grid.edges[i + 1], factors[i], endpoint=False)
        for i in range(grid.n_cells)
    ]
    edges = np.concatenate(pieces + [[grid.edges[-1]]])
    return CellGrid(edges)


def sample_maxwellian(n: int, u, T: float, species: GasSpecies,
                      rng: np.random.Generator) -> np.ndarray:
    """Draw n molecular velocities around mean velocity u at temperature T."""
    u = np.broadcast_to(np.asarray(u, dtype=float), (3,))
    sigma = np.sqrt(species.R * max(T, 0.0))
    return u + sigma * rng.standard_normal((n, 3))


def init_maxwellian_cells(
    grid: CellGrid,
    regions: list[GasRegion],
    molecules_per_cell: int,
    base_dx: float,
    species: GasSpecies,
    rng: np.random.Generator,
    exclude: tuple[float, float] | None = None,
) -> MoleculeEnsemble:
    """Populate the grid with equilibrium molecules, skipping the liquid interval.

    The statistical weight is fixed by the densest region: that region
    receives molecules_per_cell molecules per cell of width base_dx, the
    others proportionally fewer. Molecule counts per cell are deterministic
    (rounded expectations); only positions and velocities are random.
    """
    if molecules_per_cell <= 0:
        raise DomainError("molecules_per_cell must be positive")
    if not regions:
        raise DomainError("at least one gas region is required")
    rho_max = max(r.rho for r in regions)
    weight = rho_max * base_dx / (species.m * molecules_per_cell)

    xs, vs = [], []
    for i in range(grid.n_cells):
        lo, hi = grid.edges[i], grid.edges[i + 1]
        for seg_lo, seg_hi in _gas_segments(lo, hi, exclude):
            for reg in regions:
                left = max(seg_lo, reg.lo)
                right = min(seg_hi, reg.hi)
                if right <= left:
                    continue
                n = int(round(reg.rho * (right - left) / (species.m * weight)))
                if n == 0:
                    continue
                xs.append(left + (right - left) * rng.random(n))
                vs.append(sample_maxwellian(n, (reg.u, 0.0, 0.0), reg.T, species, rng))
    if xs:
        x = np.concatenate(xs)
        v = np.concatenate(vs)
    else:
        x = np.empty(0)
        v = np.empty((0, 3))
    return MoleculeEnsemble(x=x, v=v, weight=weight)


def _gas_segments(lo, hi, exclude):
    if exclude is None:
        return [(lo, hi)]
    ex_lo, ex_hi = exclude
    segments = []
    if lo < ex_lo:
        segments.append((lo, min(hi, ex_lo)))
    if hi > ex_hi:
        segments.append((max(lo, ex_hi), hi))
    return segments


def free_flight(ens: MoleculeEnsemble, dt: float) -> MoleculeEnsemble:
    """Ballistic transport: x <- x + v1 dt, velocities untouched."""
    ens.x += ens.v[:, 0] * dt
    return ens


def sample_wall_emission(n: int, u_wall: float, T: float, species: GasSpecies,
                         direction: int, rng: np.random.Generator) -> np.ndarray:
    """Velocities of diffusely re-emitted molecules.

    The wall-normal component is drawn from the one-sided flux-weighted
    Maxwellian (Rayleigh in speed), the tangential components from the plain
    Maxwellian, everything shifted by the wall velocity. direction=+1 emits
    toward +x.
    """
    rt = species.R * max(T, 0.0)
    v = np.empty((n, 3))
    v[:, 0] = u_wall + direction * np.sqrt(2.0 * rt * rng.exponential(size=n))
    v[:, 1:] = np.sqrt(rt) * rng.standard_normal((n, 2))
    return v


@dataclass(frozen=True)
class WallState:
    """Runtime boundary condition at one end of the domain.

    kind "diffuse": molecules beyond the wall are re-emitted from it with the
    wall's velocity and temperature. kind "open": they are removed (inflow,
    if any, is realized separately through ghost cells).
    """

    kind: str
    u: float = 0.0
    T: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("diffuse", "open"):
            raise BoundaryError(f"unknown wall kind {self.kind!r}")


@dataclass(frozen=True)
class InterfaceView:
    """Liquid interval seen by the gas during one step."""

    x_left: float
    x_right: float
    u: float
    T_left: float
    T_right: float


def _reemit(ens, mask, x_bound, u_bound, T, species, direction, dt, rng):
    """Diffuse re-emission from a boundary plus residual flight.

    The crossing instant within the step is unresolved, so the emitted
    molecule flies for a uniform fraction of dt in the boundary frame. That
    spreads the re-emitted layer over its physical depth instead of piling
    molecules onto the boundary position.
    """
    n = int(mask.sum())
    if n == 0:
        return
    v = sample_wall_emission(n, u_bound, T, species, direction, rng)
    residual = rng.random(n) * dt
    ens.x[mask] = x_bound + (v[:, 0] - u_bound) * residual
    ens.v[mask] = v


def apply_boundary_interface(
    ens: MoleculeEnsemble,
    x_prev: np.ndarray,
    domain: tuple[float, float],
    walls: tuple[WallState, WallState],
    interface: InterfaceView | None,
    species: GasSpecies,
    rng: np.random.Generator,
    dt: float = 0.0,
) -> MoleculeEnsemble:
    """Re-emit or remove molecules that left the gas domain during free flight.

    Molecules found inside the liquid interval are re-emitted from the
    interface they crossed (decided from their pre-flight position) with a
    fresh outward half-space Maxwellian velocity at the interface state,
    then advected for the unresolved remainder of the step. Diffuse walls
    work the same way with the wall state; open walls delete. Must be called
    directly after free_flight with the same dt.
    """
    a, b = domain
    if interface is not None and not (a < interface.x_left < interface.x_right < b):
        raise BoundaryError(
            f"interface ({interface.x_left}, {interface.x_right}) outside ({a}, {b})"
        )
    prev = x_prev
    # the residual flight of a re-emitted molecule can cross another
    # boundary; sweep until the ensemble is clean (immediate in practice,
    # boundaries are many flight lengths apart)
    for _ in range(8):
        busy = False
        if interface is not None:
            inside = (ens.x > interface.x_left) & (ens.x < interface.x_right)
            if np.any(inside):
                busy = True
                mid = 0.5 * (interface.x_left + interface.x_right)
                from_left = inside & (
                    (prev <= interface.x_left)
                    | ((prev < interface.x_right) & (ens.x <= mid))
                )
                from_right = inside & ~from_left
                _reemit(ens, from_left, interface.x_left, interface.u,
                        interface.T_left, species, -1, dt, rng)
                _reemit(ens, from_right, interface.x_right, interface.u,
                        interface.T_right, species, +1, dt, rng)

        drop = np.zeros(ens.n, dtype=bool)
        for side, wall, bound, direction in ((0, walls[0], a, +1),
                                             (1, walls[1], b, -1)):
            out = ens.x < bound if side == 0 else ens.x > bound
            if not np.any(out):
                continue
            busy = True
            if wall.kind == "diffuse":
                _reemit(ens, out, bound, wall.u, wall.T, species, direction,
                        dt, rng)
            else:
                drop |= out
        if np.any(drop):
            keep = ~drop
            ens.compact(keep)
            prev = prev[keep]
        if not busy:
            return ens
        prev = ens.x  # later sweeps judge crossings from the emission point
    raise BoundaryError("boundary handling did not settle in 8 sweeps")


def count_inside_liquid(ens: MoleculeEnsemble, interface: InterfaceView) -> int:
    return int(np.count_nonzero(
        (ens.x > interface.x_left) & (ens.x < interface.x_right)))


@dataclass
class CellGrouping:
    """Cell-contiguous molecule layout shared by collisions and sampling.

    Producing it physically reorders the ensemble arrays so each cell's
    molecules are contiguous and randomly permuted within their block.
    """

    cells: np.ndarray    # cell index per molecule, non-decreasing
    counts: np.ndarray   # molecules per cell
    offsets: np.ndarray  # start of each cell block


_SHUFFLE_BITS = 20


def group_by_cell(ens: MoleculeEnsemble, grid: CellGrid,
                  rng: np.random.Generator) -> CellGrouping:
    """Reorder molecules by cell with a random order inside every cell."""
    cells = grid.locate(ens.x)
    key = (cells.astype(np.int64) << _SHUFFLE_BITS) | rng.integers(
        0, 1 << _SHUFFLE_BITS, ens.n)
    order = np.argsort(key)
    ens.x = np.take(ens.x, order)
    ens.v = np.take(ens.v, order, axis=0)
    cells = np.take(cells, order)
    counts = np.bincount(cells, minlength=grid.n_cells)
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return CellGrouping(cells=cells, counts=counts, offsets=offsets)


def collide_cells(
    ens: MoleculeEnsemble,
    grid: CellGrid,
    dt: float,
    species: GasSpecies,
    rng: np.random.Generator,
    gas_volumes: np.ndarray | None = None,
    grouping: CellGrouping | None = None,
) -> int:
    """One hard-sphere collision step; returns the number of collisions.

    Molecules in each cell are paired into random disjoint pairs; pair (i, j)
    collides with probability
        (N_c - 1) * weight * sigma * |v_i - v_j| * dt / V_c,
    sigma = pi d^2. A collision rotates the relative velocity onto a uniform
    random direction about the conserved center-of-mass velocity, so each
    pair conserves momentum and kinetic energy exactly. Reorders the
    ensemble when no grouping is supplied.
    """
    if grouping is None:
        grouping = group_by_cell(ens, grid, rng)
    if gas_volumes is None:
        gas_volumes = grid.widths
    pos_in_cell = np.arange(ens.n) - np.take(grouping.offsets, grouping.cells)
    n_in_cell = np.take(grouping.counts, grouping.cells)
    first = np.flatnonzero((pos_in_cell % 2 == 0) & (pos_in_cell + 1 < n_in_cell))
    if first.size == 0:
        return 0

    dv = np.take(ens.v, first, axis=0) - np.take(ens.v, first + 1, axis=0)
    g = np.sqrt(np.einsum("ij,ij->i", dv, dv))
    sigma = np.pi * species.d**2
    pair_cells = np.take(grouping.cells, first)
    # cells whose gas sliver has collapsed (interface sweeping through) hold
    # at most stray transients; their collision rate is not meaningful
    volumes = np.where(gas_volumes > 0, gas_volumes, np.inf)
    prob = ((np.take(grouping.counts, pair_cells) - 1) * ens.weight * sigma
            * g * dt / np.take(volumes, pair_cells))
    worst = prob.max(initial=0.0)
    if worst > 1.0:
        raise TimeStepError(
            f"pair collision probability {worst:.3f} > 1; reduce the time step")
    accept = rng.random(prob.size) < prob
    n_coll = int(accept.sum())
    if n_coll == 0:
        return 0

    ia = first[accept]
    ja = ia + 1
    v_i = np.take(ens.v, ia, axis=0)
    v_j = np.take(ens.v, ja, axis=0)
    v_cm = 0.5 * (v_i + v_j)
    g_acc = g[accept]
    cos_t = 1.0 - 2.0 * rng.random(n_coll)
    sin_t = np.sqrt(np.clip(1.0 - cos_t**2, 0.0, None))
    phi = 2.0 * np.pi * rng.random(n_coll)
    omega = np.column_stack((cos_t, sin_t * np.cos(phi), sin_t * np.sin(phi)))
    half = 0.5 * g_acc[:, None] * omega
    ens.v[ia] = v_cm + half
    ens.v[ja] = v_cm - half
    return n_coll


@dataclass
class CellMoments:
    """Sampled macroscopic fields at cell centers; inactive cells hold zeros."""

    x: np.ndarray
    rho: np.ndarray
    u: np.ndarray      # (C, 3)
    T: np.ndarray
    e: np.ndarray
    p: np.ndarray
    phi11: np.ndarray
    q1: np.ndarray
    active: np.ndarray

    def field(self, name: str) -> np.ndarray:
        if name == "u1":
            return self.u[:, 0]
        return getattr(self, name)


def sample_moments(
    ens: MoleculeEnsemble,
    grid: CellGrid,
    species: GasSpecies,
    gas_volumes: np.ndarray | None = None,
    grouping: CellGrouping | None = None,
) -> CellMoments:
    """Per-cell density, velocity, temperature, pressure, stress and heat flux.

    rho   = N weight m / V
    u     = <v>
    e     = <|v - u|^2> / 2,  T = 2 e / (3 R),  p = rho R T
    phi11 = rho <c1 c1>,      q1 = rho <c1 |c|^2 / 2>,  c = v - u
    Empty cells are marked inactive. A grouping from group_by_cell switches
    the reductions to the fast contiguous-segment path.
    """
    if gas_volumes is None:
        gas_volumes = grid.widths
    n_cells = grid.n_cells

    if grouping is not None:
        cells = grouping.cells
        counts = grouping.counts
        active = counts > 0
        safe = np.maximum(counts, 1)
        # reduceat over the starts of nonempty blocks only: the blocks are
        # contiguous, so each segment ends exactly at the next nonempty start
        nonempty_starts = grouping.offsets[active]

        def segment_mean(values):
            sums = np.zeros(n_cells)
            if nonempty_starts.size:
                sums[active] = np.add.reduceat(values, nonempty_starts)
            return sums / safe
    else:
        cells = grid.locate(ens.x)
        counts = np.bincount(cells, minlength=n_cells)
        active = counts > 0
        safe = np.maximum(counts, 1)

        def segment_mean(values):
            return np.bincount(cells, weights=values, minlength=n_cells) / safe

    u = np.empty((n_cells, 3))
    for k in range(3):
        u[:, k] = segment_mean(ens.v[:, k])
    c = ens.v - np.take(u, cells, axis=0)
    c1sq = c[:, 0] ** 2
    csq = np.einsum("ij,ij->i", c, c)
    mean_c1sq = segment_mean(c1sq)
    mean_csq = segment_mean(csq)
    mean_q = segment_mean(0.5 * csq * c[:, 0])

    volumes = np.where(gas_volumes > 0, gas_volumes, np.inf)
    rho = counts * ens.weight * species.m / volumes
    e = 0.5 * mean_csq
    T = 2.0 * e / (3.0 * species.R)
    p = rho * species.R * T
    phi11 = rho * mean_c1sq
    q1 = rho * mean_q

    u[~active] = 0.0
    for arr in (rho, e, T, p, phi11, q1):
        arr[~active] = 0.0
    return CellMoments(x=grid.centers.copy(), rho=rho, u=u, T=T, e=e, p=p,
                       phi11=phi11, q1=q1, active=active)


class ShepardSmoother:
    """Normalized Gaussian-weighted averaging over active cell centers.

    w(r) = exp(-2 r^2 / h^2) for r <= h, zero beyond; inactive cells are
    excluded from both sums. Built once per grid (the cell layout is static).
    """

    def __init__(self, centers: np.ndarray, h: float):
        if h <= 0:
            raise DomainError("smoothing radius must be positive")
        self.h = h
        centers = np.asarray(centers, dtype=float)
        n = centers.size
        lo = np.searchsorted(centers, centers - h, side="left")
        hi = np.searchsorted(centers, centers + h, side="right")
        lengths = hi - lo
        rows = np.repeat(np.arange(n), lengths)
        cols = (np.arange(lengths.sum()) - np.repeat(np.cumsum(lengths) - lengths, lengths)
                + np.repeat(lo, lengths))
        w = np.exp(-2.0 * ((centers[rows] - centers[cols]) / h) ** 2)
        self.weights = sp.csr_matrix((w, (rows, cols)), shape=(n, n))

    def smooth(self, values: np.ndarray, active: np.ndarray) -> np.ndarray:
        a = active.astype(float)
        denom = self.weights @ a
        if np.any(active & (denom <= 0.0)):
            raise RuntimeError("active cell without any active neighbor in range")
        num = self.weights @ np.where(active, values, 0.0)
        out = np.full(values.shape, np.nan)
        np.divide(num, denom, out=out, where=active)
        return out


def shepard_smooth(moments: CellMoments, name: str, h: float) -> np.ndarray:
    """Smooth one sampled field over the active cells; NaN where inactive."""
    smoother = ShepardSmoother(moments.x, h)
    return smoother.smooth(moments.field(name), moments.active)


@dataclass(frozen=True)
class InflowSpec:
    """Equilibrium reservoir state feeding one open boundary."""

    rho: float
    u: float
    T: float


def spawn_inflow_molecules(
    ens: MoleculeEnsemble,
    grid: CellGrid,
    side: int,
    spec: InflowSpec,
    species: GasSpecies,
    rng: np.random.Generator,
    n_ghost_cells: int = 2,
) -> MoleculeEnsemble:
    """Fill ghost cells beyond one boundary with fresh reservoir molecules.

    Call before free_flight; molecules that fly into [a, b] during the step
    become regular, the rest are removed by the open-wall handling. The ghost
    cells copy the width of the adjacent boundary cell, which is deep enough
    that the inflow flux is not truncated for any admissible time step.
    """
    width = grid.widths[0] if side == 0 else grid.widths[-1]
    depth = n_ghost_cells * width
    if side == 0:
        lo, hi = grid.a - depth, grid.a
    else:
        lo, hi = grid.b, grid.b + depth
    mean_count = spec.rho * depth / (species.m * ens.weight)
    n = int(rng.poisson(mean_count))
    if n == 0:
        return ens
    x_new = lo + (hi - lo) * rng.random(n)
    v_new = sample_maxwellian(n, (spec.u, 0.0, 0.0), spec.T, species, rng)
    ens.x = np.concatenate((ens.x, x_new))
    ens.v = np.concatenate((ens.v, v_new))
    return ens
