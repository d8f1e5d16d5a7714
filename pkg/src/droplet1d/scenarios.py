"""Scenario configuration, the preset test cases, frame output and comparison.

A scenario fully describes one coupled run: domain, initial gas regions,
liquid column, boundary conditions, resolutions, output times and the seed.
Presets reproduce the three study cases; a flat INI-style config file can
override or replace them (see docs/config-format.md).
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .physics import (
    ARGON,
    Algorithm,
    DomainError,
    GasRegion,
    GasSpecies,
    LiquidSpecies,
    SafetyFactors,
    eos_temperature,
    knudsen_number,
    water_like,
)


@dataclass(frozen=True)
class WallSpec:
    """Boundary behavior at one end of the domain.

    kind "wall": fixed velocity/temperature; diffusely reflecting for the
    kinetic gas, pinned values for the continuum gas.
    kind "inflow": equilibrium reservoir (rho, u, T) feeding the domain;
    molecules leaving through it are deleted.
    kind "outflow": reservoir at (rho, T) whose mean velocity follows the
    adjacent interior state; zero velocity gradient for the continuum gas,
    leaving molecules are deleted.
    """

    kind: str
    u: float | None = None
    T: float | None = None
    rho: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("wall", "inflow", "outflow"):
            raise DomainError(f"unknown wall kind {self.kind!r}")


@dataclass
class ScenarioConfig:
    name: str
    a: float
    b: float
    liquid_lo: float
    liquid_hi: float
    gas_regions: list[GasRegion]
    liquid_species: LiquidSpecies
    liquid_u: float
    liquid_T: float
    liquid_p: float
    wall_left: WallSpec
    wall_right: WallSpec
    t_end: float
    output_times: tuple[float, ...]
    char_length: float
    n_cells: int = 200
    molecules_per_cell: int = 5000
    seed: int = 0
    algorithm: str = "both"
    safety: SafetyFactors = field(default_factory=SafetyFactors)
    species: GasSpecies = ARGON
    refinement_cap: int = 64
    grid_points: int = 200
    #: (mu, kappa) override for the continuum gas, e.g. (0, 0) to probe the
    #: inviscid limit; None evaluates them at the initial temperature
    transport_override: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if not (self.a < self.liquid_lo < self.liquid_hi < self.b):
            raise DomainError("liquid interval must lie strictly inside the domain")
        if any(t > self.t_end * (1 + 1e-12) for t in self.output_times):
            raise DomainError("output times must not exceed the final time")
        if self.algorithm not in ("I", "II", "both"):
            raise DomainError(f"unknown algorithm {self.algorithm!r}")

    @property
    def dx(self) -> float:
        return (self.b - self.a) / self.n_cells

    def knudsen_numbers(self) -> dict[str, float]:
        """Mean-free-path over characteristic-length per initial gas region."""
        out = {}
        for i, reg in enumerate(self.gas_regions):
            out[f"region{i + 1}"] = knudsen_number(reg.rho, self.char_length,
                                                   self.species)
        return out

    def initial_gas_temperature(self) -> float:
        """Volume-averaged initial temperature, the transport freeze point."""
        total = sum(r.hi - r.lo for r in self.gas_regions)
        return sum(r.T * (r.hi - r.lo) for r in self.gas_regions) / total

    def region_at(self, x: float) -> GasRegion:
        for reg in self.gas_regions:
            if reg.lo <= x < reg.hi:
                return reg
        return self.gas_regions[-1]


def _test1(scale: float, name: str) -> ScenarioConfig:
    b = 1e-4 * scale
    T0 = eos_temperature(1.226, 1e5)
    return ScenarioConfig(
        name=name,
        a=0.0, b=b,
        liquid_lo=0.4 * b, liquid_hi=0.6 * b,
        gas_regions=[GasRegion(0.0, b, rho=1.226, u=0.0, T=T0)],
        liquid_species=water_like(1000.0),
        liquid_u=100.0, liquid_T=298.0, liquid_p=1e5,
        wall_left=WallSpec("wall", u=0.0, T=T0),
        wall_right=WallSpec("wall", u=0.0, T=T0),
        t_end=5.2e-8 * scale,
        output_times=(5.2e-8 * scale,),
        char_length=0.2 * b,
    )


def _test2(rho_l: float, name: str) -> ScenarioConfig:
    post_T = eos_temperature(2.214, 148407.3)
    pre_T = eos_temperature(1.58317, 98066.5)
    return ScenarioConfig(
        name=name,
        a=0.0, b=1e-4,
        liquid_lo=4e-5, liquid_hi=6e-5,
        gas_regions=[
            GasRegion(0.0, 1e-5, rho=2.214, u=89.981, T=post_T),
            GasRegion(1e-5, 1e-4, rho=1.58317, u=0.0, T=pre_T),
        ],
        liquid_species=water_like(rho_l),
        liquid_u=0.0, liquid_T=298.0, liquid_p=98066.5,
        wall_left=WallSpec("inflow", rho=2.214, u=89.981, T=post_T),
        wall_right=WallSpec("outflow", rho=1.58317, T=pre_T),
        t_end=1.75e-7,
        output_times=(1.75e-7,),
        char_length=2e-5,
    )


def _test3() -> ScenarioConfig:
    rho_left, rho_right = 1.0, 0.25
    T0 = 298.0
    return ScenarioConfig(
        name="test3",
        a=0.0, b=1e-4,
        liquid_lo=2e-5, liquid_hi=3e-5,
        gas_regions=[
            GasRegion(0.0, 2e-5, rho=rho_left, u=0.0, T=T0),
            GasRegion(3e-5, 1e-4, rho=rho_right, u=0.0, T=T0),
        ],
        liquid_species=water_like(10.0),
        liquid_u=0.0, liquid_T=T0,
        liquid_p=rho_right * ARGON.R * T0,  # matches the gas right of the droplet
        wall_left=WallSpec("wall", u=0.0, T=T0),
        wall_right=WallSpec("wall", u=0.0, T=T0),
        t_end=9.938e-7,
        output_times=(2.218e-7, 5.678e-7, 9.938e-7),
        char_length=1e-5,
    )


PRESET_NAMES = ("test1a", "test1b", "test1c", "test2a", "test2b", "test3")


def preset(name: str) -> ScenarioConfig:
    """One of the six study configurations, by name."""
    if name == "test1a":
        return _test1(1.0, name)
    if name == "test1b":
        return _test1(0.1, name)
    if name == "test1c":
        return _test1(0.01, name)
    if name == "test2a":
        return _test2(1000.0, name)
    if name == "test2b":
        return _test2(10.0, name)
    if name == "test3":
        return _test3()
    raise DomainError(f"unknown preset {name!r} (choose from {PRESET_NAMES})")


@dataclass
class OutputFrame:
    """A time-stamped field snapshot on the uniform comparison grid."""

    time: float
    x: np.ndarray
    rho: np.ndarray
    p: np.ndarray
    u: np.ndarray
    T: np.ndarray
    is_gas: np.ndarray
    x_left: float
    x_right: float
    meta: dict

    def field(self, name: str) -> np.ndarray:
        return getattr(self, name)


FRAME_FIELDS = ("rho", "p", "u", "T")


def write_frame_csv(frame: OutputFrame, path: str) -> None:
    """Write one frame: '#' metadata lines, a header, one row per grid point.

    Full decimal precision (17 significant digits), LF line endings.
    """
    if frame.x.size == 0:
        raise ValueError("refusing to write an empty frame")
    lines = []
    meta = dict(frame.meta)
    meta.setdefault("time", frame.time)
    meta["x_left"] = frame.x_left
    meta["x_right"] = frame.x_right
    for key in sorted(meta):
        lines.append(f"# {key} = {_format_meta(meta[key])}")
    lines.append("x,rho,p,u,T,phase")
    for i in range(frame.x.size):
        phase = "gas" if frame.is_gas[i] else "liquid"
        lines.append(",".join((
            f"{frame.x[i]:.17g}", f"{frame.rho[i]:.17g}", f"{frame.p[i]:.17g}",
            f"{frame.u[i]:.17g}", f"{frame.T[i]:.17g}", phase)))
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as err:
        raise OSError(f"cannot write frame to {path}: {err}") from err


def _format_meta(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, (list, tuple)):
        return ",".join(_format_meta(v) for v in value)
    return str(value)


def read_frame_csv(path: str) -> OutputFrame:
    """Parse a frame written by write_frame_csv."""
    meta: dict = {}
    rows = []
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, value = line[1:].partition("=")
                    meta[key.strip()] = value.strip()
                elif line.startswith("x,"):
                    continue
                else:
                    rows.append(line.split(","))
    except OSError as err:
        raise OSError(f"cannot read frame from {path}: {err}") from err
    if not rows:
        raise ValueError(f"no data rows in {path}")
    data = np.array([[float(v) for v in row[:5]] for row in rows])
    is_gas = np.array([row[5] == "gas" for row in rows])
    return OutputFrame(
        time=float(meta.get("time", "nan")),
        x=data[:, 0], rho=data[:, 1], p=data[:, 2], u=data[:, 3], T=data[:, 4],
        is_gas=is_gas,
        x_left=float(meta.get("x_left", "nan")),
        x_right=float(meta.get("x_right", "nan")),
        meta=meta,
    )


def frames_in_dir(directory: str) -> list[OutputFrame]:
    names = sorted(f for f in os.listdir(directory)
                   if f.startswith("frame") and f.endswith(".csv"))
    frames = [read_frame_csv(os.path.join(directory, f)) for f in names]
    frames.sort(key=lambda fr: fr.time)
    return frames


#: grid points skipped on each side of each interface in comparison metrics
INTERFACE_EXCLUSION = 3


@dataclass
class FieldMetrics:
    l1: float
    linf: float


@dataclass
class ComparisonReport:
    times: list[float]
    metrics: list[dict[str, FieldMetrics]]
    thresholds: dict[str, float] | None = None

    def passed(self) -> bool:
        if not self.thresholds:
            return True
        for per_field in self.metrics:
            for name, limit in self.thresholds.items():
                if name in per_field and per_field[name].l1 > limit:
                    return False
        return True

    def to_text(self) -> str:
        lines = ["field      time            rel_L1        rel_Linf"]
        for t, per_field in zip(self.times, self.metrics):
            for name in FRAME_FIELDS:
                m = per_field[name]
                verdict = ""
                if self.thresholds and name in self.thresholds:
                    verdict = "  PASS" if m.l1 <= self.thresholds[name] else "  FAIL"
                lines.append(
                    f"{name:8s} {t:14.6e} {m.l1:14.6e} {m.linf:14.6e}{verdict}")
        return "\n".join(lines)


def _comparison_mask(frame_a: OutputFrame, frame_b: OutputFrame) -> np.ndarray:
    """Gas points of both frames, minus the interface exclusion zones."""
    mask = frame_a.is_gas & frame_b.is_gas
    for x_i in (frame_a.x_left, frame_a.x_right, frame_b.x_left, frame_b.x_right):
        nearest = np.argsort(np.abs(frame_a.x - x_i))[:INTERFACE_EXCLUSION]
        mask[nearest] = False
    return mask


def compare_frames(frame_a: OutputFrame, frame_b: OutputFrame) -> dict[str, FieldMetrics]:
    if frame_a.x.size != frame_b.x.size or not np.allclose(frame_a.x, frame_b.x):
        raise ValueError("comparison grids differ")
    if not math.isclose(frame_a.time, frame_b.time, rel_tol=1e-9, abs_tol=1e-30):
        raise ValueError(f"frame times differ: {frame_a.time} vs {frame_b.time}")
    mask = _comparison_mask(frame_a, frame_b)
    out = {}
    for name in FRAME_FIELDS:
        va = frame_a.field(name)[mask]
        vb = frame_b.field(name)[mask]
        denom_l1 = np.sum(np.abs(va))
        denom_inf = np.max(np.abs(va)) if va.size else 0.0
        diff = np.abs(va - vb)
        if denom_l1 > 0:
            l1 = float(np.sum(diff) / denom_l1)
        else:
            l1 = 0.0 if np.all(diff == 0) else float("inf")
        if denom_inf > 0:
            linf = float(np.max(diff) / denom_inf)
        else:
            linf = 0.0 if np.all(diff == 0) else float("inf")
        out[name] = FieldMetrics(l1=l1, linf=linf)
    return out


def compare_runs(frames_a: list[OutputFrame], frames_b: list[OutputFrame],
                 thresholds: dict[str, float] | None = None) -> ComparisonReport:
    """Field-by-field agreement metrics between two runs, time by time."""
    if len(frames_a) != len(frames_b):
        raise ValueError(
            f"different frame counts: {len(frames_a)} vs {len(frames_b)}")
    times, metrics = [], []
    for fa, fb in zip(frames_a, frames_b):
        metrics.append(compare_frames(fa, fb))
        times.append(fa.time)
    return ComparisonReport(times=times, metrics=metrics, thresholds=thresholds)


def worker_count() -> int:
    """Worker cap from DROPLET_THREADS (0 or unset = automatic)."""
    raw = os.environ.get("DROPLET_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        return os.cpu_count() or 1
    return n


def load_config(path: str) -> ScenarioConfig:
    """Read a scenario from a flat INI file; see docs/config-format.md."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise OSError(f"cannot read config file {path}")

    if parser.has_option("run", "preset"):
        cfg = preset(parser.get("run", "preset"))
    else:
        dom = parser["domain"]
        regions = []
        for section in parser.sections():
            if not section.startswith("gas"):
                continue
            sec = parser[section]
            rho = sec.getfloat("rho")
            if sec.get("T") is not None:
                T = sec.getfloat("T")
            else:
                T = eos_temperature(rho, sec.getfloat("p"))
            regions.append(GasRegion(lo=sec.getfloat("lo"), hi=sec.getfloat("hi"),
                                     rho=rho, u=sec.getfloat("u", 0.0), T=T))
        regions.sort(key=lambda r: r.lo)
        liq = parser["liquid"]
        cfg = ScenarioConfig(
            name=parser.get("run", "name", fallback=os.path.basename(path)),
            a=dom.getfloat("a"), b=dom.getfloat("b"),
            liquid_lo=dom.getfloat("liquid_lo"), liquid_hi=dom.getfloat("liquid_hi"),
            gas_regions=regions,
            liquid_species=LiquidSpecies(rho=liq.getfloat("rho"),
                                         kappa=liq.getfloat("kappa", 0.63),
                                         c_p=liq.getfloat("c_p", 4181.0)),
            liquid_u=liq.getfloat("u", 0.0),
            liquid_T=liq.getfloat("T", 298.0),
            liquid_p=liq.getfloat("p"),
            wall_left=_wall_from(parser, "left"),
            wall_right=_wall_from(parser, "right"),
            t_end=parser.getfloat("run", "t_end"),
            output_times=tuple(
                float(v) for v in parser.get("run", "output_times").split(",")),
            char_length=dom.getfloat("char_length"),
        )

    overrides = {}
    if parser.has_section("run"):
        run = parser["run"]
        for key, cast in (("n_cells", int), ("molecules_per_cell", int),
                          ("seed", int), ("algorithm", str), ("t_end", float)):
            if run.get(key) is not None:
                overrides[key] = cast(run.get(key))
        if run.get("output_times") is not None and parser.has_option("run", "preset"):
            overrides["output_times"] = tuple(
                float(v) for v in run.get("output_times").split(","))
    if parser.has_section("safety"):
        saf = parser["safety"]
        overrides["safety"] = SafetyFactors(
            c_cfl=saf.getfloat("c_cfl", 0.5),
            c_diff=saf.getfloat("c_diff", 0.25),
            c_coll=saf.getfloat("c_coll", 0.2),
            c_art_visc=saf.getfloat("c_art_visc", 1.0))
    return replace(cfg, **overrides) if overrides else cfg


def _wall_from(parser: configparser.ConfigParser, side: str) -> WallSpec:
    sec = parser["walls"]
    kind = sec.get(side, "wall")
    get = lambda key: sec.getfloat(f"{side}_{key}") if sec.get(f"{side}_{key}") else None
    return WallSpec(kind=kind, u=get("u"), T=get("T"), rho=get("rho"))
