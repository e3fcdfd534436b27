"""Reference incompressible smoke solver producing matched coarse/fine sequences.

Single-phase semi-Lagrangian advection on a cell-centered collocated grid with
an FFT-based pressure projection. The projection diagonalizes the same central
difference divergence used for measurement (odd/even mirror extension for the
closed box), so the post-projection interior divergence is zero to solver
tolerance rather than merely second-order small.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import map_coordinates

from .fields import (
    GridShape,
    ScalarField,
    VectorField,
    divergence_array,
    frame_path,
    write_field,
)

MANIFEST_NAME = "manifest.json"


class ProjectionError(Exception):
    """Pressure projection left more divergence than the solver tolerance."""

    def __init__(self, residual: float, tolerance: float):
        super().__init__(f"projection residual {residual:.3e} exceeds tolerance {tolerance:.3e}")
        self.residual = residual
        self.tolerance = tolerance


@dataclass(frozen=True)
class Inlet:
    center: tuple[float, ...]
    radius: float
    velocity: tuple[float, ...]
    density_rate: float = 1.0
    oscillation_amplitude: float = 0.0
    oscillation_period: float = 0.0
    oscillation_axis: int = 0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("inlet radius must be positive")

    def velocity_at(self, t: float) -> np.ndarray:
        v = np.array(self.velocity, dtype=float)
        if self.oscillation_amplitude and self.oscillation_period > 0:
            v[self.oscillation_axis] += self.oscillation_amplitude * np.sin(
                2.0 * np.pi * t / self.oscillation_period
            )
        return v


@dataclass(frozen=True)
class DensityBlob:
    """Gaussian density bump placed in the initial state."""

    center: tuple[float, ...]
    sigma: float
    amplitude: float = 1.0


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, ...]
    radius: float


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]


@dataclass(frozen=True)
class SimConfig:
    shape: GridShape
    dt: float
    buoyancy: float = 1.0
    inlet: Inlet | None = None
    initial_blobs: tuple = ()
    obstacles: tuple = ()
    viscosity: float = 0.0
    seed: int = 0
    steps_per_frame: int = 1
    boundary: str = "closed"  # closed | periodic
    divergence_tolerance: float = 1e-4

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.steps_per_frame < 1:
            raise ValueError("steps_per_frame must be >= 1")
        if self.boundary not in ("closed", "periodic"):
            raise ValueError(f"unknown boundary mode {self.boundary!r}")

    def refine(self, ratio: int) -> "SimConfig":
        """Same physical scene on a grid with `ratio`x cells per axis."""
        fine_shape = GridShape(
            tuple(d * ratio for d in self.shape.dims), self.shape.spacing / ratio
        )
        return replace(self, shape=fine_shape)

    def to_dict(self) -> dict:
        d = {
            "dims": list(self.shape.dims),
            "spacing": self.shape.spacing,
            "dt": self.dt,
            "buoyancy": self.buoyancy,
            "viscosity": self.viscosity,
            "seed": self.seed,
            "steps_per_frame": self.steps_per_frame,
            "boundary": self.boundary,
            "divergence_tolerance": self.divergence_tolerance,
        }
        if self.inlet is not None:
            d["inlet"] = {
                "center": list(self.inlet.center),
                "radius": self.inlet.radius,
                "velocity": list(self.inlet.velocity),
                "density_rate": self.inlet.density_rate,
                "oscillation_amplitude": self.inlet.oscillation_amplitude,
                "oscillation_period": self.inlet.oscillation_period,
                "oscillation_axis": self.inlet.oscillation_axis,
            }
        if self.initial_blobs:
            d["initial_blobs"] = [
                {"center": list(b.center), "sigma": b.sigma, "amplitude": b.amplitude}
                for b in self.initial_blobs
            ]
        obs = []
        for o in self.obstacles:
            if isinstance(o, Sphere):
                obs.append({"kind": "sphere", "center": list(o.center), "radius": o.radius})
            else:
                obs.append({"kind": "box", "lo": list(o.lo), "hi": list(o.hi)})
        if obs:
            d["obstacles"] = obs
        return d

    @staticmethod
    def from_dict(d: dict) -> "SimConfig":
        inlet = None
        if d.get("inlet"):
            i = d["inlet"]
            inlet = Inlet(
                center=tuple(i["center"]),
                radius=float(i["radius"]),
                velocity=tuple(i["velocity"]),
                density_rate=float(i.get("density_rate", 1.0)),
                oscillation_amplitude=float(i.get("oscillation_amplitude", 0.0)),
                oscillation_period=float(i.get("oscillation_period", 0.0)),
                oscillation_axis=int(i.get("oscillation_axis", 0)),
            )
        obstacles = []
        for o in d.get("obstacles", []):
            if o["kind"] == "sphere":
                obstacles.append(Sphere(tuple(o["center"]), float(o["radius"])))
            elif o["kind"] == "box":
                obstacles.append(Box(tuple(o["lo"]), tuple(o["hi"])))
            else:
                raise ValueError(f"unknown obstacle kind {o['kind']!r}")
        blobs = tuple(
            DensityBlob(tuple(b["center"]), float(b["sigma"]), float(b.get("amplitude", 1.0)))
            for b in d.get("initial_blobs", [])
        )
        return SimConfig(
            shape=GridShape(tuple(d["dims"]), float(d.get("spacing", 1.0))),
            dt=float(d["dt"]),
            buoyancy=float(d.get("buoyancy", 1.0)),
            inlet=inlet,
            initial_blobs=blobs,
            obstacles=tuple(obstacles),
            viscosity=float(d.get("viscosity", 0.0)),
            seed=int(d.get("seed", 0)),
            steps_per_frame=int(d.get("steps_per_frame", 1)),
            boundary=d.get("boundary", "closed"),
            divergence_tolerance=float(d.get("divergence_tolerance", 1e-4)),
        )


@dataclass(frozen=True)
class SimState:
    velocity: VectorField
    density: ScalarField
    time_index: int
    config: SimConfig

    def __post_init__(self):
        if self.velocity.shape != self.density.shape:
            raise ValueError("velocity and density shapes differ")


def initial_state(cfg: SimConfig) -> SimState:
    dims = cfg.shape.dims
    vel = VectorField(cfg.shape, np.zeros(dims + (len(dims),)))
    den = np.zeros(dims)
    if cfg.initial_blobs:
        pos = _cell_centers(cfg.shape)
        for b in cfg.initial_blobs:
            r2 = ((pos - np.asarray(b.center)) ** 2).sum(axis=-1)
            den += b.amplitude * np.exp(-r2 / (2.0 * b.sigma**2))
    return SimState(vel, ScalarField(cfg.shape, den), 0, cfg)


# ---------------------------------------------------------------------------
# Step internals
# ---------------------------------------------------------------------------


def _cell_centers(shape: GridShape) -> np.ndarray:
    axes = [(np.arange(d) + 0.5) * shape.spacing for d in shape.dims]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _region_mask(shape: GridShape, center, radius) -> np.ndarray:
    pos = _cell_centers(shape)
    return ((pos - np.asarray(center)) ** 2).sum(axis=-1) <= radius**2


def _inlet_weight(shape: GridShape, center, radius) -> np.ndarray:
    """Quadratic falloff weight: 1 at the inlet center, 0 at the rim.

    A soft profile is resolved consistently at every resolution, so paired
    coarse/fine runs do not disagree at the rim from frame one.
    """
    pos = _cell_centers(shape)
    r2 = ((pos - np.asarray(center)) ** 2).sum(axis=-1) / radius**2
    return np.maximum(1.0 - r2, 0.0)


def _obstacle_mask(cfg: SimConfig) -> np.ndarray | None:
    if not cfg.obstacles:
        return None
    mask = np.zeros(cfg.shape.dims, dtype=bool)
    pos = _cell_centers(cfg.shape)
    for o in cfg.obstacles:
        if isinstance(o, Sphere):
            mask |= ((pos - np.asarray(o.center)) ** 2).sum(axis=-1) <= o.radius**2
        else:
            inside = np.ones(cfg.shape.dims, dtype=bool)
            for a in range(cfg.shape.ndim):
                inside &= (pos[..., a] >= o.lo[a]) & (pos[..., a] <= o.hi[a])
            mask |= inside
    return mask


def _advect(values: np.ndarray, vel: np.ndarray, cfg: SimConfig, index_grid: np.ndarray) -> np.ndarray:
    """Semi-Lagrangian: backtrace cell centers through vel, multilinear lookup."""
    depart = index_grid - vel * (cfg.dt / cfg.shape.spacing)
    coords = np.moveaxis(depart, -1, 0)
    mode = "grid-wrap" if cfg.boundary == "periodic" else "nearest"
    if values.ndim == len(cfg.shape.dims):
        return map_coordinates(values, coords, order=1, mode=mode)
    out = np.empty_like(values)
    for c in range(values.shape[-1]):
        out[..., c] = map_coordinates(values[..., c], coords, order=1, mode=mode)
    return out


def _diffuse(vel: np.ndarray, cfg: SimConfig) -> np.ndarray:
    h2 = cfg.shape.spacing**2
    ndim = len(cfg.shape.dims)
    # explicit substeps keep nu*dt/h^2 inside the stability bound
    limit = 0.2 * h2 / ndim
    nsub = max(1, int(np.ceil(cfg.viscosity * cfg.dt / limit)))
    k = cfg.viscosity * cfg.dt / nsub / h2
    for _ in range(nsub):
        lap = np.zeros_like(vel)
        pad_mode = "wrap" if cfg.boundary == "periodic" else "edge"
        padded = np.pad(vel, [(1, 1)] * ndim + [(0, 0)], mode=pad_mode)
        core = tuple(slice(1, -1) for _ in range(ndim))
        for a in range(ndim):
            lo = tuple(slice(0, -2) if i == a else s for i, s in enumerate(core))
            hi = tuple(slice(2, None) if i == a else s for i, s in enumerate(core))
            lap += padded[lo] + padded[hi]
        vel = vel + k * (lap - 2 * ndim * vel)
    return vel


def _projection_symbols(ext_dims: tuple[int, ...], spacing: float):
    """Per-axis symbols of the central difference on the extended periodic grid."""
    return [np.sin(2.0 * np.pi * np.fft.fftfreq(n)) / spacing for n in ext_dims]


def project(vel: np.ndarray, shape: GridShape, boundary: str = "closed") -> np.ndarray:
    """Remove the centrally-measured divergent part of a collocated field.

    Closed boxes are handled by mirror extension: wall-normal components are
    extended odd across each wall (zero normal flow at the wall plane) and
    tangential components even; the extension is 2N-periodic, where the central
    difference operator is diagonal in Fourier space.
    """
    ndim = len(shape.dims)
    comps = []
    for c in range(ndim):
        u = vel[..., c]
        if boundary == "closed":
            for a in range(ndim):
                mirror = np.flip(u, axis=a)
                if a == c:
                    mirror = -mirror
                u = np.concatenate([u, mirror], axis=a)
        comps.append(np.fft.fftn(u))
    sym = _projection_symbols(comps[0].shape, shape.spacing)
    s = np.meshgrid(*sym, indexing="ij", sparse=True)
    s2 = sum(si**2 for si in s)
    q = sum(si * ci for si, ci in zip(s, comps))
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(s2 > 0, q / np.where(s2 > 0, s2, 1.0), 0.0)
    out = np.empty_like(vel)
    core = tuple(slice(0, d) for d in shape.dims)
    for c in range(ndim):
        corrected = comps[c] - s[c] * scale
        out[..., c] = np.fft.ifftn(corrected).real[core]
    return out


def interior_divergence_max(vel: np.ndarray, shape: GridShape) -> float:
    div = divergence_array(vel, shape.spacing)
    core = tuple(slice(1, -1) for _ in shape.dims)
    return float(np.abs(div[core]).max())


def step(s: SimState) -> SimState:
    """Advance one dt: inlet + buoyancy, advection, diffusion, obstacles, projection."""
    cfg = s.config
    shape = cfg.shape
    vel = np.array(s.velocity.data)
    den = np.array(s.density.values)
    t = s.time_index * cfg.dt

    if cfg.inlet is not None:
        w = _inlet_weight(shape, cfg.inlet.center, cfg.inlet.radius)
        vel = vel * (1.0 - w[..., None]) + w[..., None] * cfg.inlet.velocity_at(t)
        den = den + cfg.inlet.density_rate * cfg.dt * w
    if cfg.buoyancy:
        vel[..., 1] += cfg.buoyancy * den * cfg.dt

    index_grid = _cell_centers(GridShape(shape.dims, 1.0)) - 0.5  # integer index mesh
    carrier = vel
    vel = _advect(vel, carrier, cfg, index_grid)
    den = np.maximum(_advect(den, carrier, cfg, index_grid), 0.0)

    if cfg.viscosity > 0:
        vel = _diffuse(vel, cfg)

    mask = _obstacle_mask(cfg)
    if mask is not None:
        vel[mask] = 0.0

    vel = project(vel, shape, cfg.boundary)

    max_speed = float(np.sqrt((vel**2).sum(axis=-1)).max())
    if max_speed > 0:
        resid = interior_divergence_max(vel, shape) * shape.spacing
        if resid > cfg.divergence_tolerance * max_speed:
            raise ProjectionError(resid, cfg.divergence_tolerance * max_speed)

    return SimState(
        VectorField(shape, vel), ScalarField(shape, den), s.time_index + 1, cfg
    )


# ---------------------------------------------------------------------------
# Sequence drivers
# ---------------------------------------------------------------------------


def run_frames(cfg: SimConfig, frames: int):
    """Yield `frames` states: the initial state, then one per steps_per_frame block."""
    s = initial_state(cfg)
    yield s
    for _ in range(frames - 1):
        for _ in range(cfg.steps_per_frame):
            s = step(s)
        yield s


def run_simulation(cfg: SimConfig, frames: int, outdir: str | os.PathLike) -> None:
    os.makedirs(outdir, exist_ok=True)
    for i, s in enumerate(run_frames(cfg, frames)):
        write_field(s.velocity, frame_path(outdir, "vel", i))
        write_field(s.density, frame_path(outdir, "den", i))


def run_pair(cfg_coarse: SimConfig, ratio: int, frames: int, outdir: str | os.PathLike) -> dict:
    """Run aligned coarse and fine simulations and write both VF01 sequences.

    The fine run is the same physical scene with dims*ratio cells and identical
    dt, parameters and seed; frames align in time index.
    """
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    outdir = os.fspath(outdir)
    coarse_dir = os.path.join(outdir, "coarse")
    fine_dir = os.path.join(outdir, "fine")
    run_simulation(cfg_coarse, frames, coarse_dir)
    cfg_fine = cfg_coarse.refine(ratio)
    run_simulation(cfg_fine, frames, fine_dir)
    manifest = {
        "kind": "simulation_pair",
        "ratio": ratio,
        "frames": frames,
        "coarse": cfg_coarse.to_dict(),
        "fine": cfg_fine.to_dict(),
        "coarse_dir": "coarse",
        "fine_dir": "fine",
    }
    write_manifest(manifest, os.path.join(outdir, MANIFEST_NAME))
    return manifest


def write_manifest(manifest: dict, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path: str | os.PathLike) -> dict:
    with open(path) as fh:
        return json.load(fh)


def run_pair_from_manifest(path: str | os.PathLike, outdir: str | os.PathLike) -> dict:
    m = read_manifest(path)
    return run_pair(SimConfig.from_dict(m["coarse"]), int(m["ratio"]), int(m["frames"]), outdir)
