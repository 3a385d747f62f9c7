"""Domain types shared across the package: grid geometry, fields, particle
batches, species and run configuration.

Units are normalized (c = 1, lengths in ion inertial lengths, times in
inverse ion plasma frequencies).  Everything is double precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class PicError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PicError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class DomainError(PicError, ValueError):
    pass


class NumericalFault(PicError, FloatingPointError):
    def __init__(self, index: int, message: str = "non-finite value produced"):
        self.index = index
        super().__init__(f"particle {index}: {message}")


class AllocationError(PicError, MemoryError):
    pass


class EngineFault(PicError, RuntimeError):
    pass


class CFLViolation(PicError):
    def __init__(self, worker: int, species: int, index: int, message: str):
        self.worker, self.species, self.index = worker, species, index
        super().__init__(f"worker {worker}, species {species}, particle {index}: {message}")


class MetricError(PicError, ValueError):
    pass


class Vec3(NamedTuple):
    x: float
    y: float
    z: float

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)

    def __array__(self, dtype=None, copy=None):
        return np.array((self.x, self.y, self.z), dtype=dtype or np.float64)


ZERO = Vec3(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    nz: int
    lx: float
    ly: float
    lz: float

    def __post_init__(self):
        for key in ("nx", "ny", "nz"):
            if int(getattr(self, key)) < 2:
                raise ConfigError(key, "need at least 2 cells")
        for key in ("lx", "ly", "lz"):
            v = getattr(self, key)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(key, "domain length must be positive")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def dz(self) -> float:
        return self.lz / self.nz

    @property
    def ncells(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def node_shape(self) -> tuple[int, int, int]:
        """(nz+1, ny+1, nx+1): C-order shape whose flattening gives the node index."""
        return (self.nz + 1, self.ny + 1, self.nx + 1)

    @property
    def nnodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1) * (self.nz + 1)

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy * self.dz

    def node_index(self, i: int, j: int, k: int) -> int:
        return i + j * (self.nx + 1) + k * (self.nx + 1) * (self.ny + 1)

    def params(self) -> np.ndarray:
        """Packed constants (nx, ny, nz, lx, ly, lz, dx, dy, dz) as float64."""
        return np.array(
            [self.nx, self.ny, self.nz, self.lx, self.ly, self.lz, self.dx, self.dy, self.dz],
            dtype=np.float64,
        )


def _wrap1(p: float, length: float) -> float:
    if 0.0 <= p < length:
        return p
    r = p - length * math.floor(p / length)
    if r < 0.0:
        r += length
    # p a hair below 0 can round up to exactly length
    if r >= length:
        r -= length
    return r


def wrap_periodic(pos, grid: Grid) -> Vec3:
    """Map a position back into [0, l) in every direction."""
    x, y, z = (float(c) for c in pos)
    return Vec3(_wrap1(x, grid.lx), _wrap1(y, grid.ly), _wrap1(z, grid.lz))


def _cell1(p: float, h: float, n: int, length: float, axis: str) -> tuple[int, float]:
    if not (0.0 <= p < length):
        raise DomainError(f"{axis}={p!r} outside [0, {length})")
    s = p / h
    i = int(math.floor(s))
    if i >= n:
        # p/h rounded up to n for p just below the upper edge
        i = n - 1
    f = s - i
    if f >= 1.0:
        f = math.nextafter(1.0, 0.0)
    return i, f


def grid_cell_of(pos, grid: Grid) -> tuple[int, int, int, float, float, float]:
    """Cell indices and fractional offsets of an in-domain position."""
    x, y, z = (float(c) for c in pos)
    i, fx = _cell1(x, grid.dx, grid.nx, grid.lx, "x")
    j, fy = _cell1(y, grid.dy, grid.ny, grid.ly, "y")
    k, fz = _cell1(z, grid.dz, grid.nz, grid.lz, "z")
    return i, j, k, fx, fy, fz


class FieldMesh:
    """Node-centred E and B.

    Both fields live interleaved in one (nnodes, 6) block ``EB`` so a field
    update crosses the offload boundary as a single copy; ``E`` and ``B`` are
    (nnodes, 3) views.  Node (i, j, k) is row i + j*(nx+1) + k*(nx+1)*(ny+1);
    nodes at i == nx (likewise j, k) are periodic images of i == 0.
    """

    __slots__ = ("grid", "EB")

    def __init__(self, grid: Grid, E=None, B=None):
        self.grid = grid
        n = grid.nnodes
        self.EB = np.zeros((n, 6))
        for col, F in ((0, E), (3, B)):
            if F is not None:
                F = np.asarray(F, dtype=np.float64)
                if F.shape != (n, 3):
                    raise ValueError(f"field arrays must have shape ({n}, 3)")
                self.EB[:, col:col + 3] = F

    @classmethod
    def zeros(cls, grid: Grid) -> "FieldMesh":
        return cls(grid)

    E = property(lambda self: self.EB[:, 0:3])
    B = property(lambda self: self.EB[:, 3:6])

    def E3d(self) -> np.ndarray:
        return self.E.reshape(*self.grid.node_shape, 3)

    def B3d(self) -> np.ndarray:
        return self.B.reshape(*self.grid.node_shape, 3)

    def copy(self) -> "FieldMesh":
        m = FieldMesh(self.grid)
        m.EB[:] = self.EB
        return m

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.EB).all())


COMPONENTS = ("x", "y", "z", "u", "v", "w")


class ParticleBatch:
    """One species' particles in structure-of-arrays layout.

    All six components live in a single (6, capacity) block so a batch can be
    moved across the offload boundary with one copy.  Capacity is fixed when
    the batch is allocated.
    """

    __slots__ = ("data", "count", "qom", "q_per_particle", "species_id")

    def __init__(self, capacity: int, qom: float, q_per_particle: float, species_id: int = 0):
        if capacity < 0:
            raise ValueError("capacity must be non-negative")
        self.data = np.zeros((6, capacity), dtype=np.float64)
        self.count = 0
        self.qom = float(qom)
        self.q_per_particle = float(q_per_particle)
        self.species_id = species_id

    @classmethod
    def from_arrays(cls, x, y, z, u, v, w, qom, q_per_particle, species_id=0, capacity=None):
        n = len(x)
        b = cls(n if capacity is None else capacity, qom, q_per_particle, species_id)
        b.set(np.vstack([np.asarray(a, dtype=np.float64) for a in (x, y, z, u, v, w)]))
        return b

    @property
    def capacity(self) -> int:
        return self.data.shape[1]

    x = property(lambda self: self.data[0])
    y = property(lambda self: self.data[1])
    z = property(lambda self: self.data[2])
    u = property(lambda self: self.data[3])
    v = property(lambda self: self.data[4])
    w = property(lambda self: self.data[5])

    @property
    def active(self) -> np.ndarray:
        """View of the (6, count) live block."""
        return self.data[:, : self.count]

    @property
    def active_nbytes(self) -> int:
        return 6 * self.count * 8

    def set(self, block: np.ndarray) -> None:
        n = block.shape[1]
        if n > self.capacity:
            raise AllocationError(
                f"species {self.species_id}: {n} particles exceed capacity {self.capacity}"
            )
        self.data[:, :n] = block
        self.count = n

    def copy(self) -> "ParticleBatch":
        b = ParticleBatch.__new__(ParticleBatch)
        b.data = self.data.copy()
        b.count, b.qom, b.q_per_particle, b.species_id = (
            self.count, self.qom, self.q_per_particle, self.species_id)
        return b

    def records(self) -> np.ndarray:
        """(count, 6) array of (x, y, z, u, v, w) rows."""
        return self.active.T.copy()

    def __repr__(self):
        return (f"ParticleBatch(species={self.species_id}, count={self.count}, "
                f"capacity={self.capacity}, qom={self.qom})")


@dataclass(frozen=True)
class Species:
    id: int
    qom: float
    q_per_particle: float
    ppc: int
    uth: Vec3
    u0: Vec3 = ZERO
    population: str = "background"

    def __post_init__(self):
        if self.ppc < 1:
            raise ConfigError("ppc", "must be >= 1")
        if self.population not in ("sheet", "background"):
            raise ConfigError("population", f"unknown population {self.population!r}")


@dataclass(frozen=True)
class TransferModel:
    """Cost parameters of the modeled host/device interconnect.

    ``staging_penalty`` multiplies the modeled time of pageable transfers
    (the extra staging copy).  With ``throttle`` on a transfer never finishes
    before its modeled time; with it off only the real copy cost is paid.
    """

    bandwidth_bytes_per_s: float = 8e9
    per_call_latency_s: float = 1e-4
    staging_penalty: float = 1.5
    throttle: bool = True

    def __post_init__(self):
        if not self.bandwidth_bytes_per_s > 0:
            raise ConfigError("bandwidth", "must be positive")
        if not self.per_call_latency_s >= 0:
            raise ConfigError("latency", "must be non-negative")
        if not self.staging_penalty >= 1:
            raise ConfigError("staging_penalty", "must be >= 1")

    def modeled_time(self, nbytes: int, pinned: bool) -> float:
        t = nbytes / self.bandwidth_bytes_per_s
        if not pinned:
            t *= self.staging_penalty
        return self.per_call_latency_s + t


ENGINES = ("cpu", "naive", "pinned", "prefetch")

DEFAULT_SEED = 20190417
MIB = 1 << 20


@dataclass
class SimConfig:
    """Complete description of a run.  Defaults are the full-size GEM benchmark."""

    grid: Grid = field(default_factory=lambda: Grid(64, 64, 32, 25.6, 12.8, 6.4))
    dt: float = 0.125
    species: list = field(default_factory=list)
    pc_iterations: int = 3
    cycles: int = 10
    repetitions: int = 6
    seed: int = DEFAULT_SEED
    engine: str = "cpu"
    workers: int = 1
    transfer: TransferModel = field(default_factory=TransferModel)
    device_capacity_bytes: int = 4096 * MIB
    particle_region_bytes: int = 256 * MIB
    field_passes: int = 64
    gem: object = None

    def __post_init__(self):
        if not self.species:
            from .initial import GemParams, gem_species

            if self.gem is None:
                self.gem = GemParams()
            self.species = gem_species(self.grid, self.gem, ppc=216)
        if self.gem is None:
            from .initial import GemParams

            self.gem = GemParams()

    @property
    def ppc(self) -> int:
        return self.species[0].ppc

    def validate(self) -> "SimConfig":
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError("dt", "must be positive")
        if self.pc_iterations < 1:
            raise ConfigError("pc_iterations", "must be >= 1")
        if self.cycles < 0:
            raise ConfigError("cycles", "must be >= 0")
        if self.repetitions < 2:
            raise ConfigError("repetitions", "need >= 2 (the first is a warmup)")
        if self.engine not in ENGINES:
            raise ConfigError("engine", f"must be one of {', '.join(ENGINES)}")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        if self.grid.ny % self.workers:
            raise ConfigError("workers", f"{self.workers} does not divide ny={self.grid.ny}")
        if self.grid.ny // self.workers < 2:
            raise ConfigError("workers", "each worker needs a slab of at least 2 cells")
        if self.device_capacity_bytes <= 0:
            raise ConfigError("device_capacity_bytes", "must be positive")
        if self.particle_region_bytes <= 0:
            raise ConfigError("particle_region_bytes", "must be positive")
        if self.field_passes < 0:
            raise ConfigError("field_passes", "must be >= 0")
        if not self.species:
            raise ConfigError("species", "at least one species required")
        return self
