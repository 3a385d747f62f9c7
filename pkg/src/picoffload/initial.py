"""Initial conditions: the GEM reconnection setup (Harris sheet plus flux
perturbation) and a uniform-plasma fixture for physics tests."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigError, FieldMesh, Grid, ParticleBatch, SimConfig, Species, Vec3, ZERO,
)


@dataclass(frozen=True)
class GemParams:
    b0: float = 1.0
    lambda_: float = 0.5
    nb_over_n0: float = 0.2
    psi0: float = 0.1
    ti_over_te: float = 5.0
    mass_ratio: float = 25.0
    uth_e: float = 0.045
    uth_i: float = 0.0126

    def __post_init__(self):
        for key in ("b0", "lambda_", "nb_over_n0", "ti_over_te", "mass_ratio", "uth_e", "uth_i"):
            if not getattr(self, key) > 0:
                raise ConfigError(key.rstrip("_"), "must be positive")
        if not self.psi0 >= 0:
            raise ConfigError("psi0", "must be non-negative")

    def check(self, grid: Grid) -> None:
        if not self.lambda_ < grid.ly / 2:
            raise ConfigError("lambda", "sheet half-thickness must be below ly/2")

    def sheet_drifts(self) -> tuple[float, float]:
        """z-drifts (electron, ion) carrying the Harris current.

        Uses curl B = 4*pi*J with unit peak sheet density, split between the
        species in proportion to their temperatures.
        """
        du = self.b0 / (4.0 * math.pi * self.lambda_)
        te_frac = 1.0 / (1.0 + self.ti_over_te)
        return du * te_frac, -du * (1.0 - te_frac)


def gem_species(grid: Grid, p: GemParams, ppc: int) -> list[Species]:
    """Sheet electrons, sheet ions, background electrons, background ions."""
    vol = grid.cell_volume
    ue, ui = p.sheet_drifts()
    qe, qi = -p.mass_ratio, 1.0
    n0, nb = 1.0, p.nb_over_n0
    ve, vi = Vec3(p.uth_e, p.uth_e, p.uth_e), Vec3(p.uth_i, p.uth_i, p.uth_i)
    return [
        Species(0, qe, -n0 * vol / ppc, ppc, ve, Vec3(0.0, 0.0, ue), "sheet"),
        Species(1, qi, n0 * vol / ppc, ppc, vi, Vec3(0.0, 0.0, ui), "sheet"),
        Species(2, qe, -nb * vol / ppc, ppc, ve, ZERO, "background"),
        Species(3, qi, nb * vol / ppc, ppc, vi, ZERO, "background"),
    ]


def species_rng(seed: int, species_id: int) -> np.random.Generator:
    # counter-based stream per species: independent of worker count and order
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, species_id])))


def node_coordinates(grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flattened x, y, z coordinates of every node in storage order."""
    k, j, i = np.meshgrid(
        np.arange(grid.nz + 1), np.arange(grid.ny + 1), np.arange(grid.nx + 1), indexing="ij"
    )
    return (i.ravel() * grid.dx, j.ravel() * grid.dy, k.ravel() * grid.dz)


def gem_magnetic_field(grid: Grid, p: GemParams) -> np.ndarray:
    x, y, _ = node_coordinates(grid)
    yc = y - grid.ly / 2
    B = np.zeros((grid.nnodes, 3))
    kx, ky = 2 * math.pi / grid.lx, math.pi / grid.ly
    # B = b0 tanh(yc/lambda) x_hat + z_hat x grad(psi)
    B[:, 0] = p.b0 * np.tanh(yc / p.lambda_) + p.psi0 * ky * np.cos(kx * x) * np.sin(ky * yc)
    B[:, 1] = -p.psi0 * kx * np.sin(kx * x) * np.cos(ky * yc)
    return B


def _cell_origins(grid: Grid, ppc: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    c = np.repeat(np.arange(grid.ncells), ppc)
    i = c % grid.nx
    j = (c // grid.nx) % grid.ny
    k = c // (grid.nx * grid.ny)
    return i, j, k


def _inside(a: np.ndarray, length: float) -> np.ndarray:
    return np.minimum(a, math.nextafter(length, 0.0))


def _positions(grid: Grid, ppc: int, rng: np.random.Generator):
    i, j, k = _cell_origins(grid, ppc)
    r = rng.random((3, i.size))
    x = _inside((i + r[0]) * grid.dx, grid.lx)
    y = _inside((j + r[1]) * grid.dy, grid.ly)
    z = _inside((k + r[2]) * grid.dz, grid.lz)
    return x, y, z


def _velocities(sp: Species, n: int, rng: np.random.Generator):
    g = rng.standard_normal((3, n))
    return (sp.u0.x + sp.uth.x * g[0], sp.u0.y + sp.uth.y * g[1], sp.u0.z + sp.uth.z * g[2])


def uniform_batch(grid: Grid, sp: Species, seed: int) -> ParticleBatch:
    """Exactly ``sp.ppc`` particles in every cell, Maxwellian velocities."""
    rng = species_rng(seed, sp.id)
    x, y, z = _positions(grid, sp.ppc, rng)
    u, v, w = _velocities(sp, x.size, rng)
    return ParticleBatch.from_arrays(x, y, z, u, v, w, sp.qom, sp.q_per_particle, sp.id)


def sheet_batch(grid: Grid, sp: Species, p: GemParams, seed: int) -> ParticleBatch:
    """Harris-sheet population: ``sp.ppc`` proposals per cell thinned by sech^2."""
    rng = species_rng(seed, sp.id)
    x, y, z = _positions(grid, sp.ppc, rng)
    keep = rng.random(x.size) < np.cosh((y - grid.ly / 2) / p.lambda_) ** -2
    x, y, z = x[keep], y[keep], z[keep]
    u, v, w = _velocities(sp, x.size, rng)
    return ParticleBatch.from_arrays(x, y, z, u, v, w, sp.qom, sp.q_per_particle, sp.id)


def expected_sheet_count(grid: Grid, p: GemParams, ppc: int) -> float:
    """Analytic mean population of a sheet species."""
    integral = 2 * p.lambda_ * math.tanh(grid.ly / (2 * p.lambda_))
    return ppc * grid.nx * grid.nz * integral / grid.dy


def init_gem(cfg: SimConfig, p: GemParams | None = None) -> tuple[FieldMesh, list[ParticleBatch]]:
    p = p or cfg.gem
    if len(cfg.species) != 4:
        raise ConfigError("species", f"GEM setup needs 4 species, got {len(cfg.species)}")
    p.check(cfg.grid)
    mesh = FieldMesh(cfg.grid, np.zeros((cfg.grid.nnodes, 3)), gem_magnetic_field(cfg.grid, p))
    batches = [
        sheet_batch(cfg.grid, sp, p, cfg.seed) if sp.population == "sheet"
        else uniform_batch(cfg.grid, sp, cfg.seed)
        for sp in cfg.species
    ]
    return mesh, batches


def init_uniform(cfg: SimConfig, E0=ZERO, B0=ZERO) -> tuple[FieldMesh, list[ParticleBatch]]:
    n = cfg.grid.nnodes
    mesh = FieldMesh(cfg.grid, np.tile(np.asarray(E0, float), (n, 1)),
                     np.tile(np.asarray(B0, float), (n, 1)))
    return mesh, [uniform_batch(cfg.grid, sp, cfg.seed) for sp in cfg.species]
