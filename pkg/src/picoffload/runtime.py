"""Cycle orchestration across in-process workers.

The global domain is cut into equal y-slabs, one per worker.  Each worker
owns the particles in its slab and has its own mover engine (its own queue
executor and device arena), mirroring one accelerator per process.  A cycle
is: field phase, mover phase, particle exchange, moment deposition.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    AllocationError, CFLViolation, ConfigError, EngineFault, Grid, ParticleBatch, SimConfig,
)
from .initial import init_gem, init_uniform
from .kernels import MomentMesh, MoverParams, _smooth_slab, deposit_moments, logical_field, store_logical
from .offload.engines import OffloadState, make_engine


@dataclass(frozen=True)
class Subdomain:
    worker_id: int
    y_range: tuple[int, int]
    neighbors: tuple[int, int]


@dataclass
class CycleTimings:
    t_field: float = 0.0
    t_mover: float = 0.0
    t_moments: float = 0.0
    t_exchange: float = 0.0

    @property
    def total(self) -> float:
        return self.t_field + self.t_mover + self.t_moments + self.t_exchange


def decompose(grid: Grid, workers: int) -> list[Subdomain]:
    if workers < 1 or grid.ny % workers:
        raise ConfigError("workers", f"{workers} does not divide ny={grid.ny}")
    h = grid.ny // workers
    if h < 2:
        raise ConfigError("workers", f"slabs of {h} cell(s); need at least 2")
    return [Subdomain(w, (w * h, (w + 1) * h), ((w - 1) % workers, (w + 1) % workers))
            for w in range(workers)]


def owners(y: np.ndarray, grid: Grid, workers: int) -> np.ndarray:
    """Worker id owning each y position (same cell rule as the kernels)."""
    j = np.minimum((y * (1.0 / grid.dy)).astype(np.int64), grid.ny - 1)
    return j // (grid.ny // workers)


def split_by_owner(batch: ParticleBatch, grid: Grid, workers: int, capacity: int) -> list[ParticleBatch]:
    own = owners(batch.y[: batch.count], grid, workers)
    out = []
    for w in range(workers):
        b = ParticleBatch(capacity, batch.qom, batch.q_per_particle, batch.species_id)
        b.set(batch.active[:, own == w])
        out.append(b)
    return out


def worker_capacity(batch: ParticleBatch, grid: Grid, workers: int) -> int:
    if workers == 1:
        return batch.count
    counts = np.bincount(owners(batch.y[: batch.count], grid, workers), minlength=workers)
    return int(min(batch.count, math.ceil(1.25 * counts.max()) + 1024))


def exchange_particles(per_worker: list[list[ParticleBatch]], subdomains: list[Subdomain],
                       grid: Grid) -> int:
    """Hand particles that left their slab to the owning neighbour, in place.

    ``per_worker[w][s]`` is worker w's batch of species s.  New batch order is
    by source worker id, then original index.  Returns the number of
    particles that changed owner.
    """
    W = len(subdomains)
    if W == 1:
        return 0
    moved = 0
    for s in range(len(per_worker[0])):
        src = [per_worker[w][s] for w in range(W)]
        own = [owners(b.y[: b.count], grid, W) for b in src]
        leaving = [int(np.count_nonzero(o != w)) for w, o in enumerate(own)]
        if not any(leaving):
            continue
        for w, o in enumerate(own):
            ok = (o == w) | (o == subdomains[w].neighbors[0]) | (o == subdomains[w].neighbors[1])
            if not ok.all():
                i = int(np.flatnonzero(~ok)[0])
                raise CFLViolation(w, src[w].species_id, i,
                                   f"moved from slab {w} to slab {int(o[i])} in one step")
        blocks = [np.concatenate([src[w].active[:, own[w] == d] for w in range(W)], axis=1)
                  for d in range(W)]
        for d in range(W):
            if blocks[d].shape[1] > src[d].capacity:
                raise AllocationError(
                    f"worker {d}, species {src[d].species_id}: {blocks[d].shape[1]} particles "
                    f"exceed capacity {src[d].capacity}")
        for d in range(W):
            src[d].set(blocks[d])
        moved += sum(leaving)
    return moved


def with_ppc(cfg: SimConfig, ppc: int) -> SimConfig:
    """Same run with ``ppc`` particles per cell; macro-charges rescale to keep densities."""
    species = [replace(sp, ppc=ppc, q_per_particle=sp.q_per_particle * sp.ppc / ppc)
               for sp in cfg.species]
    return replace(cfg, species=species)


class Simulation:
    """A full multi-worker run of the computational cycle.

    ``setup`` is ``"gem"`` or ``"uniform"``; alternatively pass an explicit
    ``initial=(mesh, batches)``.
    """

    def __init__(self, cfg: SimConfig, setup: str = "gem", initial=None, E0=None, B0=None,
                 pressure: bool = False):
        cfg.validate()
        self.cfg = cfg
        self.grid = cfg.grid
        if initial is None:
            if setup == "gem":
                initial = init_gem(cfg)
            elif setup == "uniform":
                initial = init_uniform(cfg, *(v for v in (E0, B0) if v is not None))
            else:
                raise ConfigError("setup", f"unknown initial condition {setup!r}")
        mesh, batches = initial
        self.subdomains = decompose(self.grid, cfg.workers)
        self._initial_mesh = mesh.copy()
        self._initial_batches = [b.copy() for b in batches]
        self.mesh = mesh.copy()
        W = cfg.workers
        caps = [worker_capacity(b, self.grid, W) for b in batches]
        split = [split_by_owner(b, self.grid, W, c) for b, c in zip(batches, caps)]
        self.batches = [[split[s][w] for s in range(len(batches))] for w in range(W)]
        movers = [MoverParams(cfg.dt, b.qom, cfg.pc_iterations) for b in batches]
        self.states = [OffloadState(self.grid, self.mesh, self.batches[w], movers, cfg.field_passes)
                       for w in range(W)]
        self.engines = []
        self.pool = ThreadPoolExecutor(max_workers=W, thread_name_prefix="worker") if W > 1 else None
        try:
            for st in self.states:
                eng = make_engine(cfg.engine, cfg.transfer, cfg.device_capacity_bytes,
                                  cfg.particle_region_bytes)
                self.engines.append(eng)
                eng.setup(st)
                st.engine = eng
        except Exception:
            self.close()
            raise
        self.moments = MomentMesh(self.grid, pressure)
        self._private = [MomentMesh(self.grid, pressure) for _ in range(W)]
        self.valid = True

    @property
    def total_particles(self) -> int:
        return sum(b.count for bs in self.batches for b in bs)

    def _parallel(self, fn, items):
        if self.pool is None:
            return [fn(x) for x in items]
        return list(self.pool.map(fn, items))

    def reset(self) -> None:
        """Restore the initial particles and fields (engines and buffers are kept)."""
        self.mesh.EB[:] = self._initial_mesh.EB
        W = len(self.subdomains)
        for s, b in enumerate(self._initial_batches):
            own = owners(b.y[: b.count], self.grid, W)
            for w in range(W):
                self.batches[w][s].set(b.active[:, own == w])

    # -- phases

    def _field_phase(self) -> None:
        passes = self.cfg.field_passes
        if passes == 0:
            return
        src = logical_field(self.mesh.E, self.grid)
        dst = np.empty_like(src)
        for _ in range(passes):
            self._parallel(lambda sd: _smooth_slab(src, dst, *sd.y_range), self.subdomains)
            src, dst = dst, src
        store_logical(self.mesh.E, src, self.grid)

    def _deposit(self, w: int) -> None:
        m = self._private[w]
        m.zero()
        for b in self.batches[w]:
            deposit_moments(b, self.grid, m)

    def run_cycle(self) -> CycleTimings:
        if not self.valid:
            raise EngineFault("simulation aborted by an earlier fault")
        t = CycleTimings()
        try:
            for eng, st in zip(self.engines, self.states):
                eng.before_fields(st)
            t0 = time.perf_counter()
            self._field_phase()
            t1 = time.perf_counter()
            self._parallel(lambda w: self.engines[w].move(self.states[w]), range(len(self.states)))
            t2 = time.perf_counter()
            exchange_particles(self.batches, self.subdomains, self.grid)
            t3 = time.perf_counter()
            self._parallel(self._deposit, range(len(self.states)))
            self.moments.zero()
            for m in self._private:  # fixed order: reduction independent of scheduling
                self.moments.add(m)
            t4 = time.perf_counter()
        except Exception:
            self.valid = False
            raise
        t.t_field, t.t_mover, t.t_exchange, t.t_moments = t1 - t0, t2 - t1, t3 - t2, t4 - t3
        return t

    def run(self, cycles: int | None = None) -> list[CycleTimings]:
        n = self.cfg.cycles if cycles is None else cycles
        return [self.run_cycle() for _ in range(n)]

    # -- inspection

    def species_records(self, s: int) -> np.ndarray:
        return np.concatenate([self.batches[w][s].records() for w in range(len(self.batches))])

    def particle_multiset(self) -> list[np.ndarray]:
        """Per species, all (x, y, z, u, v, w) rows sorted lexicographically."""
        out = []
        for s in range(len(self.batches[0])):
            r = self.species_records(s)
            out.append(r[np.lexsort(r.T[::-1])])
        return out

    def close(self) -> None:
        for eng in self.engines:
            eng.close()
        self.engines = []
        if self.pool is not None:
            self.pool.shutdown()
            self.pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def run_cycle(sim: Simulation) -> CycleTimings:
    return sim.run_cycle()
