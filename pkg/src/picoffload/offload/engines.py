"""Mover engines: where and in what order the particle mover runs.

``cpu``       moves particles in host memory, no boundary crossing.
``naive``     blocking pageable copies, one species at a time.
``pinned``    the same schedule with page-locked (staging-free) copies.
``prefetch``  pinned copies issued asynchronously so they overlap host work:
              the first species is uploaded before the field phase, and each
              species' copy-back overlaps the next species' kernel.

All engines run the identical ``move_arrays`` kernel on identical bytes, so
they produce bitwise-identical particles.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..core import (
    AllocationError, EngineFault, FieldMesh, Grid, MetricError, NumericalFault, ParticleBatch,
    TransferModel,
)
from ..kernels import MoverParams, field_phase_stub, move_arrays, move_batch
from .arena import DeviceArena, transfer, upload_grid
from .queue import CommandQueue

ENGINE_KINDS = ("naive", "pinned", "prefetch")


@dataclass
class OffloadState:
    """What one worker's engine acts on: its batches and the shared host fields."""

    grid: Grid
    mesh: FieldMesh
    batches: list[ParticleBatch]
    movers: list[MoverParams]
    field_passes: int = 0
    engine: "MoverEngine | None" = field(default=None, repr=False)


class MoverEngine:
    kind = "base"

    def setup(self, state: OffloadState) -> None:
        pass

    def before_fields(self, state: OffloadState) -> None:
        """Hook run just before the host field phase."""

    def move(self, state: OffloadState) -> float:
        """Run the mover phase; returns host wall time spent in it."""
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class CpuEngine(MoverEngine):
    kind = "cpu"

    def move(self, state: OffloadState) -> float:
        t0 = time.perf_counter()
        for batch, mp in zip(state.batches, state.movers):
            move_batch(batch, state.mesh, state.grid, mp)
        return time.perf_counter() - t0


class DeviceEngine(MoverEngine):
    """Shared machinery of the three offload engines."""

    pinned = True

    def __init__(self, model: TransferModel | None = None, capacity_bytes: int = 4096 << 20,
                 particle_region_bytes: int = 256 << 20):
        self.model = model or TransferModel()
        self.capacity_bytes = capacity_bytes
        self.particle_region_bytes = particle_region_bytes
        self.arena: DeviceArena | None = None
        self.queue: CommandQueue | None = None
        self.staging: np.ndarray | None = None
        self.dev_particles: list[np.ndarray] = []
        self.dev_counts: list[int] = []
        self.valid = True

    # -- startup

    def setup(self, state: OffloadState) -> None:
        grid = state.grid
        arena = DeviceArena(self.capacity_bytes)
        upload_grid(arena, grid)
        arena.alloc("fields", (grid.nnodes, 6))
        nspecies = len(state.batches)
        # remaining memory goes to particles, capped per species
        region_bytes = min(self.particle_region_bytes, arena.free_bytes // max(nspecies, 1))
        region_cap = region_bytes // 48
        for s, b in enumerate(state.batches):
            if b.capacity > region_cap:
                raise AllocationError(
                    f"species {b.species_id}: batch capacity {b.capacity} exceeds device "
                    f"region of {region_cap} particles ({region_bytes} bytes)")
        self.dev_particles = [arena.alloc(f"particles{s}", (6, region_cap)) for s in range(nspecies)]
        self.dev_counts = [0] * nspecies
        if not self.pinned:
            self.staging = np.empty(max((b.capacity for b in state.batches), default=0) * 6
                                    + grid.nnodes * 6)
        self.arena = arena
        self.queue = CommandQueue(self.kind)
        state.engine = self

    def _check(self) -> None:
        if not self.valid:
            raise EngineFault(f"{self.kind} engine is in an invalid state after a fault")
        if self.arena is None:
            raise EngineFault(f"{self.kind} engine used before setup")

    # -- primitive commands (each runs on the queue executor or the host)

    def _copy(self, src, dst) -> float:
        with self.arena.copy_engine:
            return transfer(src, dst, pinned=self.pinned, model=self.model, staging=self.staging)

    def _h2d_fields(self, state: OffloadState) -> None:
        self._copy(state.mesh.EB, self.arena["fields"])

    def _h2d(self, state: OffloadState, s: int) -> None:
        b = state.batches[s]
        self.dev_counts[s] = b.count
        self._copy(b.active, self.dev_particles[s][:, : b.count])

    def _kernel(self, state: OffloadState, s: int) -> None:
        mp = state.movers[s]
        bad = move_arrays(self.dev_particles[s], self.dev_counts[s], self.arena["fields"],
                          self.arena["grid"], mp.qom, mp.dt, mp.pc_iterations)
        if bad >= 0:
            raise NumericalFault(int(bad), f"species {state.batches[s].species_id}: non-finite update")

    def _d2h(self, state: OffloadState, s: int) -> None:
        b = state.batches[s]
        n = self.dev_counts[s]
        self._copy(self.dev_particles[s][:, :n], b.data[:, :n])
        b.count = n

    def _enqueue_h2d(self, state, s):
        return self.queue.enqueue("CopyToDevice", lambda: self._h2d(state, s),
                                  state.batches[s].active_nbytes, f"particles{s}")

    def _enqueue_kernel(self, state, s):
        return self.queue.enqueue("RunMover", lambda: self._kernel(state, s), 0, f"species{s}")

    def _sync(self) -> None:
        try:
            self.queue.synchronize()
        except EngineFault:
            self.valid = False
            raise

    def close(self) -> None:
        if self.queue is not None:
            self.queue.close()
            self.queue = None


class NaiveEngine(DeviceEngine):
    """Blocking, synchronous offload through pageable host memory."""

    kind = "naive"
    pinned = False

    def move(self, state: OffloadState) -> float:
        self._check()
        t0 = time.perf_counter()
        q = self.queue
        q.enqueue("CopyToDevice", lambda: self._h2d_fields(state), state.mesh.EB.nbytes, "fields")
        self._sync()
        for s in range(len(state.batches)):
            self._enqueue_h2d(state, s)
            self._sync()
            self._enqueue_kernel(state, s)
            self._sync()
            q.enqueue("CopyToHost", lambda s=s: self._d2h(state, s),
                      state.batches[s].active_nbytes, f"particles{s}")
            self._sync()
        return time.perf_counter() - t0


class PinnedEngine(NaiveEngine):
    """The naive schedule with page-locked host buffers (no staging copy)."""

    kind = "pinned"
    pinned = True


class PrefetchEngine(DeviceEngine):
    """Asynchronous pinned transfers overlapping host work."""

    kind = "prefetch"
    pinned = True

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._prefetched = False

    def before_fields(self, state: OffloadState) -> None:
        self._check()
        if state.batches and not self._prefetched:
            self._enqueue_h2d(state, 0)
            self._prefetched = True

    def move(self, state: OffloadState) -> float:
        self._check()
        t0 = time.perf_counter()
        n = len(state.batches)
        if n == 0:
            return time.perf_counter() - t0
        if not self._prefetched:
            self._enqueue_h2d(state, 0)
        self._prefetched = False
        # fields change in the field phase, so they go up after it
        self.queue.enqueue("CopyToDevice", lambda: self._h2d_fields(state),
                           state.mesh.EB.nbytes, "fields")
        self._enqueue_kernel(state, 0)
        for s in range(n):
            self._sync()
            if s + 1 < n:
                up = self._enqueue_h2d(state, s + 1)
                self._enqueue_kernel(state, s + 1)
                # one copy engine: let the upload finish, then copy back while
                # the next kernel runs
                try:
                    self.queue.wait(up)
                except EngineFault:
                    self.valid = False
                    raise
            try:
                self._d2h(state, s)
            except Exception:
                self.valid = False
                raise
        return time.perf_counter() - t0


def make_engine(kind: str, model: TransferModel | None = None, capacity_bytes: int = 4096 << 20,
                particle_region_bytes: int = 256 << 20) -> MoverEngine:
    if kind == "cpu":
        return CpuEngine()
    classes = {"naive": NaiveEngine, "pinned": PinnedEngine, "prefetch": PrefetchEngine}
    if kind not in classes:
        raise ValueError(f"unknown engine {kind!r}")
    return classes[kind](model, capacity_bytes, particle_region_bytes)


def _run_cycle(state: OffloadState, kind: str, model: TransferModel) -> dict[str, float]:
    eng = state.engine
    if eng is None or eng.kind != kind or getattr(eng, "model", model) != model:
        if eng is not None:
            eng.close()
        eng = make_engine(kind, model)
        eng.setup(state)
        state.engine = eng
    eng.before_fields(state)
    t0 = time.perf_counter()
    field_phase_stub(state.mesh, state.grid, state.field_passes)
    t_field = time.perf_counter() - t0
    return {"t_field": t_field, "t_mover": eng.move(state)}


def run_cycle_naive(state: OffloadState, model: TransferModel) -> dict[str, float]:
    """Field phase then a blocking pageable mover phase."""
    return _run_cycle(state, "naive", model)


def run_cycle_pinned(state: OffloadState, model: TransferModel) -> dict[str, float]:
    return _run_cycle(state, "pinned", model)


def run_cycle_prefetch(state: OffloadState, model: TransferModel) -> dict[str, float]:
    return _run_cycle(state, "prefetch", model)


def engine_acceleration(t_cpu: float, t_engine: float) -> float:
    """Mover acceleration A = T_cpu / T_engine."""
    if not (t_cpu > 0 and t_engine > 0):
        raise MetricError("acceleration needs positive times")
    return t_cpu / t_engine
