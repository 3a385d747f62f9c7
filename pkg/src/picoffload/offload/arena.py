"""The modeled accelerator memory and the transfers across its boundary."""
from __future__ import annotations

import hashlib
import threading
import time

import numpy as np

from ..core import AllocationError, Grid, TransferModel


class DeviceArena:
    """A distinct block of process memory standing in for device memory.

    Regions are carved out by name and never resized.  ``copy_engine`` is the
    single DMA engine: every transfer into or out of the arena holds it.
    """

    def __init__(self, capacity_bytes: int):
        if capacity_bytes <= 0:
            raise AllocationError("device capacity must be positive")
        self.capacity_bytes = int(capacity_bytes)
        self.regions: dict[str, np.ndarray] = {}
        self.copy_engine = threading.Lock()
        self.grid_uploaded = False

    @property
    def used_bytes(self) -> int:
        return sum(r.nbytes for r in self.regions.values())

    @property
    def free_bytes(self) -> int:
        return self.capacity_bytes - self.used_bytes

    def alloc(self, name: str, shape, dtype=np.float64) -> np.ndarray:
        if name in self.regions:
            raise AllocationError(f"region {name!r} already allocated")
        nbytes = int(np.prod(shape)) * np.dtype(dtype).itemsize
        if nbytes > self.free_bytes:
            raise AllocationError(
                f"region {name!r} needs {nbytes} bytes, {self.free_bytes} of "
                f"{self.capacity_bytes} free")
        # np.empty: pages are committed on first touch, like a lazily backed pool
        self.regions[name] = np.empty(shape, dtype=dtype)
        return self.regions[name]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.regions[name]

    def checksum(self, name: str) -> str:
        return hashlib.sha256(self.regions[name].tobytes()).hexdigest()


def upload_grid(arena: DeviceArena, grid: Grid) -> None:
    """Copy the grid constants once; later calls are no-ops."""
    if arena.grid_uploaded:
        return
    host = grid.params()
    region = arena.alloc("grid", host.shape)
    with arena.copy_engine:
        np.copyto(region, host)
    arena.grid_uploaded = True


def transfer(src: np.ndarray, dst: np.ndarray, *, pinned: bool, model: TransferModel,
             staging: np.ndarray | None = None) -> float:
    """Copy ``src`` into ``dst`` across the host/device boundary.

    Pageable transfers go through ``staging`` first (a real extra copy).
    Returns the modeled time; with ``model.throttle`` on, the call does not
    return before that time has elapsed.
    """
    if src.shape != dst.shape:
        raise AllocationError(f"transfer of shape {src.shape} into region view {dst.shape}")
    nbytes = src.nbytes
    t0 = time.perf_counter()
    modeled = model.modeled_time(nbytes, pinned)
    if nbytes:
        if pinned:
            np.copyto(dst, src)
        else:
            if staging is None:
                raise AllocationError("pageable transfer needs a staging buffer")
            flat = staging.reshape(-1)
            if flat.size < src.size:
                raise AllocationError(
                    f"staging buffer of {staging.nbytes} bytes too small for {nbytes}")
            stage = flat[: src.size].reshape(src.shape)
            np.copyto(stage, src)
            np.copyto(dst, stage)
    if model.throttle:
        remaining = t0 + modeled - time.perf_counter()
        if remaining > 0:
            time.sleep(remaining)
    return modeled
