"""Host/device offload boundary for the particle mover."""
from ..core import TransferModel
from .arena import DeviceArena, transfer, upload_grid
from .engines import (
    ENGINE_KINDS, CpuEngine, MoverEngine, NaiveEngine, OffloadState, PinnedEngine,
    PrefetchEngine, engine_acceleration, make_engine, run_cycle_naive, run_cycle_pinned,
    run_cycle_prefetch,
)
from .queue import LOG_HEADER, CommandQueue

__all__ = [
    "TransferModel", "DeviceArena", "transfer", "upload_grid", "CommandQueue", "LOG_HEADER",
    "ENGINE_KINDS", "MoverEngine", "CpuEngine", "NaiveEngine", "PinnedEngine", "PrefetchEngine",
    "OffloadState", "make_engine", "engine_acceleration", "run_cycle_naive", "run_cycle_pinned",
    "run_cycle_prefetch",
]
