"""Single-stream command queue: commands run in enqueue order on one
executor thread, asynchronously to the thread that enqueues them."""
from __future__ import annotations

import csv
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from ..core import EngineFault

COMMAND_KINDS = ("CopyToDevice", "CopyToHost", "RunMover", "Marker")
LOG_HEADER = ("seq", "command", "bytes", "enqueue_t", "start_t", "end_t")


@dataclass
class Command:
    seq: int
    kind: str
    fn: Callable[[], object] | None
    nbytes: int = 0
    label: str = ""
    enqueue_t: float = 0.0
    start_t: float = float("nan")
    end_t: float = float("nan")
    error: BaseException | None = None
    done: threading.Event = field(default_factory=threading.Event, repr=False)


class CommandQueue:
    """FIFO of device commands with one executor thread.

    ``enqueue`` never blocks.  ``synchronize`` blocks until everything
    enqueued so far has finished and re-raises the first failure as
    :class:`EngineFault`; after a failure the queue refuses new work.
    """

    def __init__(self, name: str = "stream0"):
        self.name = name
        self._pending: deque[Command] = deque()
        self._cv = threading.Condition()
        self._seq = 0
        self._last: Command | None = None
        self._closed = False
        self.failure: BaseException | None = None
        self.log: list[Command] = []
        self.t_origin = time.perf_counter()
        self._thread = threading.Thread(target=self._run, name=f"queue-{name}", daemon=True)
        self._thread.start()

    def enqueue(self, kind: str, fn: Callable[[], object] | None = None, nbytes: int = 0,
                label: str = "") -> Command:
        if kind not in COMMAND_KINDS:
            raise ValueError(f"unknown command kind {kind!r}")
        with self._cv:
            if self._closed:
                raise EngineFault(f"queue {self.name} is closed")
            if self.failure is not None:
                raise EngineFault(f"queue {self.name} failed earlier") from self.failure
            cmd = Command(self._seq, kind, fn, nbytes, label,
                          enqueue_t=time.perf_counter() - self.t_origin)
            self._seq += 1
            self._pending.append(cmd)
            self._last = cmd
            self._cv.notify()
        return cmd

    def marker(self, label: str = "") -> Command:
        return self.enqueue("Marker", None, 0, label)

    def wait(self, cmd: Command) -> None:
        cmd.done.wait()
        if self.failure is not None:
            raise EngineFault(f"queue {self.name}: {self.failure}") from self.failure

    def synchronize(self) -> None:
        with self._cv:
            last = self._last
        if last is not None:
            self.wait(last)
        elif self.failure is not None:
            raise EngineFault(f"queue {self.name}: {self.failure}") from self.failure

    def _run(self) -> None:
        while True:
            with self._cv:
                while not self._pending and not self._closed:
                    self._cv.wait()
                if not self._pending:
                    return
                cmd = self._pending.popleft()
            cmd.start_t = time.perf_counter() - self.t_origin
            if self.failure is None and cmd.fn is not None:
                try:
                    cmd.fn()
                except BaseException as exc:  # surfaced on synchronize
                    cmd.error = exc
                    self.failure = exc
            cmd.end_t = time.perf_counter() - self.t_origin
            self.log.append(cmd)
            cmd.done.set()

    def close(self) -> None:
        with self._cv:
            self._closed = True
            self._cv.notify()
        self._thread.join()

    def clear_log(self) -> None:
        self.log = []

    def write_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_HEADER)
            for c in self.log:
                w.writerow((c.seq, c.kind, c.nbytes, f"{c.enqueue_t:.9f}", f"{c.start_t:.9f}",
                            f"{c.end_t:.9f}"))

    def busy_time(self) -> float:
        """Total executor time spent on logged commands."""
        return sum(c.end_t - c.start_t for c in self.log)
