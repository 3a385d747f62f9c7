"""Measurement methodology: MPA/s, warmup-excluded harmonic-mean aggregation,
acceleration, strong-scaling speedup/efficiency and per-phase profiles.

Aggregation: within one repetition the mover time is averaged over cycles
and turned into one MPA/s value; repetitions after the warmup are combined
with a harmonic mean.
"""
from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path

from .core import ConfigError, MetricError, SimConfig
from .runtime import Simulation, with_ppc

BENCH_HEADER = ("engine", "workers", "ppc", "rep", "cycle", "t_field", "t_mover", "t_moments",
                "t_exchange")
SUMMARY_HEADER = ("engine", "workers", "ppc", "mpa", "stddev", "speedup", "efficiency")
PROFILE_HEADER = ("ppc", "field_pct", "mover_pct", "moments_pct")

# Published GPU reference points: prefetch mover on 8 K80 GPUs, MPA/s by ppc.
PPC_REFERENCE_MPA = {27: 212.0, 125: 246.0, 343: 240.0}


def mpa(total_particles: int, mean_mover_time_per_cycle_s: float) -> float:
    """Millions of particles advanced per second."""
    if not (total_particles > 0 and mean_mover_time_per_cycle_s > 0):
        raise MetricError("mpa needs a positive particle count and mover time")
    return total_particles / mean_mover_time_per_cycle_s / 1e6


def aggregate_runs(per_run_mpa, warmup: int = 1) -> tuple[float, float]:
    """Harmonic mean and sample standard deviation after dropping warmup runs."""
    xs = list(per_run_mpa)
    if warmup < 0 or len(xs) <= warmup:
        raise MetricError(f"need more than {warmup} runs, got {len(xs)}")
    if any(not (x > 0) for x in xs):
        raise MetricError("all per-run values must be positive")
    kept = xs[warmup:]
    h = len(kept) / math.fsum(1.0 / x for x in kept)
    sd = statistics.stdev(kept) if len(kept) > 1 else 0.0
    return h, sd


def speedup_efficiency(perf_1: float, perf_n: float, n: int) -> tuple[float, float]:
    if not (perf_1 > 0 and perf_n > 0 and n >= 1):
        raise MetricError("speedup needs positive performance values and n >= 1")
    s = perf_n / perf_1
    return s, s / n


@dataclass
class BenchRecord:
    engine: str
    workers: int
    ppc: int
    reps: int
    per_cycle_mover_s: list = field(default_factory=list)  # per rep: list of cycle times
    per_run_mpa: list = field(default_factory=list)
    mpa_per_s: float = 0.0
    stddev: float = 0.0
    timings: list = field(default_factory=list, repr=False)  # per rep: list[CycleTimings]
    total_particles: int = 0

    def retained_mover_means(self, warmup: int = 1) -> list[float]:
        return [statistics.fmean(c) for c in self.per_cycle_mover_s[warmup:]]

    def bench_rows(self):
        for rep, cycles in enumerate(self.timings):
            for c, t in enumerate(cycles):
                yield (self.engine, self.workers, self.ppc, rep, c, f"{t.t_field:.6f}",
                       f"{t.t_mover:.6f}", f"{t.t_moments:.6f}", f"{t.t_exchange:.6f}")


@dataclass
class ScalingRecord:
    engine: str
    n_workers: int
    ppc: int
    perf: float
    stddev: float
    speedup: float
    efficiency: float


def run_benchmark(cfg: SimConfig, engine: str | None = None, workers: int | None = None,
                  ppc: int | None = None, warmup: int = 1, sim_factory=Simulation) -> BenchRecord:
    """``cfg.repetitions`` runs of ``cfg.cycles`` cycles, each from the same initial state."""
    if ppc is not None and ppc != cfg.ppc:
        cfg = with_ppc(cfg, ppc)
    cfg = replace(cfg, engine=engine or cfg.engine, workers=workers or cfg.workers)
    cfg.validate()
    if cfg.cycles < 1:
        raise MetricError("benchmarks need at least one cycle")
    rec = BenchRecord(cfg.engine, cfg.workers, cfg.ppc, cfg.repetitions)
    with sim_factory(cfg) as sim:
        rec.total_particles = sim.total_particles
        for rep in range(cfg.repetitions):
            if rep:
                sim.reset()
            cycles = sim.run(cfg.cycles)
            rec.timings.append(cycles)
            movers = [t.t_mover for t in cycles]
            rec.per_cycle_mover_s.append(movers)
            rec.per_run_mpa.append(mpa(rec.total_particles, statistics.fmean(movers)))
    rec.mpa_per_s, rec.stddev = aggregate_runs(rec.per_run_mpa, warmup)
    return rec


def scaling_sweep(cfg: SimConfig, engine: str, worker_counts, sim_factory=Simulation):
    """Strong scaling: the same global problem on each worker count.

    Returns (scaling records for the requested counts, bench records).  A
    1-worker baseline is run even if not requested.
    """
    counts = list(worker_counts)
    for n in counts:
        if n < 1 or cfg.grid.ny % n or cfg.grid.ny // n < 2:
            raise ConfigError("workers", f"{n} workers infeasible for ny={cfg.grid.ny}")
    runs = {}
    for n in ([1] if 1 not in counts else []) + counts:
        if n not in runs:
            runs[n] = run_benchmark(cfg, engine, n, sim_factory=sim_factory)
    base = runs[1].mpa_per_s
    out = []
    for n in counts:
        r = runs[n]
        s, e = speedup_efficiency(base, r.mpa_per_s, n)
        out.append(ScalingRecord(engine, n, r.ppc, r.mpa_per_s, r.stddev, s, e))
    return out, [runs[n] for n in counts]


def phase_shares(timings) -> tuple[float, float, float]:
    """Percent of (field + mover + moments) time spent in each phase."""
    f = math.fsum(t.t_field for t in timings)
    m = math.fsum(t.t_mover for t in timings)
    d = math.fsum(t.t_moments for t in timings)
    tot = f + m + d
    if not tot > 0:
        raise MetricError("no time recorded")
    return 100 * f / tot, 100 * m / tot, 100 * d / tot


def phase_profile(cfg: SimConfig, ppc_list, sim_factory=Simulation, warmup: int = 1):
    """Table of (ppc, field %, mover %, moments %) on the cpu engine."""
    rows = []
    for ppc in ppc_list:
        if ppc < 1:
            raise MetricError("ppc must be >= 1")
        rec = run_benchmark(cfg, "cpu", ppc=ppc, sim_factory=sim_factory)
        kept = [t for rep in rec.timings[warmup:] for t in rep]
        rows.append((ppc, *phase_shares(kept)))
    return rows


def ppc_sweep(cfg: SimConfig, ppc_list, workers, sim_factory=Simulation) -> list[BenchRecord]:
    """Prefetch-engine MPA/s for every (ppc, worker count) pair."""
    ws = [workers] if isinstance(workers, int) else list(workers)
    return [run_benchmark(cfg, "prefetch", w, ppc, sim_factory=sim_factory)
            for ppc in ppc_list for w in ws]


# -- CSV


def write_bench_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BENCH_HEADER)
        for r in records:
            w.writerows(r.bench_rows())


def write_summary_csv(path, rows) -> None:
    """``rows``: BenchRecord or ScalingRecord instances."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            if isinstance(r, ScalingRecord):
                w.writerow((r.engine, r.n_workers, r.ppc, f"{r.perf:.6f}", f"{r.stddev:.6f}",
                            f"{r.speedup:.6f}", f"{r.efficiency:.6f}"))
            else:
                w.writerow((r.engine, r.workers, r.ppc, f"{r.mpa_per_s:.6f}", f"{r.stddev:.6f}",
                            "", ""))


def write_profile_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PROFILE_HEADER)
        for ppc, f, m, d in rows:
            w.writerow((ppc, f"{f:.4f}", f"{m:.4f}", f"{d:.4f}"))


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
