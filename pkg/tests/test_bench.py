import csv
import math
import statistics

import pytest
from hypothesis import given, strategies as st

from picoffload.bench import (
    BENCH_HEADER, PROFILE_HEADER, SUMMARY_HEADER, aggregate_runs, mpa, phase_profile, ppc_sweep,
    run_benchmark, scaling_sweep, speedup_efficiency, write_bench_csv, write_profile_csv,
    write_summary_csv,
)
from picoffload.core import ConfigError, Grid, MetricError, SimConfig
from picoffload.initial import GemParams, gem_species

PAPER_PARTICLES = 64 * 64 * 32 * 216 * 4


def tiny_cfg(ppc=2, **kw):
    g = Grid(4, 16, 4, 25.6, 12.8, 6.4)
    base = dict(grid=g, species=gem_species(g, GemParams(), ppc), cycles=2, repetitions=3,
                field_passes=1)
    base.update(kw)
    return SimConfig(**base)


def test_mpa_examples():
    assert PAPER_PARTICLES == 113_246_208
    assert mpa(PAPER_PARTICLES, 2.44) == pytest.approx(46.41, abs=0.01)
    assert mpa(PAPER_PARTICLES, 1.43) == pytest.approx(79.19, abs=0.01)
    assert mpa(10**6, 1.0) == 1.0
    with pytest.raises(MetricError):
        mpa(10, 0.0)


def test_aggregate_examples():
    assert aggregate_runs([2, 3, 6], warmup=0)[0] == pytest.approx(3.0, rel=1e-15)
    assert aggregate_runs([100, 2, 3, 6], warmup=1)[0] == pytest.approx(3.0, rel=1e-15)
    assert aggregate_runs([5.0] * 6) == (5.0, 0.0)
    assert aggregate_runs([1, 2, 4, 6])[1] == pytest.approx(statistics.stdev([2, 4, 6]))
    with pytest.raises(MetricError):
        aggregate_runs([1, 0, 2])
    with pytest.raises(MetricError):
        aggregate_runs([1.0])


def test_speedup_examples():
    s, e = speedup_efficiency(39.8, 243, 8)
    assert round(s, 1) == 6.1 and round(e, 2) == 0.76
    assert speedup_efficiency(7.0, 7.0, 1) == (1.0, 1.0)


positive = st.floats(1e-3, 1e6, allow_nan=False)


@given(st.lists(positive, min_size=2, max_size=20))
def test_harmonic_below_arithmetic(xs):
    h, _ = aggregate_runs(xs, warmup=0)
    assert h <= statistics.fmean(xs) * (1 + 1e-12)


@given(st.integers(1, 10**12), positive)
def test_mpa_homogeneous(n, t):
    assert mpa(2 * n, t) == 2 * mpa(n, t)


def test_run_benchmark_shape():
    rec = run_benchmark(tiny_cfg(), "cpu")
    assert len(rec.per_run_mpa) == 3 and all(len(c) == 2 for c in rec.per_cycle_mover_s)
    assert rec.mpa_per_s == pytest.approx(aggregate_runs(rec.per_run_mpa)[0])
    assert len(list(rec.bench_rows())) == 6


def test_scaling_sweep_baseline():
    rows, recs = scaling_sweep(tiny_cfg(), "prefetch", [1, 2])
    assert (rows[0].speedup, rows[0].efficiency) == (1.0, 1.0)
    assert [r.n_workers for r in rows] == [1, 2] and len(recs) == 2
    with pytest.raises(ConfigError):
        scaling_sweep(tiny_cfg(), "cpu", [16])


def test_phase_profile_rows_sum_to_100():
    rows = phase_profile(tiny_cfg(), [1, 3])
    assert [r[0] for r in rows] == [1, 3]
    for _, f, m, d in rows:
        assert abs(f + m + d - 100) <= 0.1 and min(f, m, d) >= 0


def test_ppc_sweep_records():
    recs = ppc_sweep(tiny_cfg(), [1, 2], [1, 2])
    assert [(r.ppc, r.workers, r.engine) for r in recs] == [
        (1, 1, "prefetch"), (1, 2, "prefetch"), (2, 1, "prefetch"), (2, 2, "prefetch")]
    assert len(ppc_sweep(tiny_cfg(), [1], 1)) == 1


def test_csv_headers(tmp_path):
    rec = run_benchmark(tiny_cfg(), "cpu")
    write_bench_csv(tmp_path / "b.csv", [rec])
    write_summary_csv(tmp_path / "s.csv", [rec])
    write_profile_csv(tmp_path / "p.csv", [(27, 5.0, 80.0, 15.0)])
    for name, header in (("b.csv", BENCH_HEADER), ("s.csv", SUMMARY_HEADER), ("p.csv", PROFILE_HEADER)):
        with open(tmp_path / name) as fh:
            assert tuple(next(csv.reader(fh))) == header
    assert (tmp_path / "b.csv").read_text().startswith(
        "engine,workers,ppc,rep,cycle,t_field,t_mover,t_moments,t_exchange\n")
