import statistics
import time

import numpy as np
import pytest

from picoffload.core import (
    AllocationError, EngineFault, Grid, MetricError, SimConfig, TransferModel,
)
from picoffload.initial import GemParams, gem_species, init_uniform
from picoffload.kernels import MoverParams, move_arrays
from picoffload.offload import (
    CommandQueue, DeviceArena, OffloadState, engine_acceleration, make_engine, run_cycle_naive,
    run_cycle_pinned, run_cycle_prefetch, transfer, upload_grid,
)

import oracles

G = Grid(8, 8, 8, 8.0, 8.0, 8.0)
# slow enough that modeled times dwarf the real copies and thread wakeups
SLOW = TransferModel(bandwidth_bytes_per_s=5e6, per_call_latency_s=5e-3, staging_penalty=1.5)


def make_state(ppc=4, nspecies=4, grid=G, B=(0.0, 0.0, 0.5), passes=0):
    sp = gem_species(grid, GemParams(), max(ppc, 1))[:nspecies]
    mesh, batches = init_uniform(SimConfig(grid=grid, species=sp), (0.01, 0.0, 0.0), B)
    if ppc == 0:
        for b in batches:
            b.count = 0
    movers = [MoverParams(0.125, b.qom, 3) for b in batches]
    return OffloadState(grid, mesh, batches, movers, passes)


# -- transfer model

def test_transfer_modeled_times():
    m = TransferModel(8e9, 1e-4, 1.5, throttle=False)
    src = np.arange(1_000_000, dtype=float)  # 8e6 bytes
    dst = np.empty_like(src)
    assert transfer(src, dst, pinned=True, model=m) == pytest.approx(1.1e-3, rel=1e-12)
    assert np.array_equal(src, dst)
    dst[:] = 0
    staging = np.empty_like(src)
    assert transfer(src, dst, pinned=False, model=m, staging=staging) == pytest.approx(1.6e-3, rel=1e-12)
    assert np.array_equal(src, dst)


def test_transfer_empty():
    dst = np.full(0, 7.0)
    assert transfer(np.empty(0), dst, pinned=True, model=TransferModel()) == pytest.approx(1e-4)


def test_transfer_throttle_wall_time():
    m = TransferModel(1e6, 5e-3, 2.0)
    src = np.ones(1000)  # 8000 bytes
    for pinned in (True, False):
        t0 = time.perf_counter()
        modeled = transfer(src, np.empty_like(src), pinned=pinned, model=m, staging=np.empty(1000))
        assert time.perf_counter() - t0 >= modeled
    assert modeled == pytest.approx(5e-3 + 2 * 8e-3)


def test_transfer_size_errors():
    m = TransferModel(throttle=False)
    with pytest.raises(AllocationError):
        transfer(np.ones(10), np.empty(5), pinned=True, model=m)
    with pytest.raises(AllocationError):
        transfer(np.ones(10), np.empty(10), pinned=False, model=m, staging=np.empty(4))


# -- arena

def test_upload_grid_idempotent_and_checksum():
    arena = DeviceArena(1 << 20)
    upload_grid(arena, G)
    used = arena.used_bytes
    upload_grid(arena, G)
    assert arena.used_bytes == used
    import hashlib
    assert arena.checksum("grid") == hashlib.sha256(G.params().tobytes()).hexdigest()


def test_upload_grid_too_small():
    arena = DeviceArena(8)
    with pytest.raises(AllocationError):
        upload_grid(arena, G)
    assert arena.regions == {} and not arena.grid_uploaded


def test_engine_region_too_small():
    st = make_state()
    with pytest.raises(AllocationError):
        make_engine("pinned", SLOW, capacity_bytes=1 << 20, particle_region_bytes=1000).setup(st)


# -- queue

def test_marker_after_commands():
    q = CommandQueue("t")
    try:
        for i in range(5):
            q.enqueue("RunMover", lambda: time.sleep(0.002))
        m = q.marker("done")
        q.wait(m)
        ends = [c.end_t for c in q.log[:-1]]
        assert q.log[-1] is m and m.start_t >= max(ends)
        assert [c.seq for c in q.log] == list(range(6))
    finally:
        q.close()


def test_queue_failure_surfaces():
    q = CommandQueue("t")
    try:
        q.enqueue("RunMover", lambda: 1 / 0)
        with pytest.raises(EngineFault):
            q.synchronize()
        with pytest.raises(EngineFault):
            q.enqueue("Marker")
    finally:
        q.close()


def test_queue_rejects_unknown_command():
    q = CommandQueue("t")
    try:
        with pytest.raises(ValueError):
            q.enqueue("Bogus")
    finally:
        q.close()


# -- engines

def run_engine(kind, model, cycles=3, **kw):
    st = make_state(**kw)
    with make_engine(kind, model) as eng:
        eng.setup(st)
        for _ in range(cycles):
            eng.before_fields(st)
            eng.move(st)
    return np.concatenate([b.active for b in st.batches], axis=1)


def test_engines_bitwise_equal():
    fast = TransferModel(throttle=False)
    ref = run_engine("cpu", fast)
    for kind in ("naive", "pinned", "prefetch"):
        assert np.array_equal(ref, run_engine(kind, fast)), kind


def test_naive_equals_pinned_without_penalty():
    m = TransferModel(staging_penalty=1.0, throttle=False)
    assert np.array_equal(run_engine("naive", m), run_engine("pinned", m))
    assert m.modeled_time(1000, True) == m.modeled_time(1000, False)


def test_run_cycle_functions():
    fast = TransferModel(throttle=False)
    outs = []
    for fn in (run_cycle_naive, run_cycle_pinned, run_cycle_prefetch):
        st = make_state(passes=2)
        for _ in range(2):
            t = fn(st, fast)
        st.engine.close()
        assert set(t) == {"t_field", "t_mover"} and min(t.values()) >= 0
        outs.append(np.concatenate([b.active for b in st.batches], axis=1))
    assert np.array_equal(outs[0], outs[1]) and np.array_equal(outs[0], outs[2])


@pytest.mark.parametrize("kind", ["naive", "pinned", "prefetch"])
def test_fault_invalidates_engine(kind):
    st = make_state()
    with make_engine(kind, TransferModel(throttle=False)) as eng:
        eng.setup(st)
        st.mesh.E[:, 0] = np.nan
        eng.before_fields(st)
        with pytest.raises(EngineFault):
            eng.move(st)
        assert not eng.valid
        with pytest.raises(EngineFault):
            eng.move(st)


# -- timing against the pipeline oracle

def kernel_time(st, s, reps=7):
    b, mp = st.batches[s], st.movers[s]
    ts = []
    for _ in range(reps):
        d = b.data.copy()
        t0 = time.perf_counter()
        move_arrays(d, b.count, st.mesh.EB, st.grid.params(), mp.qom, mp.dt, mp.pc_iterations)
        ts.append(time.perf_counter() - t0)
    return statistics.median(ts)


def durations(st, model, pinned):
    f = model.modeled_time(st.mesh.EB.nbytes, pinned)
    h = [model.modeled_time(b.active_nbytes, pinned) for b in st.batches]
    k = [kernel_time(st, s) for s in range(len(st.batches))]
    return f, h, k, h


def measure(kind, model, gap=0.0, reps=6, **kw):
    st = make_state(**kw)
    out = []
    with make_engine(kind, model) as eng:
        eng.setup(st)
        for _ in range(reps):
            eng.before_fields(st)
            if gap:
                time.sleep(gap)
            out.append(eng.move(st))
    return statistics.median(out[1:]), st


def test_naive_timing_matches_oracle():
    t, st = measure("naive", SLOW)
    want = oracles.pipeline_time("naive", *durations(st, SLOW, pinned=False))
    assert t == pytest.approx(want, rel=0.10)


def test_naive_zero_particles():
    # long latency so sleep overshoot and thread handoffs (~0.3 ms each) stay in the noise
    m = TransferModel(2e7, 2e-2, 1.5)
    t, st = measure("naive", m, ppc=0)
    f = m.modeled_time(st.mesh.EB.nbytes, False)
    assert t == pytest.approx(f + 4 * 2 * m.per_call_latency_s, rel=0.10)


def test_pinned_timing_matches_oracle_and_beats_naive():
    t, st = measure("pinned", SLOW)
    want = oracles.pipeline_time("pinned", *durations(st, SLOW, pinned=True))
    assert t == pytest.approx(want, rel=0.10)
    assert t < measure("naive", SLOW)[0]


def test_prefetch_hides_upload_behind_field_phase():
    gap = 0.1
    t, st = measure("prefetch", SLOW, gap=gap)
    want = oracles.pipeline_time("prefetch", *durations(st, SLOW, pinned=True), field_phase=gap)
    assert t == pytest.approx(want, rel=0.10)
    # the first species' upload contributes nothing
    no_hide = oracles.pipeline_time("pinned", *durations(st, SLOW, pinned=True))
    assert t < no_hide - 0.5 * SLOW.modeled_time(st.batches[0].active_nbytes, True)


def test_prefetch_single_species_close_to_pinned():
    t_pre, st = measure("prefetch", SLOW, nspecies=1)
    t_pin, _ = measure("pinned", SLOW, nspecies=1)
    assert t_pre <= 1.05 * t_pin


def test_prefetch_ordering_under_slow_link():
    t_pre, _ = measure("prefetch", SLOW, gap=0.02)
    t_pin, _ = measure("pinned", SLOW)
    t_nai, _ = measure("naive", SLOW)
    assert t_pre < 0.95 * t_pin and t_pin < 0.95 * t_nai


# -- acceleration

def test_engine_acceleration():
    assert engine_acceleration(15.33, 3.28) == pytest.approx(4.67, abs=0.005)
    assert engine_acceleration(36.82, 1.43) == pytest.approx(25.7, abs=0.05)
    assert engine_acceleration(2.0, 2.0) == 1.0
    with pytest.raises(MetricError):
        engine_acceleration(0.0, 1.0)
    with pytest.raises(MetricError):
        engine_acceleration(1.0, -1.0)
