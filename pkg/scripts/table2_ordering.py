"""Mover time per cycle for cpu, naive, pinned and prefetch on one worker.

    python scripts/table2_ordering.py [--preset desk] [--out out/table2]
"""
import argparse
import statistics

from picoffload import bench
from picoffload.cli import parse_config
from picoffload.offload import engine_acceleration


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="desk")
    ap.add_argument("--cycles", type=int, default=10)
    ap.add_argument("--reps", type=int, default=6)
    ap.add_argument("--out", default="out/table2")
    args = ap.parse_args()
    cfg = parse_config(None, {"preset": args.preset, "cycles": args.cycles,
                              "repetitions": args.reps})
    out = bench.ensure_dir(args.out)
    recs = [bench.run_benchmark(cfg, e) for e in ("cpu", "naive", "pinned", "prefetch")]
    bench.write_bench_csv(out / "bench.csv", recs)
    bench.write_summary_csv(out / "summary.csv", recs)
    t = {r.engine: statistics.fmean(r.retained_mover_means()) for r in recs}
    print(f"{'engine':>9} {'mover s/cycle':>14} {'MPA/s':>8} {'A':>6}")
    for r in recs:
        print(f"{r.engine:>9} {t[r.engine]:14.4f} {r.mpa_per_s:8.2f} "
              f"{engine_acceleration(t['cpu'], t[r.engine]):6.2f}")


if __name__ == "__main__":
    main()
