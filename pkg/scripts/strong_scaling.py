"""Strong scaling of each offload engine over 1, 2, 4, 8 workers.

    python scripts/strong_scaling.py [--workers 1,2,4,8] [--out out/scaling]

Speedup only means something with at least as many free cores as workers.
"""
import argparse
import os

from picoffload import bench
from picoffload.cli import parse_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="desk")
    ap.add_argument("--workers", default="1,2,4,8")
    ap.add_argument("--engines", default="naive,pinned,prefetch")
    ap.add_argument("--out", default="out/scaling")
    args = ap.parse_args()
    counts = [int(w) for w in args.workers.split(",")]
    if max(counts) > (os.cpu_count() or 1):
        print(f"warning: {os.cpu_count()} cores for up to {max(counts)} workers")
    cfg = parse_config(None, {"preset": args.preset})
    rows, recs = [], []
    for e in args.engines.split(","):
        r, b = bench.scaling_sweep(cfg, e, counts)
        rows += r
        recs += b
    out = bench.ensure_dir(args.out)
    bench.write_bench_csv(out / "bench.csv", recs)
    bench.write_summary_csv(out / "summary.csv", rows)
    print(f"{'engine':>9} {'N':>3} {'MPA/s':>8} {'S':>6} {'E':>6}")
    for r in rows:
        print(f"{r.engine:>9} {r.n_workers:>3} {r.perf:8.2f} {r.speedup:6.2f} {r.efficiency:6.2f}")


if __name__ == "__main__":
    main()
