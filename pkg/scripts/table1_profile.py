"""Share of cycle time spent in the field, mover and moment phases versus ppc.

    python scripts/table1_profile.py [--ppc 27,64,125,216,343] [--out out/table1]
"""
import argparse

from picoffload import bench
from picoffload.cli import parse_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="desk")
    ap.add_argument("--ppc", default="27,64,125,216,343")
    ap.add_argument("--cells", default="16,16,8", help="nx,ny,nz")
    ap.add_argument("--out", default="out/table1")
    args = ap.parse_args()
    nx, ny, nz = (int(v) for v in args.cells.split(","))
    cfg = parse_config(None, {"preset": args.preset, "nx": nx, "ny": ny, "nz": nz})
    rows = bench.phase_profile(cfg, [int(p) for p in args.ppc.split(",")])
    bench.write_profile_csv(bench.ensure_dir(args.out) / "profile.csv", rows)
    print(f"{'ppc':>5} {'field %':>8} {'mover %':>8} {'moments %':>10}")
    for p, f, m, d in rows:
        print(f"{p:>5} {f:8.2f} {m:8.2f} {d:10.2f}")


if __name__ == "__main__":
    main()
