"""Command-line entry point.

    picoffload run|bench|scale|profile|ppc-sweep [--config PATH] [flags]

The config file is flat ``key = value`` text (``#`` starts a comment); keys
are listed in ``CONFIG_KEYS``.  Flags override the file.  Exit codes: 0 ok,
1 runtime fault, 2 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import bench
from .core import ENGINES, ConfigError, Grid, PicError, SimConfig, TransferModel
from .initial import GemParams, gem_species
from .runtime import Simulation

log = logging.getLogger("picoffload")

PRESETS = {
    # full GEM benchmark: 64x64x32 cells, 216 ppc, 4 species
    "full": dict(nx=64, ny=64, nz=32, ppc=216),
    # 1/8 of the cells at 64 ppc: fits a workstation
    "desk": dict(nx=32, ny=32, nz=16, ppc=64),
}


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "on", "yes"):
        return True
    if v in ("0", "false", "off", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


CONFIG_KEYS = {
    "preset": str,
    "nx": int, "ny": int, "nz": int, "lx": float, "ly": float, "lz": float,
    "dt": float, "ppc": int, "pc_iterations": int, "cycles": int, "repetitions": int,
    "seed": int, "engine": str, "workers": int, "field_passes": int,
    "bandwidth": float, "latency": float, "staging_penalty": float, "throttle": _bool,
    "device_capacity_bytes": int, "particle_region_bytes": int,
    "b0": float, "lambda": float, "nb_over_n0": float, "psi0": float, "ti_over_te": float,
    "mass_ratio": float, "uth_e": float, "uth_i": float,
}


def read_config_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config", f"no such file: {path}")
    values = {}
    for n, raw in enumerate(p.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"{path}:{n}: expected key = value")
        key, val = (t.strip() for t in line.split("=", 1))
        values[key] = val
    return values


def build_config(values: dict) -> SimConfig:
    """Validated SimConfig from raw string (or typed) values; unset keys take defaults."""
    typed = {}
    for key, raw in values.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(key, "unknown configuration key")
        try:
            typed[key] = CONFIG_KEYS[key](raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
    preset = typed.pop("preset", "full")
    if preset not in PRESETS:
        raise ConfigError("preset", f"must be one of {', '.join(PRESETS)}")
    v = {**PRESETS[preset], **typed}
    grid = Grid(v["nx"], v["ny"], v["nz"], v.get("lx", 25.6), v.get("ly", 12.8), v.get("lz", 6.4))
    gem_keys = {"b0": "b0", "lambda": "lambda_", "nb_over_n0": "nb_over_n0", "psi0": "psi0",
                "ti_over_te": "ti_over_te", "mass_ratio": "mass_ratio", "uth_e": "uth_e",
                "uth_i": "uth_i"}
    gem = GemParams(**{attr: v[k] for k, attr in gem_keys.items() if k in v})
    gem.check(grid)
    tm = TransferModel(v.get("bandwidth", 8e9), v.get("latency", 1e-4),
                       v.get("staging_penalty", 1.5), v.get("throttle", True))
    simple = ("dt", "pc_iterations", "cycles", "repetitions", "seed", "engine", "workers",
              "field_passes", "device_capacity_bytes", "particle_region_bytes")
    cfg = SimConfig(grid=grid, species=gem_species(grid, gem, v["ppc"]), gem=gem, transfer=tm,
                    **{k: v[k] for k in simple if k in v})
    return cfg.validate()


def parse_config(path=None, overrides: dict | None = None) -> SimConfig:
    values = read_config_file(path) if path else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(values)


def _int_list(s: str) -> list[int]:
    try:
        out = [int(t) for t in s.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _engine_list(s: str) -> list[str]:
    out = [t.strip() for t in s.split(",") if t.strip()]
    bad = [e for e in out if e not in ENGINES]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"engines must be among {', '.join(ENGINES)}")
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--preset", choices=sorted(PRESETS))
    common.add_argument("--out", metavar="DIR", default="out")
    common.add_argument("--seed", type=int)
    common.add_argument("--engine", type=_engine_list, metavar="{cpu,naive,pinned,prefetch}")
    common.add_argument("--workers", type=_int_list, metavar="LIST")
    common.add_argument("--ppc", type=_int_list, metavar="LIST")
    common.add_argument("--cycles", type=int)
    common.add_argument("--reps", type=int)
    common.add_argument("--throttle", choices=("on", "off"))
    common.add_argument("--log-queue", action="store_true",
                        help="also write the device queue event log (run only)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="picoffload", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one simulation and report phase timings")
    sub.add_parser("bench", parents=[common], help="repeated runs, MPA/s per engine")
    sub.add_parser("scale", parents=[common], help="strong-scaling sweep over --workers")
    sub.add_parser("profile", parents=[common], help="cpu phase shares over --ppc")
    sub.add_parser("ppc-sweep", parents=[common], help="prefetch MPA/s over --ppc x --workers")
    return p


def _overrides(args) -> dict:
    o = {"preset": args.preset, "seed": args.seed, "cycles": args.cycles,
         "repetitions": args.reps}
    if args.throttle is not None:
        o["throttle"] = args.throttle == "on"
    if args.engine:
        o["engine"] = args.engine[0]
    if args.workers:
        o["workers"] = args.workers[0]
    if args.ppc:
        o["ppc"] = args.ppc[0]
    return o


def _print_table(header, rows) -> None:
    rows = [tuple(str(c) for c in r) for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(header)]
    print("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    for r in rows:
        print("  ".join(c.rjust(w) for c, w in zip(r, widths)))


def _cmd_run(cfg: SimConfig, args, out: Path) -> None:
    with Simulation(cfg) as sim:
        timings = sim.run()
        rec = bench.BenchRecord(cfg.engine, cfg.workers, cfg.ppc, 1, timings=[timings])
        bench.write_bench_csv(out / "bench.csv", [rec])
        if args.log_queue:
            for w, eng in enumerate(sim.engines):
                if getattr(eng, "queue", None) is not None:
                    eng.queue.write_log(out / f"queue_w{w}.csv")
        print(f"particles: {sim.total_particles}")
    _print_table(("cycle", "t_field", "t_mover", "t_moments", "t_exchange"),
                 [(i, f"{t.t_field:.4f}", f"{t.t_mover:.4f}", f"{t.t_moments:.4f}",
                   f"{t.t_exchange:.4f}") for i, t in enumerate(timings)])


def _summary_rows(rows):
    for r in rows:
        if isinstance(r, bench.ScalingRecord):
            yield (r.engine, r.n_workers, r.ppc, f"{r.perf:.3f}", f"{r.stddev:.3f}",
                   f"{r.speedup:.3f}", f"{r.efficiency:.3f}")
        else:
            yield (r.engine, r.workers, r.ppc, f"{r.mpa_per_s:.3f}", f"{r.stddev:.3f}", "", "")


def _cmd_bench(cfg, args, out):
    recs = [bench.run_benchmark(cfg, e) for e in (args.engine or [cfg.engine])]
    bench.write_bench_csv(out / "bench.csv", recs)
    bench.write_summary_csv(out / "summary.csv", recs)
    _print_table(bench.SUMMARY_HEADER, list(_summary_rows(recs)))


def _cmd_scale(cfg, args, out):
    rows, recs = [], []
    for e in args.engine or [cfg.engine]:
        r, b = bench.scaling_sweep(cfg, e, args.workers or [1, 2, 4, 8])
        rows += r
        recs += b
    bench.write_bench_csv(out / "bench.csv", recs)
    bench.write_summary_csv(out / "summary.csv", rows)
    _print_table(bench.SUMMARY_HEADER, list(_summary_rows(rows)))


def _cmd_profile(cfg, args, out):
    rows = bench.phase_profile(cfg, args.ppc or [27, 64, 125, 216, 343])
    bench.write_profile_csv(out / "profile.csv", rows)
    _print_table(bench.PROFILE_HEADER, [(p, f"{a:.2f}", f"{b:.2f}", f"{c:.2f}") for p, a, b, c in rows])


def _cmd_ppc_sweep(cfg, args, out):
    recs = bench.ppc_sweep(cfg, args.ppc or [27, 64, 125, 216, 343], args.workers or [cfg.workers])
    bench.write_bench_csv(out / "bench.csv", recs)
    bench.write_summary_csv(out / "summary.csv", recs)
    _print_table(bench.SUMMARY_HEADER, list(_summary_rows(recs)))


COMMANDS = {"run": _cmd_run, "bench": _cmd_bench, "scale": _cmd_scale, "profile": _cmd_profile,
            "ppc-sweep": _cmd_ppc_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on bad usage
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config, _overrides(args))
        if args.command in ("scale", "ppc-sweep") and args.workers:
            for n in args.workers:
                replace(cfg, workers=n).validate()
    except ConfigError as exc:
        print(f"picoffload: config error: {exc}", file=sys.stderr)
        return 2
    out = bench.ensure_dir(args.out)
    log.info("%s: grid %dx%dx%d, %d ppc, engine %s, seed %d", args.command, cfg.grid.nx,
             cfg.grid.ny, cfg.grid.nz, cfg.ppc, cfg.engine, cfg.seed)
    try:
        COMMANDS[args.command](cfg, args, out)
    except ConfigError as exc:
        print(f"picoffload: config error: {exc}", file=sys.stderr)
        return 2
    except (PicError, MemoryError, OSError) as exc:
        print(f"picoffload: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
