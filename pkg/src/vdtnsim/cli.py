"""``vdtnsim run | sweep | genmap``."""
from __future__ import annotations

import argparse
import sys
import time

from .config import ConfigError, load_scenario
from .engine import Simulation, build_world
from .geo import MapError, dump_grid_map
from .metrics import RunKey, kpi_report, rows_to_csv, sweep_aggregate
from .routing import policy_label
from .sweep import _fingerprint, load_sweep, run_sweep


def _write(path: str, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def cmd_run(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    cfg.validate()
    log = Simulation(build_world(cfg)).run()
    rep = kpi_report(log)
    key = RunKey(policy_label(cfg.policy), cfg.cars.count, cfg.seed)
    rows = sweep_aggregate({key: rep}, cfg.land_area_km2, {key: _fingerprint(cfg)})
    _write(args.out, rows_to_csv(rows))
    if args.log:
        _write(args.log, log.to_text())
    return 0


def cmd_sweep(args) -> int:
    spec = load_sweep(args.spec)
    total = len(spec.keys())
    done = [0]
    started = time.monotonic()

    def progress(key, rep):
        done[0] += 1
        status = "ok" if rep is not None else "FAILED"
        print(f"[{done[0]}/{total}] {key.policy} cars={key.cars} seed={key.seed} {status} "
              f"({time.monotonic() - started:.0f}s)", file=sys.stderr)

    result = run_sweep(spec, workers=args.workers, progress=progress if not args.quiet else None)
    _write(args.out, rows_to_csv(result.rows))
    if result.failures:
        print(f"{len(result.failures)} of {total} runs failed:", file=sys.stderr)
        for key, err in result.failures.items():
            last = err.strip().splitlines()[-1]
            print(f"  {key.policy} cars={key.cars} seed={key.seed}: {last}", file=sys.stderr)
        return 1
    return 0


def cmd_genmap(args) -> int:
    _write(args.out, dump_grid_map(args.rows, args.cols, args.spacing))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vdtnsim", description="Vehicular DTN data-collection simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("--scenario", required=True)
    r.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    r.add_argument("--log", default=None, help="also write the event log here")
    r.add_argument("--out", required=True, help="results CSV")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a policy x car-count x seed sweep")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("genmap", help="write a grid road map")
    g.add_argument("--rows", type=int, required=True)
    g.add_argument("--cols", type=int, required=True)
    g.add_argument("--spacing", type=float, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_genmap)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MapError, ValueError, OSError) as exc:
        print(f"vdtnsim {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
