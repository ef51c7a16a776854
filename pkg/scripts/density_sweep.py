"""Reference density sweep: four policies over eight car counts, five seeds.

Writes the aggregated CSV and prints one KPI table per metric.

    python3 scripts/density_sweep.py --out results/density.csv
    python3 scripts/density_sweep.py --cars 3 18 90 --seeds 1 2 --workers 4
"""
import argparse
import os
import sys
import time

from vdtnsim import ScenarioConfig, load_scenario
from vdtnsim.metrics import rows_to_csv
from vdtnsim.sweep import DEFAULT_CARS, DEFAULT_POLICIES, SweepSpec, run_sweep


def table(rows, field, fmt):
    cars = sorted({r.cars for r in rows})
    by = {(r.policy if r.mode is None else f"{r.policy}:{r.mode}:{r.copies}", r.cars): r for r in rows}
    policies = list(dict.fromkeys(p for p, _ in by))
    lines = [f"{field:<28}" + "".join(f"{c:>9}" for c in cars)]
    for p in policies:
        cells = []
        for c in cars:
            v = getattr(by[(p, c)], field) if (p, c) in by else None
            cells.append(f"{'-' if v is None else format(v, fmt):>9}")
        lines.append(f"{p:<28}" + "".join(cells))
    return "\n".join(lines)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default=None, help="scenario file (defaults to the built-in reference)")
    ap.add_argument("--cars", type=int, nargs="+", default=list(DEFAULT_CARS))
    ap.add_argument("--policies", nargs="+", default=list(DEFAULT_POLICIES))
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", default="density_sweep.csv")
    args = ap.parse_args()

    base = load_scenario(args.scenario) if args.scenario else ScenarioConfig()
    spec = SweepSpec(args.scenario, tuple(args.cars), tuple(args.policies), tuple(args.seeds))
    t0 = time.perf_counter()
    result = run_sweep(spec, base, workers=args.workers or os.cpu_count())
    elapsed = time.perf_counter() - t0

    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        fh.write(rows_to_csv(result.rows))

    print(f"{len(result.reports)} runs in {elapsed:.1f} s -> {args.out}")
    print(f"density = cars / {base.land_area_km2:g} km2\n")
    for field, fmt in (("dp_mean", ".3f"), ("al_minutes_mean", ".1f"), ("or_mean", ".2f")):
        print(table(result.rows, field, fmt) + "\n")
    for key, err in result.failures.items():
        print(f"FAILED {key}: {err.strip().splitlines()[-1]}", file=sys.stderr)
    return 1 if result.failures else 0


if __name__ == "__main__":
    sys.exit(main())
