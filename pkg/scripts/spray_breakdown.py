"""Where Spray and Wait's transmissions go, per car count.

Splits every completed transfer of one run into pickups (sensor to
vehicle), sprays (vehicle to vehicle), offloads (vehicle to PoP) and
uplinks (PoP to server), then reports each class per delivered message.
Useful for seeing why the overhead keeps creeping up after the copy
budget should have capped it.

    python3 scripts/spray_breakdown.py --cars 18 36 90 --seed 1
"""
import argparse
from collections import Counter

from vdtnsim import ScenarioConfig, Simulation, build_world, kpi_report
from vdtnsim.routing import VEHICLES, Role, parse_policy


def breakdown(cars, seed, policy):
    cfg = ScenarioConfig(seed=seed, policy=parse_policy(policy)).with_(**{"cars.count": cars})
    world = build_world(cfg)
    role = [n.role for n in world.nodes]
    sim = Simulation(world)
    log = sim.run()
    kinds = Counter()
    for r in log.of_kind("transfer_completed"):
        a, b = role[r.src], role[r.dst]
        if a == Role.SENSOR:
            kinds["pickup"] += 1
        elif a in VEHICLES and b in VEHICLES:
            kinds["spray"] += 1
        elif b == Role.POP:
            kinds["offload"] += 1
        else:
            kinds["uplink"] += 1
    dup = len(log.of_kind("rejected_duplicate"))
    return kpi_report(log), kinds, dup


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cars", type=int, nargs="+", default=[3, 18, 36, 90])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--policy", default="spray_and_wait:binary:6")
    args = ap.parse_args()
    print(f"{'cars':>5} {'OR':>6} {'pickup':>7} {'spray':>7} {'offload':>8} {'uplink':>7} {'dup':>6}")
    for cars in args.cars:
        rep, k, dup = breakdown(cars, args.seed, args.policy)
        n = rep.delivered or 1
        print(f"{cars:>5} {rep.overhead_ratio:6.2f} {k['pickup'] / n:7.2f} {k['spray'] / n:7.2f} "
              f"{k['offload'] / n:8.2f} {k['uplink'] / n:7.2f} {dup / n:6.2f}")


if __name__ == "__main__":
    main()
