"""Small hand-built and randomized worlds shared by the engine tests."""
import random
from collections import Counter
from dataclasses import dataclass

from vdtnsim.config import ScenarioConfig
from vdtnsim.engine import Simulation, custom_world
from vdtnsim.geo import Point, generate_grid_map, load_map
from vdtnsim.metrics import EventLog, classify_messages
from vdtnsim.mobility import FixedRoute, MapRandomWaypoint, Stationary
from vdtnsim.routing import VEHICLES, Role, parse_policy

POLICIES = ("direct_delivery", "first_contact", "epidemic", "spray_and_wait:binary:6")

LINE = load_map("0,0 990,0")
SMALL_GRID = generate_grid_map(3, 3, 100)


def line_world(policy="direct_delivery", cars=1, interval=5.0, window=20.0, ttl=18000.0, duration=200.0):
    """A straight 990 m road: sensor at x=103, PoP at the far end, cars
    parked 10 s at x=0 and then driving at exactly 7 m/s."""
    cfg = ScenarioConfig(duration=duration, warmup=0.0, step_dt=0.1, seed=1, policy=parse_policy(policy))
    cfg = cfg.with_(**{"sensors.interval": interval, "sensors.window": window, "sensors.ttl": ttl})
    car = FixedRoute((0, 1), 7.0, 7.0, 10.0, 10.0)
    specs = [(Role.POP, Stationary(Point(990, 0))), (Role.SENSOR, Stationary(Point(103, 0)))]
    specs += [(Role.CAR, car)] * cars
    return custom_world(cfg, LINE, specs)


def random_world(seed, policy, cars=5, sensors=3, pops=1, duration=900.0, step_dt=1.0, **overrides):
    """World of about ten nodes on a 3x3 grid of 100 m blocks. With two
    PoPs a message can reach the server twice, so duplicates occur."""
    rnd = random.Random(seed)
    cfg = ScenarioConfig(duration=duration, warmup=0.0, step_dt=step_dt, seed=seed, policy=parse_policy(policy))
    changes = {"sensors.interval": 30.0, "sensors.window": 600.0, "sensors.ttl": 400.0}
    changes.update(overrides)
    cfg = cfg.with_(**changes)
    specs = [(Role.POP, Stationary(SMALL_GRID.vertices[v])) for v in rnd.sample(range(9), pops)]
    specs += [(Role.SENSOR, Stationary(Point(rnd.uniform(0, 200), rnd.choice([0.0, 100.0, 200.0]))))
              for _ in range(sensors)]
    specs += [(Role.CAR, MapRandomWaypoint(5.0, 15.0, 0.0, 30.0)) for _ in range(cars)]
    return custom_world(cfg, SMALL_GRID, specs)


def run_world(world, **kw):
    return Simulation(world, **kw).run()


def receipts(log):
    """(message, node) pairs for every accepted hop."""
    recs = log.records
    out = set()
    for i, r in enumerate(recs):
        if r.kind != "transfer_completed":
            continue
        nxt = recs[i + 1] if i + 1 < len(recs) else None
        rejected = (nxt is not None and nxt.kind in ("rejected_duplicate", "rejected_buffer")
                    and (nxt.message, nxt.src, nxt.dst) == (r.message, r.src, r.dst))
        if not rejected:
            out.add((r.message, r.dst))
    return out


# ---- randomized corpus for the property suites ----------------------------
CASES = 1000
MASTER = 20240


@dataclass
class Outcome:
    log: EventLog
    fate: dict
    custody_violations: list
    budget_violations: list
    unexplained: list
    pops: frozenset


def _check_step(sim, policy, custody, budget):
    if policy in ("direct_delivery", "first_contact"):
        for mid, h in sim.holders.items():
            if len(h) > 1:
                custody.append((sim.now, mid, sorted(h)))
        jobs = Counter(j.message_id for key in sim.active for j in sim.links[key].queue)
        custody.extend((sim.now, mid, "in flight twice") for mid, n in jobs.items() if n > 1)
    elif policy.startswith("spray_and_wait"):
        for mid, h in sim.holders.items():
            total = sum(sim.nodes[n].buffer.entries[mid].copies for n in h if sim.nodes[n].role in VEHICLES)
            if total > 6:
                budget.append((sim.now, mid, total))


def simulate(seed, policy, params):
    sim = Simulation(random_world(seed, policy, **params))
    custody, budget = [], []
    while sim.step():
        _check_step(sim, policy, custody, budget)
    log = sim.run()
    fate = classify_messages(log, sim.alive(), sim.in_flight())
    gen_rejects = {r.message for r in log.of_kind("rejected_buffer") if r.src == r.dst}
    dropped = {r.message for r in log.of_kind("dropped_ttl")}
    msgs = sim.messages
    unexplained = []
    for mid, f in fate.items():
        if f == "gone" and mid not in gen_rejects:
            unexplained.append((mid, "vanished"))
        if f in ("alive", "in_flight") and sim.now >= msgs[mid].expires_at:
            unexplained.append((mid, "outlived ttl"))
        if f == "dropped" and sim.holders.get(mid):
            unexplained.append((mid, "dropped but held"))
        if f == "delivered" and mid not in sim.server.delivered:
            unexplained.append((mid, "delivered but not at server"))
    if set(fate) != set(msgs) or len(dropped - set(msgs)):
        unexplained.append(("ids", "mismatch"))
    pops = frozenset(n.id for n in sim.nodes if n.role == Role.POP)
    return Outcome(log, fate, custody, budget, unexplained, pops)


def build_corpus():
    """CASES random worlds, each run under every policy."""
    rnd = random.Random(MASTER)
    out = []
    for _ in range(CASES):
        seed = rnd.randrange(2**31)
        pops = rnd.randint(1, 2)
        params = {"pops": pops, "cars": rnd.randint(2, 7 - pops), "sensors": rnd.randint(1, 3),
                  "sensors.interval": rnd.choice([15.0, 30.0, 60.0]),
                  "sensors.ttl": rnd.choice([120.0, 400.0, 900.0])}
        out.append((seed, params, {p: simulate(seed, p, params) for p in POLICIES}))
    return out
