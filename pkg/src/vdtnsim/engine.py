"""Fixed-step simulation loop.

Each step runs the same eight phases in order: create due readings, expire
TTLs, move nodes, update contacts (aborting jobs on torn links), make routing
offers, advance transfers and commit completions, forward from PoPs to the
server, and log. Steps in which none of this can change anything are skipped
by sampling mobility in bulk; skipping never alters the event log.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

from .config import ConfigError, ScenarioConfig
from .geo import Point, RoadGraph, generate_grid_map, load_map, nearest_vertex
from .metrics import EventLog, EventRecord
from .mobility import (KMH, FixedRoute, MapRandomWaypoint, MovementModel, Stationary, Trajectory,
                       build_trajectory, load_routes, node_rng)
from .net import ContactLink, ContactScanner, LinkProfile, TransferJob, advance_transfers, on_link_down
from .routing import (VEHICLES, Buffer, BufferEntry, Message, Node, Role, accept_incoming, keeps_custody,
                      offer_copies, offers_nothing, on_transfer_complete, pop_policy, receiver_entry, respects_summary)

SERVER_ID = 0


@dataclass
class World:
    config: ScenarioConfig
    graph: RoadGraph
    nodes: list[Node]
    models: list[Optional[MovementModel]]
    trajectories: list[Trajectory]
    schedule: list[tuple[float, int]]  # (creation time, sensor id)
    routes: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def ids(self, role: Role) -> list[int]:
        return [n.id for n in self.nodes if n.role == role]


def default_grid_routes(rows: int, cols: int) -> dict[str, tuple[int, ...]]:
    """Two loops through the centre vertex, between diagonally opposite
    termini inset one block from the map corners."""
    center = (rows // 2) * cols + cols // 2
    top, bottom = min(1, rows - 1), max(rows - 2, 0)
    left, right = min(1, cols - 1), max(cols - 2, 0)
    a = (top * cols + left, center, bottom * cols + right)
    b = (bottom * cols + left, center, top * cols + right)
    return {"A": a, "B": b}


def generation_schedule(config: ScenarioConfig, sensor_ids: list[int]) -> list[tuple[float, int]]:
    """(time, sensor) pairs: warmup + k*interval for k >= 1 while
    k*interval < window, for every sensor, in time then sensor order."""
    s = config.sensors
    if s.interval <= 0:
        raise ConfigError("generation interval must be positive")
    times = []
    k = 1
    while k * s.interval < s.window:
        times.append(config.warmup + k * s.interval)
        k += 1
    return [(t, sid) for t in times for sid in sensor_ids]


def sensor_lattice(graph: RoadGraph, count: int, spacing: float) -> list[Point]:
    """``count`` points spread evenly over a ``spacing`` lattice covering the map."""
    if count == 0:
        return []
    x0, y0, x1, y1 = graph.bbox()
    nx = int(math.floor((x1 - x0) / spacing + 1e-9)) + 1
    ny = int(math.floor((y1 - y0) / spacing + 1e-9)) + 1
    lattice = [Point(x0 + i * spacing, y0 + j * spacing) for j in range(ny) for i in range(nx)]
    if count > len(lattice):
        raise ConfigError(f"{count} sensors do not fit a {nx}x{ny} lattice")
    if count == 1:
        return [lattice[len(lattice) // 2]]
    step = (len(lattice) - 1) / (count - 1)
    return [lattice[int(round(i * step))] for i in range(count)]


def _check_on_map(graph: RoadGraph, p: Point, what: str) -> None:
    x0, y0, x1, y1 = graph.bbox()
    if not (x0 - 1e-6 <= p.x <= x1 + 1e-6 and y0 - 1e-6 <= p.y <= y1 + 1e-6):
        raise ConfigError(f"{what} at ({p.x}, {p.y}) lies off the map")


def build_world(config: ScenarioConfig) -> World:
    """Instantiate nodes in id order server, PoPs, sensors, buses, cars."""
    config.validate()
    if config.map_file:
        try:
            with open(config.map_file) as fh:
                graph = load_map(fh.read())
        except FileNotFoundError:
            raise ConfigError(f"map file not found: {config.map_file}") from None
    else:
        graph = generate_grid_map(config.grid_rows, config.grid_cols, config.grid_spacing)

    bc = config.buses
    routes = bc.routes
    if routes is None and config.routes_file:
        try:
            with open(config.routes_file) as fh:
                routes = load_routes(fh.read())
        except FileNotFoundError:
            raise ConfigError(f"routes file not found: {config.routes_file}") from None
    if routes is None:
        if config.map_file:
            routes = {}
        else:
            routes = default_grid_routes(config.grid_rows, config.grid_cols)
    for name, stops in routes.items():
        for s in stops:
            if not 0 <= s < len(graph):
                raise ConfigError(f"route {name!r}: stop {s} is not a vertex")
    if bc.per_route > 0 and not routes and config.map_file:
        raise ConfigError("buses need routes: set routes_file or route.NAME keys")

    links = config.links

    def ifaces(names) -> tuple[LinkProfile, ...]:
        return tuple(links[n] for n in names)

    nodes: list[Node] = []
    models: list[Optional[MovementModel]] = []
    server = Node(SERVER_ID, Role.SERVER, Buffer(0))
    nodes.append(server)
    models.append(Stationary(Point(0.0, 0.0)))

    if config.pops.vertices is not None:
        pop_vertices = list(config.pops.vertices)
    else:
        x0, y0, x1, y1 = graph.bbox()
        pop_vertices = [nearest_vertex(graph, Point((x0 + x1) / 2, (y0 + y1) / 2))]
        for stops in routes.values():
            pop_vertices += [stops[0], stops[-1]]
    for v in pop_vertices:
        if not 0 <= v < len(graph):
            raise ConfigError(f"PoP vertex {v} is not on the map")
        nodes.append(Node(len(nodes), Role.POP, Buffer(config.pops.buffer), ifaces(config.pops.interfaces),
                          delivered=server.delivered))
        models.append(Stationary(graph.vertices[v]))

    sc = config.sensors
    nominal = sc.placements if sc.placements is not None else sensor_lattice(graph, sc.count, sc.spacing)
    for p in nominal:
        _check_on_map(graph, p, "sensor")
        nodes.append(Node(len(nodes), Role.SENSOR, Buffer(sc.buffer), ifaces(sc.interfaces)))
        models.append(Stationary(graph.vertices[nearest_vertex(graph, p)]))

    for name, stops in routes.items():
        for j in range(bc.per_route):
            shift = (j * len(stops)) // bc.per_route
            rotated = stops[shift:] + stops[:shift]
            nodes.append(Node(len(nodes), Role.BUS, Buffer(bc.buffer), ifaces(bc.interfaces), config.policy))
            models.append(FixedRoute(rotated, bc.speed_min_kmh * KMH, bc.speed_max_kmh * KMH,
                                     bc.pause_min, bc.pause_max))

    cc = config.cars
    for _ in range(cc.count):
        nodes.append(Node(len(nodes), Role.CAR, Buffer(cc.buffer), ifaces(cc.interfaces), config.policy))
        models.append(MapRandomWaypoint(cc.speed_min_kmh * KMH, cc.speed_max_kmh * KMH,
                                        cc.pause_min, cc.pause_max))

    trajectories = [build_trajectory(m, graph, node_rng(config.seed, i), config.duration)
                    for i, m in enumerate(models)]
    sensors = [n.id for n in nodes if n.role == Role.SENSOR]
    return World(config, graph, nodes, models, trajectories, generation_schedule(config, sensors), dict(routes))


def custom_world(config: ScenarioConfig, graph: RoadGraph, specs: list[tuple[Role, MovementModel]]) -> World:
    """World from explicit (role, movement) specs; a server is prepended.

    Buffers, interfaces and the vehicle policy come from ``config``. Used for
    hand-built topologies and small randomized worlds.
    """
    links = config.links
    per_role = {
        Role.POP: (config.pops.buffer, config.pops.interfaces),
        Role.SENSOR: (config.sensors.buffer, config.sensors.interfaces),
        Role.BUS: (config.buses.buffer, config.buses.interfaces),
        Role.CAR: (config.cars.buffer, config.cars.interfaces),
    }
    server = Node(SERVER_ID, Role.SERVER, Buffer(0))
    nodes, models = [server], [Stationary(Point(0.0, 0.0))]
    for role, model in specs:
        cap, names = per_role[role]
        node = Node(len(nodes), role, Buffer(cap), tuple(links[n] for n in names),
                    config.policy if role in VEHICLES else None)
        if role == Role.POP:
            node.delivered = server.delivered
        nodes.append(node)
        models.append(model)
    trajectories = [build_trajectory(m, graph, node_rng(config.seed, i), config.duration)
                    for i, m in enumerate(models)]
    sensors = [n.id for n in nodes if n.role == Role.SENSOR]
    return World(config, graph, nodes, models, trajectories, generation_schedule(config, sensors))


@dataclass
class _Direction:
    """Offer bookkeeping for one direction of one link."""

    cursor: int
    retry: set
    full_blocked: set = field(default_factory=set)


@dataclass
class SimClock:
    step_dt: float
    step_index: int = 0

    @property
    def now(self) -> float:
        return self.step_index * self.step_dt


class Simulation:
    """Runs one world. ``skip_idle`` and ``incremental`` are pure speedups;
    turning them off gives the literal per-step, re-offer-every-idle-link
    reference behaviour with an identical log."""

    def __init__(self, world: World, *, skip_idle: bool = True, incremental: bool = True):
        self.world = world
        cfg = world.config
        self.nodes = world.nodes
        self.dt = cfg.step_dt
        self.total_steps = int(math.ceil(cfg.duration / cfg.step_dt - 1e-9)) if cfg.duration > 0 else 0
        self.clock = SimClock(cfg.step_dt)
        self.skip_idle = skip_idle
        self.incremental = incremental
        self.log = EventLog()
        self._records = self.log.records
        self.now = 0.0  # time of the step being processed
        self.server = self.nodes[SERVER_ID]
        self.scanner = ContactScanner(world.trajectories, [n.interfaces for n in self.nodes], cfg.step_dt)

        self.links: dict[tuple[int, int], ContactLink] = {}
        self._next_link_id = 0
        self._dirs: dict[tuple[int, int], _Direction] = {}  # (link id, sender) -> state
        self.dirty: set[tuple[int, int]] = set()
        self.active: set[tuple[int, int]] = set()  # links with queued jobs
        self.out_reserved: dict[int, set[int]] = {n.id: set() for n in self.nodes}
        self.incoming: dict[int, dict[int, int]] = {n.id: {} for n in self.nodes}
        self.incoming_bytes: dict[int, int] = {n.id: 0 for n in self.nodes}
        # offers blocked by an in-flight copy, woken when that job ends:
        # (node, message) -> {(link id, sender, link key)}
        self._wait_out: dict[tuple[int, int], set] = {}
        self._wait_in: dict[tuple[int, int], set] = {}
        self.arrivals: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        self.holders: dict[int, set[int]] = {}
        self.messages: dict[int, Message] = {}

        sc = cfg.sensors
        gen: dict[int, list[tuple[int, int]]] = {}
        for mid, (t, sid) in enumerate(world.schedule):
            k = int(math.ceil(t / self.dt - 1e-9))
            gen.setdefault(k, []).append((mid, sid))
        self._gen = gen
        self._gen_steps = sorted(gen)
        self._gen_ptr = 0
        self._expiry: list[tuple[int, int]] = []
        self.delivered_at: dict[int, float] = {}
        self.counts = {"generated": 0, "delivered": 0, "transmitted": 0}
        self._next = 0

    # ---- helpers -------------------------------------------------------
    def _emit(self, kind: str, mid: int, src: int, dst: int = -1) -> None:
        self._records.append(EventRecord(self.now, kind, mid, src, dst))

    def _gain(self, node: Node, entry: BufferEntry) -> None:
        node.buffer.add(entry)
        mid = entry.message.id
        self.holders.setdefault(mid, set()).add(node.id)
        self.arrivals[node.id].append(mid)
        for peer in node.links:
            self.dirty.add(_key(node.id, peer))

    def _lose(self, node: Node, mid: int, by_ttl: bool = False) -> None:
        node.buffer.remove(mid)
        self.holders[mid].discard(node.id)
        self._space_freed(node.id, None if by_ttl else mid)

    def _space_freed(self, nid: int, mid: Optional[int]) -> None:
        """Receiver ``nid`` lost a copy or released reserved space: re-enable
        offers that were refused for that reason."""
        node = self.nodes[nid]
        for peer, link in node.links.items():
            d = self._dirs.get((link.link_id, peer))
            if d is None:
                continue
            touched = False
            if d.full_blocked:
                d.retry |= d.full_blocked
                d.full_blocked.clear()
                touched = True
            if mid is not None and mid in self.nodes[peer].buffer:
                d.retry.add(mid)
                touched = True
            if touched:
                self.dirty.add(_key(nid, peer))

    # ---- phases --------------------------------------------------------
    def _generate(self, k: int) -> None:
        batch = self._gen.get(k)
        if not batch:
            return
        sc = self.world.config.sensors
        for mid, sid in batch:
            msg = Message(mid, sid, SERVER_ID, self.now, sc.ttl, sc.message_size)
            self.messages[mid] = msg
            self.counts["generated"] += 1
            self._emit("generated", mid, sid)
            sensor = self.nodes[sid]
            heapq.heappush(self._expiry, (int(math.ceil(msg.expires_at / self.dt - 1e-9)), mid))
            if msg.size > sensor.buffer.free():
                self._emit("rejected_buffer", mid, sid, sid)
                continue
            self._gain(sensor, BufferEntry(msg, 1, sid, -1, (sid,)))

    def _expire(self, k: int) -> None:
        if not self._expiry or self._expiry[0][0] > k:
            return
        expired = set()
        while self._expiry and self._expiry[0][0] <= k:
            expired.add(heapq.heappop(self._expiry)[1])
        for key in sorted(self.active, key=self._link_order):
            link = self.links[key]
            keep = [j for j in link.queue if j.message_id not in expired]
            if len(keep) != len(link.queue):
                for j in link.queue:
                    if j.message_id in expired:
                        self._release(j)
                        self._emit("transfer_aborted", j.message_id, j.sender, j.receiver)
                link.queue.clear()
                link.queue.extend(keep)
                if not keep:
                    self.active.discard(key)
        for mid in sorted(expired):
            for nid in sorted(self.holders.get(mid, ())):
                self._lose(self.nodes[nid], mid, by_ttl=True)
                self._emit("dropped_ttl", mid, nid)

    def _release(self, job: TransferJob) -> None:
        mid = job.message_id
        self.out_reserved[job.sender].discard(mid)
        self._wake(self._wait_out, (job.sender, mid))
        inc = self.incoming[job.receiver]
        inc[mid] -= 1
        if not inc[mid]:
            del inc[mid]
            self._wake(self._wait_in, (job.receiver, mid))
        self.incoming_bytes[job.receiver] -= self.messages[mid].size

    def _wait(self, table: dict, key: tuple[int, int], link: ContactLink, s: int) -> None:
        if self.incremental:
            table.setdefault(key, set()).add((link.link_id, s, (link.a, link.b)))

    def _wake(self, table: dict, key: tuple[int, int]) -> None:
        waiters = table.pop(key, None)
        if not waiters:
            return
        for link_id, s, lkey in waiters:
            d = self._dirs.get((link_id, s))
            if d is not None:
                d.retry.add(key[1])
                self.dirty.add(lkey)

    def _link_up(self, a: int, b: int, profile: LinkProfile) -> None:
        link = ContactLink(self._next_link_id, a, b, profile, self.now)
        self._next_link_id += 1
        self.links[(a, b)] = link
        self.nodes[a].links[b] = link
        self.nodes[b].links[a] = link
        for s, r in ((a, b), (b, a)):
            start = set() if offers_nothing(self.nodes[s], self.nodes[r]) else set(self.nodes[s].buffer.entries)
            self._dirs[(link.link_id, s)] = _Direction(len(self.arrivals[s]), start)
        self.dirty.add((a, b))

    def _link_down(self, a: int, b: int) -> None:
        link = self.links.pop((a, b))
        del self.nodes[a].links[b]
        del self.nodes[b].links[a]
        self._dirs.pop((link.link_id, a), None)
        self._dirs.pop((link.link_id, b), None)
        self.dirty.discard((a, b))
        self.active.discard((a, b))
        for job in on_link_down(link):
            self._release(job)
            self._emit("transfer_aborted", job.message_id, job.sender, job.receiver)
            self._space_freed(job.receiver, None)

    def _contacts(self, changes) -> None:
        for a, b, old, new in changes:
            if old is not None:
                self._link_down(a, b)
        for a, b, old, new in changes:
            if new is not None:
                self._link_up(a, b, new)

    def _link_order(self, key: tuple[int, int]):
        link = self.links[key]
        exit_first = 0 if (self.nodes[link.a].is_exit or self.nodes[link.b].is_exit) else 1
        return (exit_first, link.established_at, link.a, link.b)

    def _candidates(self, link: ContactLink, s: int) -> list[int]:
        sender = self.nodes[s]
        d = self._dirs[(link.link_id, s)]
        if not self.incremental:
            d.retry = set()
            return set(sender.buffer.entries)
        cands = d.retry
        arr = self.arrivals[s]
        if d.cursor < len(arr):
            cands.update(arr[d.cursor:])
            d.cursor = len(arr)
        d.retry = set()
        entries = sender.buffer.entries
        return {m for m in cands if m in entries}

    def _offer(self, link: ContactLink) -> list[TransferJob]:
        jobs = []
        for s, r in ((link.a, link.b), (link.b, link.a)):
            sender, receiver = self.nodes[s], self.nodes[r]
            d = self._dirs[(link.link_id, s)]
            if offers_nothing(sender, receiver):
                continue
            cands = self._candidates(link, s)
            if cands and receiver.role != Role.SERVER:
                # a copy the receiver already buffers can never become a job;
                # if the receiver drops it, _space_freed puts it back in retry
                held = receiver.buffer.entries
                if receiver.is_exit and respects_summary(sender, receiver):
                    done = receiver.delivered
                    cands = {m for m in cands if m not in held and m not in done}
                else:
                    cands = {m for m in cands if m not in held}
            if not cands:
                continue
            entries = sender.buffer.entries
            # ids are issued in creation order, so this is the (created_at, id) order
            cands = sorted(cands)
            exclusive = not keeps_custody(sender.policy, sender.role)
            for mid in cands:
                entry = entries[mid]
                copies = offer_copies(sender, receiver, entry, link.link_id)
                if copies is None:
                    continue
                if exclusive and mid in self.out_reserved[s]:
                    self._wait(self._wait_out, (s, mid), link, s)
                    continue
                if mid in self.incoming[r]:
                    self._wait(self._wait_in, (r, mid), link, s)
                    continue
                reason = accept_incoming(receiver, entry.message, self.now, entry.hops, self.incoming_bytes[r])
                if reason == "buffer":
                    d.full_blocked.add(mid)
                    continue
                if reason is not None:
                    continue
                job = TransferJob(mid, s, r, copies, 8.0 * entry.message.size,
                                  (entry.message.created_at, mid, s))
                if exclusive:
                    self.out_reserved[s].add(mid)
                self.incoming[r][mid] = self.incoming[r].get(mid, 0) + 1
                self.incoming_bytes[r] += entry.message.size
                jobs.append(job)
        jobs.sort(key=lambda j: j.sort_key)
        return jobs

    def _route(self) -> None:
        if self.incremental:
            keys = [k for k in self.dirty if k in self.links]
        else:
            keys = list(self.links)
        keep_dirty = set()
        for key in sorted(keys, key=self._link_order):
            link = self.links[key]
            if link.queue:
                keep_dirty.add(key)
                continue
            jobs = self._offer(link)
            for job in jobs:
                link.queue.append(job)
                self._emit("transfer_started", job.message_id, job.sender, job.receiver)
            if jobs:
                self.active.add(key)
            if self.incremental:
                da = self._dirs[(link.link_id, link.a)]
                db = self._dirs[(link.link_id, link.b)]
                if da.retry or db.retry:
                    keep_dirty.add(key)
        self.dirty = keep_dirty

    def _transfer(self) -> None:
        for key in sorted(self.active, key=self._link_order):
            link = self.links[key]
            for job in advance_transfers(link, self.dt):
                self._commit(job, link)
            if not link.queue:
                self.active.discard(key)
                self.dirty.add(key)

    def _commit(self, job: TransferJob, link: ContactLink) -> None:
        self._release(job)
        sender, receiver = self.nodes[job.sender], self.nodes[job.receiver]
        entry = sender.buffer.entries[job.message_id]
        self.counts["transmitted"] += 1
        self._emit("transfer_completed", job.message_id, job.sender, job.receiver)
        reason = accept_incoming(receiver, entry.message, self.now, entry.hops, self.incoming_bytes[job.receiver])
        if reason is not None:
            kind = "rejected_buffer" if reason == "buffer" else "rejected_duplicate"
            self._emit(kind, job.message_id, job.sender, job.receiver)
            return
        new = receiver_entry(receiver, sender, entry, job.copies, link.link_id)
        on_transfer_complete(sender, job.message_id, job.copies, receiver)
        if job.message_id not in sender.buffer.entries:
            self.holders[job.message_id].discard(sender.id)
            self._space_freed(sender.id, job.message_id)
        self._gain(receiver, new)

    def _forward_pops(self) -> None:
        server = self.server
        for pop in self.nodes:
            if pop.role != Role.POP or not pop.buffer.entries:
                continue
            for entry in pop_policy(pop):
                mid = entry.message.id
                self._emit("transfer_started", mid, pop.id, SERVER_ID)
                self.counts["transmitted"] += 1
                self._emit("transfer_completed", mid, pop.id, SERVER_ID)
                if accept_incoming(server, entry.message, self.now) is None:
                    server.delivered.add(mid)
                    self.delivered_at[mid] = self.now
                    self.counts["delivered"] += 1
                    self._emit("delivered", mid, pop.id, SERVER_ID)
                else:
                    self._emit("rejected_duplicate", mid, pop.id, SERVER_ID)
                self._lose(pop, mid)

    # ---- driver --------------------------------------------------------
    def _process(self, k: int, changes) -> None:
        self.clock.step_index = k
        self.now = self.clock.now
        self._generate(k)
        self._expire(k)
        self._contacts(changes)
        self._route()
        self._transfer()
        self._forward_pops()

    def _busy(self) -> bool:
        return bool(self.dirty or self.active)

    def _horizon(self, k: int) -> int:
        """Last step that may be skipped to from ``k``."""
        if not self.skip_idle or self._busy():
            return k
        limit = self.total_steps - 1
        while self._gen_ptr < len(self._gen_steps) and self._gen_steps[self._gen_ptr] < k:
            self._gen_ptr += 1
        if self._gen_ptr < len(self._gen_steps):
            limit = min(limit, self._gen_steps[self._gen_ptr])
        if self._expiry:
            limit = min(limit, self._expiry[0][0])
        return max(limit, k)

    def step(self) -> bool:
        """Process the next step that can change state; False when finished."""
        k = self._next
        if k >= self.total_steps:
            return False
        kk, changes = self.scanner.scan(k, self._horizon(k))
        self._process(kk, changes)
        self._next = kk + 1
        return True

    def run(self) -> EventLog:
        while self.step():
            pass
        self.clock.step_index = self.total_steps
        self.now = self.clock.now
        return self.log

    # ---- inspection ----------------------------------------------------
    def in_flight(self) -> set[int]:
        return {j.message_id for key in self.active for j in self.links[key].queue}

    def alive(self) -> set[int]:
        return {m for m, h in self.holders.items() if h}

    def positions(self) -> list[Point]:
        return self.scanner.positions()


def _key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def run(config: ScenarioConfig) -> EventLog:
    return Simulation(build_world(config)).run()
