"""Movement models on a road graph.

Two equivalent evaluators are provided. ``init_state``/``advance`` step a
single node forward by ``dt``; ``build_trajectory`` produces the same motion
as a piecewise-linear knot list that the engine samples in bulk. Both draw
from the node's random stream in the same order:

* random waypoint: start vertex, initial pause, then per leg (destination,
  speed) and the pause on arrival;
* fixed route: initial pause, then per leg (speed) and the pause on arrival.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .geo import MapError, Path, Point, RoadGraph, shortest_path

KMH = 1000.0 / 3600.0


@dataclass(frozen=True)
class Stationary:
    at: Point


@dataclass(frozen=True)
class MapRandomWaypoint:
    speed_min: float  # m/s
    speed_max: float
    pause_min: float  # s
    pause_max: float

    def __post_init__(self):
        _check_ranges(self)


@dataclass(frozen=True)
class FixedRoute:
    stops: tuple[int, ...]
    speed_min: float
    speed_max: float
    pause_min: float
    pause_max: float

    def __post_init__(self):
        _check_ranges(self)
        object.__setattr__(self, "stops", tuple(int(s) for s in self.stops))
        if len(set(self.stops)) < 2:
            raise ValueError("a fixed route needs at least two distinct stops")
        for a, b in zip(self.stops, self.stops[1:] + self.stops[:1]):
            if a == b:
                raise ValueError(f"consecutive stops must differ (stop {a} repeats)")


MovementModel = Union[Stationary, MapRandomWaypoint, FixedRoute]


def _check_ranges(m) -> None:
    if not (0 < m.speed_min <= m.speed_max):
        raise ValueError(f"need 0 < speed_min <= speed_max, got {m.speed_min}, {m.speed_max}")
    if not (0 <= m.pause_min <= m.pause_max):
        raise ValueError(f"need 0 <= pause_min <= pause_max, got {m.pause_min}, {m.pause_max}")


def node_rng(master_seed: int, node_id: int) -> np.random.Generator:
    """Independent stream per node; adding nodes never perturbs existing ones."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(node_id,))))


@dataclass(frozen=True)
class MovementState:
    position: Point
    time: float
    vertex: int | None  # current vertex while paused; origin vertex while traversing
    paused_until: float | None = None
    path: Path | None = None
    distance_covered: float = 0.0
    leg_speed: float = 0.0
    next_stop: int = 0  # index into FixedRoute.stops of the next target


def _pause(model, rng) -> float:
    return float(rng.uniform(model.pause_min, model.pause_max))


def _speed(model, rng) -> float:
    return float(rng.uniform(model.speed_min, model.speed_max))


def _random_other_vertex(n: int, current: int, rng) -> int:
    dest = int(rng.integers(n - 1))
    return dest + 1 if dest >= current else dest


def init_state(model: MovementModel, graph: RoadGraph, rng: np.random.Generator) -> MovementState:
    if isinstance(model, Stationary):
        return MovementState(position=model.at, time=0.0, vertex=None)
    if isinstance(model, MapRandomWaypoint):
        if len(graph) < 2:
            raise MapError("random waypoint needs at least two vertices")
        v = int(rng.integers(len(graph)))
        return MovementState(graph.vertices[v], 0.0, v, paused_until=_pause(model, rng))
    if isinstance(model, FixedRoute):
        for s in model.stops:
            if not 0 <= s < len(graph):
                raise MapError(f"route stop {s} is not a vertex of the map")
        v = model.stops[0]
        return MovementState(graph.vertices[v], 0.0, v, paused_until=_pause(model, rng), next_stop=1)
    raise TypeError(f"unknown movement model {model!r}")


def _start_leg(state: MovementState, model, graph: RoadGraph, rng) -> MovementState:
    if isinstance(model, MapRandomWaypoint):
        dest = _random_other_vertex(len(graph), state.vertex, rng)
        nxt = 0
    else:
        dest = model.stops[state.next_stop]
        nxt = (state.next_stop + 1) % len(model.stops)
    speed = _speed(model, rng)
    path = shortest_path(graph, state.vertex, dest)
    return replace(state, paused_until=None, path=path, distance_covered=0.0,
                   leg_speed=speed, next_stop=nxt)


def position_along(graph: RoadGraph, path: Path, distance: float) -> Point:
    acc = 0.0
    verts = path.vertices
    for a, b in zip(verts, verts[1:]):
        length = graph.edge_length(a, b)
        if distance <= acc + length:
            f = (distance - acc) / length
            pa, pb = graph.vertices[a], graph.vertices[b]
            return Point(pa.x + (pb.x - pa.x) * f, pa.y + (pb.y - pa.y) * f)
        acc += length
    return graph.vertices[verts[-1]]


def advance(state: MovementState, model: MovementModel, graph: RoadGraph,
            rng: np.random.Generator, dt: float) -> MovementState:
    """Move ``state`` forward by ``dt`` seconds. Time left over after an
    arrival is spent in the new pause, and a pause that ends mid-step starts
    the next leg within the same step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(model, Stationary):
        return replace(state, time=state.time + dt)
    end = state.time + dt
    while True:
        if state.paused_until is not None:
            if state.paused_until >= end:
                return replace(state, time=end)
            state = replace(state, time=state.paused_until)
            state = _start_leg(state, model, graph, rng)
            continue
        remaining = end - state.time
        left = state.path.total_length - state.distance_covered
        needed = left / state.leg_speed
        if needed > remaining:
            covered = state.distance_covered + state.leg_speed * remaining
            return replace(state, time=end, distance_covered=covered,
                           position=position_along(graph, state.path, covered))
        arrive = state.time + needed
        dest = state.path.vertices[-1]
        state = MovementState(graph.vertices[dest], arrive, dest,
                              paused_until=arrive + _pause(model, rng),
                              next_stop=state.next_stop)


@dataclass
class Trajectory:
    """Piecewise-linear motion: between consecutive knots the node moves at
    constant velocity; after the last knot it stays put."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    arrivals: list[tuple[float, int]]  # (time, vertex) of every leg end

    def position(self, when: float) -> Point:
        i = int(np.searchsorted(self.t, when, side="right")) - 1
        if i < 0:
            i = 0
        if i >= len(self.t) - 1:
            return Point(float(self.x[-1]), float(self.y[-1]))
        t0, t1 = self.t[i], self.t[i + 1]
        f = (when - t0) / (t1 - t0) if t1 > t0 else 0.0
        return Point(float(self.x[i] + (self.x[i + 1] - self.x[i]) * f),
                     float(self.y[i] + (self.y[i + 1] - self.y[i]) * f))


def build_trajectory(model: MovementModel, graph: RoadGraph, rng: np.random.Generator,
                     until: float) -> Trajectory:
    """Generate knots covering [0, until]."""
    st = init_state(model, graph, rng)
    if isinstance(model, Stationary):
        return Trajectory(np.array([0.0]), np.array([st.position.x]), np.array([st.position.y]), [])
    ts, xs, ys = [0.0], [st.position.x], [st.position.y]
    arrivals: list[tuple[float, int]] = []
    t = st.paused_until
    vertex, nxt = st.vertex, st.next_stop
    while True:
        ts.append(t)
        p = graph.vertices[vertex]
        xs.append(p.x)
        ys.append(p.y)
        if t >= until:
            break
        if isinstance(model, MapRandomWaypoint):
            dest = _random_other_vertex(len(graph), vertex, rng)
        else:
            dest = model.stops[nxt]
            nxt = (nxt + 1) % len(model.stops)
        speed = _speed(model, rng)
        path = shortest_path(graph, vertex, dest)
        # knot times accumulate per edge, matching advance()'s covered distance
        covered = 0.0
        verts = path.vertices
        for a, b in zip(verts, verts[1:]):
            covered += graph.edge_length(a, b)
            ts.append(t + covered / speed)
            q = graph.vertices[b]
            xs.append(q.x)
            ys.append(q.y)
        t = t + path.total_length / speed
        ts[-1] = t
        vertex = dest
        arrivals.append((t, dest))
        t = t + _pause(model, rng)
    return Trajectory(np.array(ts), np.array(xs), np.array(ys), arrivals)


def load_routes(text: str) -> dict[str, tuple[int, ...]]:
    """Routes file: ``name stop stop ...`` per line, ``#`` comments."""
    routes: dict[str, tuple[int, ...]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        name, *stops = line.split()
        if len(stops) < 2:
            raise ValueError(f"line {lineno}: route {name!r} needs at least two stops")
        if name in routes:
            raise ValueError(f"line {lineno}: duplicate route {name!r}")
        try:
            routes[name] = tuple(int(s) for s in stops)
        except ValueError:
            raise ValueError(f"line {lineno}: stop ids must be integers") from None
    return routes


def dump_routes(routes: dict[str, tuple[int, ...]]) -> str:
    return "".join(f"{name} {' '.join(map(str, stops))}\n" for name, stops in routes.items())
