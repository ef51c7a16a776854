"""Planar road graphs: loading, grid generation, shortest paths, snapping.

Coordinates are map-local meters. Vertex ids are dense integers assigned in
order of first appearance when a map is loaded.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

MERGE_TOLERANCE = 1e-3


class MapError(ValueError):
    pass


class MapParseError(MapError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class DisconnectedMapError(MapError):
    def __init__(self, sizes: list[int]):
        super().__init__(f"road graph is disconnected; component sizes {sizes}")
        self.sizes = sizes


class UnreachableError(MapError):
    pass


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinate {self.x!r}, {self.y!r}")

    def dist(self, other: "Point") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Path:
    vertices: tuple[int, ...]
    total_length: float


@dataclass
class RoadGraph:
    """Undirected road network. Immutable after construction by convention."""

    vertices: list[Point]
    edges: list[tuple[int, int, float]]
    adjacency: list[list[tuple[int, float]]] = field(init=False, repr=False)
    _sp_cache: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        n = len(self.vertices)
        self.adjacency = [[] for _ in range(n)]
        seen = set()
        for u, v, length in self.edges:
            if not (0 <= u < n and 0 <= v < n):
                raise MapError(f"edge ({u}, {v}) references a missing vertex")
            if u == v:
                raise MapError(f"self-loop at vertex {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise MapError(f"duplicate edge {key}")
            seen.add(key)
            expected = self.vertices[u].dist(self.vertices[v])
            if abs(expected - length) > 1e-6:
                raise MapError(f"edge {key} length {length} != {expected}")
            self.adjacency[u].append((v, length))
            self.adjacency[v].append((u, length))
        for nbrs in self.adjacency:
            nbrs.sort()

    def __len__(self) -> int:
        return len(self.vertices)

    def components(self) -> list[list[int]]:
        n = len(self.vertices)
        label = [-1] * n
        comps = []
        for s in range(n):
            if label[s] >= 0:
                continue
            stack, comp = [s], []
            label[s] = len(comps)
            while stack:
                u = stack.pop()
                comp.append(u)
                for v, _ in self.adjacency[u]:
                    if label[v] < 0:
                        label[v] = len(comps)
                        stack.append(v)
            comps.append(sorted(comp))
        return comps

    def validate_connected(self) -> None:
        comps = self.components()
        if len(comps) > 1:
            raise DisconnectedMapError(sorted((len(c) for c in comps), reverse=True))

    def bbox(self) -> tuple[float, float, float, float]:
        xs = [p.x for p in self.vertices]
        ys = [p.y for p in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def edge_length(self, u: int, v: int) -> float:
        for w, length in self.adjacency[u]:
            if w == v:
                return length
        raise KeyError((u, v))


def _build(points: list[Point], edges: Iterable[tuple[int, int]]) -> RoadGraph:
    out = [(u, v, points[u].dist(points[v])) for u, v in edges]
    return RoadGraph(points, out)


def load_map(text: str) -> RoadGraph:
    """Parse polyline map text into a validated, connected RoadGraph.

    One polyline per line, points as ``x,y`` separated by spaces; blank lines
    and ``#`` comments are skipped. Endpoints closer than ``MERGE_TOLERANCE``
    are merged into one vertex.
    """
    points: list[Point] = []
    # coarse hash grid for tolerance merging
    cells: dict[tuple[int, int], list[int]] = {}
    edges: dict[tuple[int, int], None] = {}

    def vertex_for(p: Point) -> int:
        cx, cy = math.floor(p.x / MERGE_TOLERANCE), math.floor(p.y / MERGE_TOLERANCE)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for vid in cells.get((cx + dx, cy + dy), ()):
                    if points[vid].dist(p) <= MERGE_TOLERANCE:
                        return vid
        points.append(p)
        cells.setdefault((cx, cy), []).append(len(points) - 1)
        return len(points) - 1

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        ids = []
        for tok in line.split():
            parts = tok.split(",")
            if len(parts) != 2:
                raise MapParseError(lineno, f"bad point {tok!r}, expected x,y")
            try:
                p = Point(float(parts[0]), float(parts[1]))
            except ValueError as exc:
                raise MapParseError(lineno, f"bad point {tok!r}: {exc}") from None
            ids.append(vertex_for(p))
        if len(ids) < 2:
            raise MapParseError(lineno, "polyline needs at least two points")
        for u, v in zip(ids, ids[1:]):
            if u == v:
                raise MapParseError(lineno, "zero-length segment")
            edges.setdefault((min(u, v), max(u, v)), None)
    if not points:
        raise MapError("map contains no polylines")
    graph = _build(points, edges)
    graph.validate_connected()
    return graph


def _fmt(v: float) -> str:
    return repr(float(v)) if v != int(v) else str(int(v))


def dump_map(graph: RoadGraph) -> str:
    """Serialize as one two-point polyline per edge."""
    lines = ["# polyline road map, meters"]
    for u, v, _ in graph.edges:
        a, b = graph.vertices[u], graph.vertices[v]
        lines.append(f"{_fmt(a.x)},{_fmt(a.y)} {_fmt(b.x)},{_fmt(b.y)}")
    return "\n".join(lines) + "\n"


def generate_grid_map(rows: int, cols: int, spacing: float) -> RoadGraph:
    """Manhattan grid; vertex id = row * cols + col at (col*spacing, row*spacing)."""
    if rows < 2 or cols < 2:
        raise MapError(f"grid needs rows >= 2 and cols >= 2, got {rows}x{cols}")
    if not spacing > 0:
        raise MapError(f"grid spacing must be positive, got {spacing}")
    points = [Point(c * spacing, r * spacing) for r in range(rows) for c in range(cols)]
    edges = []
    for r in range(rows):
        for c in range(cols):
            vid = r * cols + c
            if c + 1 < cols:
                edges.append((vid, vid + 1))
            if r + 1 < rows:
                edges.append((vid, vid + cols))
    return _build(points, sorted(edges))


def dump_grid_map(rows: int, cols: int, spacing: float) -> str:
    """Grid as row polylines then column polylines, so loading keeps row-major ids."""
    generate_grid_map(rows, cols, spacing)  # validates dimensions
    lines = [f"# {rows}x{cols} grid, spacing {_fmt(spacing)} m"]
    for r in range(rows):
        lines.append(" ".join(f"{_fmt(c * spacing)},{_fmt(r * spacing)}" for c in range(cols)))
    for c in range(cols):
        lines.append(" ".join(f"{_fmt(c * spacing)},{_fmt(r * spacing)}" for r in range(rows)))
    return "\n".join(lines) + "\n"


def shortest_path(graph: RoadGraph, src: int, dst: int) -> Path:
    """Minimum-length path; equal lengths resolve to the lexicographically
    smallest vertex sequence. Results are memoized on the graph."""
    n = len(graph.vertices)
    if not (0 <= src < n and 0 <= dst < n):
        raise MapError(f"vertex out of range: {src} -> {dst}")
    key = (src, dst)
    hit = graph._sp_cache.get(key)
    if hit is not None:
        return hit
    if src == dst:
        path = Path((src,), 0.0)
        graph._sp_cache[key] = path
        return path
    # labels are (distance, vertex sequence); the first pop of a vertex is its
    # lexicographic-minimum shortest path because extension preserves order
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (src,))]
    done: set[int] = set()
    best: dict[int, tuple[float, tuple[int, ...]]] = {src: (0.0, (src,))}
    while heap:
        d, seq = heapq.heappop(heap)
        u = seq[-1]
        if u in done:
            continue
        done.add(u)
        graph._sp_cache.setdefault((src, u), Path(seq, d))
        if u == dst:
            break
        for v, length in graph.adjacency[u]:
            if v in done:
                continue
            cand = (d + length, seq + (v,))
            old = best.get(v)
            if old is None or cand < old:
                best[v] = cand
                heapq.heappush(heap, cand)
    if dst not in done:
        raise UnreachableError(f"vertex {dst} unreachable from {src}")
    return graph._sp_cache[key]


def nearest_vertex(graph: RoadGraph, p: Point) -> int:
    best_id, best_d = 0, math.inf
    for vid, q in enumerate(graph.vertices):
        d = (q.x - p.x) ** 2 + (q.y - p.y) ** 2
        if d < best_d:
            best_id, best_d = vid, d
    return best_id


def path_points(graph: RoadGraph, vertices: Sequence[int]) -> list[Point]:
    return [graph.vertices[v] for v in vertices]
