"""Radio contacts and bandwidth-limited transfers.

Propagation is a binary disc: a pair is linked while its distance is within
the range of a profile both nodes carry. When several shared profiles are in
range the highest-rate one is used, so each pair has at most one link.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numba
import numpy as np

from .geo import Point


@dataclass(frozen=True)
class LinkProfile:
    name: str
    range: float  # m
    rate: float  # bit/s

    def __post_init__(self):
        if not (self.range > 0 and self.rate > 0):
            raise ValueError(f"link profile {self.name!r} needs positive range and rate")


ZIGBEE = LinkProfile("zigbee", 10.0, 250e3)
ITS_G5 = LinkProfile("itsg5", 300.0, 6e6)


@dataclass
class TransferJob:
    message_id: int
    sender: int
    receiver: int
    copies: int
    bits_remaining: float
    sort_key: tuple = ()


@dataclass(eq=False)
class ContactLink:
    link_id: int
    a: int  # lower node id
    b: int
    profile: LinkProfile
    established_at: float
    queue: deque = field(default_factory=deque)

    def other(self, node: int) -> int:
        return self.b if node == self.a else self.a


def transfer_time(size: int, profile: LinkProfile) -> float:
    if size <= 0:
        raise ValueError("message size must be positive")
    return 8 * size / profile.rate


def advance_transfers(link: ContactLink, dt: float) -> list[TransferJob]:
    """Drain the queue head-first at the link rate for ``dt`` seconds and
    return the jobs that finished. Unfinished bits carry over."""
    budget = link.profile.rate * dt
    done = []
    q = link.queue
    while q:
        job = q[0]
        if job.bits_remaining <= budget:
            budget -= job.bits_remaining
            job.bits_remaining = 0.0
            done.append(q.popleft())
        else:
            job.bits_remaining -= budget
            break
    return done


def on_link_down(link: ContactLink) -> list[TransferJob]:
    aborted = list(link.queue)
    link.queue.clear()
    return aborted


def pair_profile(ifaces_a: Iterable[LinkProfile], ifaces_b: Iterable[LinkProfile],
                 distance: float) -> LinkProfile | None:
    """Highest-rate shared profile whose range covers ``distance``."""
    names_b = {p.name for p in ifaces_b}
    best = None
    for p in ifaces_a:
        if p.name in names_b and distance <= p.range and (best is None or p.rate > best.rate):
            best = p
    return best


def detect_contacts(positions: Mapping[int, Point], interfaces: Mapping[int, Sequence[LinkProfile]],
                    current: Mapping[tuple[int, int], str] | None = None
                    ) -> tuple[dict[tuple[int, int], str], list[tuple[int, int, str]], list[tuple[int, int, str]]]:
    """Brute-force contact set over all pairs.

    Returns (links, created, torn_down) where ``links`` maps (lo, hi) to a
    profile name and ``current`` is the previous link set.
    """
    current = dict(current or {})
    ids = sorted(positions)
    links: dict[tuple[int, int], str] = {}
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            prof = pair_profile(interfaces.get(a, ()), interfaces.get(b, ()),
                                positions[a].dist(positions[b]))
            if prof is not None:
                links[(a, b)] = prof.name
    created, torn = [], []
    for key, name in current.items():
        if links.get(key) != name:
            torn.append((*key, name))
    for key, name in links.items():
        if current.get(key) != name:
            created.append((*key, name))
    return links, sorted(created), sorted(torn)


@numba.njit(cache=True)
def _scan(k_from, k_to, dt, kt, kx, ky, koff, ptr, px, py, mobile,
          node_pair_off, node_pairs, pair_a, pair_b, cand_off, cand, r2,
          state, moved, out_pair, out_old):
    """Sample positions at steps k_from..k_to and stop at the first step whose
    contact set differs from ``state``; returns (step, n_changes)."""
    n_changes = 0
    for k in range(k_from, k_to + 1):
        t = k * dt
        n_moved = 0
        for m in range(mobile.shape[0]):
            i = mobile[m]
            p = ptr[i]
            last = koff[i + 1] - 1
            while p < last and kt[p + 1] <= t:
                p += 1
            ptr[i] = p
            if p >= last:
                x, y = kx[p], ky[p]
            else:
                t0 = kt[p]
                t1 = kt[p + 1]
                f = (t - t0) / (t1 - t0)
                x = kx[p] + (kx[p + 1] - kx[p]) * f
                y = ky[p] + (ky[p + 1] - ky[p]) * f
            if x != px[i] or y != py[i]:
                px[i] = x
                py[i] = y
                moved[i] = k + 1
                n_moved += 1
        if n_moved:
            for m in range(mobile.shape[0]):
                i = mobile[m]
                if moved[i] != k + 1:
                    continue
                for q in range(node_pair_off[i], node_pair_off[i + 1]):
                    pr = node_pairs[q]
                    a = pair_a[pr]
                    b = pair_b[pr]
                    j = b if a == i else a
                    if moved[j] == k + 1 and j < i:
                        continue  # handled from j's side
                    dx = px[a] - px[b]
                    dy = py[a] - py[b]
                    d2 = dx * dx + dy * dy
                    new = -1
                    for c in range(cand_off[pr], cand_off[pr + 1]):
                        if d2 <= r2[cand[c]]:
                            new = cand[c]
                            break
                    if new != state[pr]:
                        out_pair[n_changes] = pr
                        out_old[n_changes] = state[pr]
                        state[pr] = new
                        n_changes += 1
        if n_changes or k == k_to:
            return k, n_changes
    return k_to, 0


class ContactScanner:
    """Bulk position sampling and incremental contact detection.

    Samples each node's trajectory at ``k * dt`` and checks only pairs with
    a moving endpoint. ``scan`` jumps over steps in which no contact changes,
    which is exact because nothing else in the world depends on positions.
    """

    def __init__(self, trajectories, interfaces: Sequence[Sequence[LinkProfile]], dt: float):
        n = len(trajectories)
        self.dt = float(dt)
        lens = [len(tr.t) for tr in trajectories]
        self.koff = np.zeros(n + 1, dtype=np.int64)
        self.koff[1:] = np.cumsum(lens)
        self.kt = np.concatenate([tr.t for tr in trajectories]).astype(np.float64)
        self.kx = np.concatenate([tr.x for tr in trajectories]).astype(np.float64)
        self.ky = np.concatenate([tr.y for tr in trajectories]).astype(np.float64)
        self.ptr = self.koff[:-1].copy()
        self.px = self.kx[self.koff[:-1]].copy()
        self.py = self.ky[self.koff[:-1]].copy()
        self.mobile = np.array([i for i in range(n) if lens[i] > 1], dtype=np.int64)

        profiles: dict[str, LinkProfile] = {}
        for ifs in interfaces:
            for p in ifs:
                if p.name in profiles and profiles[p.name] != p:
                    raise ValueError(f"conflicting definitions of link profile {p.name!r}")
                profiles[p.name] = p
        self.profiles = sorted(profiles.values(), key=lambda p: (-p.rate, p.name))
        index = {p.name: i for i, p in enumerate(self.profiles)}
        self.r2 = np.array([p.range * p.range for p in self.profiles], dtype=np.float64)

        is_mobile = np.zeros(n, dtype=bool)
        is_mobile[self.mobile] = True
        names = [{p.name for p in ifs} for ifs in interfaces]
        pa, pb, cand, cand_off = [], [], [], [0]
        static_pairs = []
        for a in range(n):
            for b in range(a + 1, n):
                shared = names[a] & names[b]
                if not shared:
                    continue
                ids = sorted(index[s] for s in shared)
                if is_mobile[a] or is_mobile[b]:
                    pa.append(a)
                    pb.append(b)
                    cand.extend(ids)
                    cand_off.append(len(cand))
                else:
                    static_pairs.append((a, b, ids))
        self.pair_a = np.array(pa, dtype=np.int64)
        self.pair_b = np.array(pb, dtype=np.int64)
        self.cand = np.array(cand, dtype=np.int64)
        self.cand_off = np.array(cand_off, dtype=np.int64)
        self.state = np.full(len(pa), -1, dtype=np.int64)
        per_node: list[list[int]] = [[] for _ in range(n)]
        for pr, (a, b) in enumerate(zip(pa, pb)):
            if is_mobile[a]:
                per_node[a].append(pr)
            if is_mobile[b]:
                per_node[b].append(pr)
        self.node_pair_off = np.zeros(n + 1, dtype=np.int64)
        self.node_pair_off[1:] = np.cumsum([len(x) for x in per_node])
        self.node_pairs = np.array([p for x in per_node for p in x], dtype=np.int64)
        self.moved = np.zeros(n, dtype=np.int64)
        self.out_pair = np.zeros(max(len(pa), 1), dtype=np.int64)
        self.out_old = np.zeros(max(len(pa), 1), dtype=np.int64)
        self._static = static_pairs
        self._started = False

    def _initial(self) -> list[tuple[int, int, LinkProfile | None, LinkProfile]]:
        """Contacts at step 0 including pairs that never move."""
        out = []
        px, py = self.px, self.py
        for a, b, ids in self._static:
            d2 = (px[a] - px[b]) ** 2 + (py[a] - py[b]) ** 2
            for c in ids:
                if d2 <= self.r2[c]:
                    out.append((a, b, None, self.profiles[c]))
                    break
        for pr in range(len(self.pair_a)):
            a, b = self.pair_a[pr], self.pair_b[pr]
            d2 = (px[a] - px[b]) ** 2 + (py[a] - py[b]) ** 2
            for c in self.cand[self.cand_off[pr]:self.cand_off[pr + 1]]:
                if d2 <= self.r2[c]:
                    self.state[pr] = c
                    out.append((int(a), int(b), None, self.profiles[c]))
                    break
        return out

    def scan(self, k_from: int, k_to: int) -> tuple[int, list[tuple[int, int, LinkProfile | None, LinkProfile | None]]]:
        """Advance to the first step in [k_from, k_to] with contact changes
        (or to k_to). Returns the step and its (a, b, old, new) changes."""
        if not self._started:
            self._started = True
            if k_from != 0:
                raise ValueError("first scan must start at step 0")
            return 0, self._initial()
        k, nch = _scan(k_from, k_to, self.dt, self.kt, self.kx, self.ky, self.koff, self.ptr,
                       self.px, self.py, self.mobile, self.node_pair_off, self.node_pairs,
                       self.pair_a, self.pair_b, self.cand_off, self.cand, self.r2,
                       self.state, self.moved, self.out_pair, self.out_old)
        changes = []
        for i in range(nch):
            pr = self.out_pair[i]
            old = self.out_old[i]
            new = self.state[pr]
            changes.append((int(self.pair_a[pr]), int(self.pair_b[pr]),
                            self.profiles[old] if old >= 0 else None,
                            self.profiles[new] if new >= 0 else None))
        changes.sort(key=lambda c: (c[0], c[1]))
        return int(k), changes

    def positions(self) -> list[Point]:
        return [Point(float(x), float(y)) for x, y in zip(self.px, self.py)]
