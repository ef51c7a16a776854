import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vdtnsim.geo import Point, generate_grid_map
from vdtnsim.mobility import KMH, MapRandomWaypoint, Stationary, build_trajectory, node_rng
from vdtnsim.net import (ITS_G5, ZIGBEE, ContactLink, ContactScanner, LinkProfile, TransferJob,
                         advance_transfers, detect_contacts, on_link_down, pair_profile, transfer_time)


def test_transfer_times():
    assert transfer_time(10, ZIGBEE) == pytest.approx(0.00032)
    assert transfer_time(10, ITS_G5) == pytest.approx(1.333e-5, rel=1e-3)
    with pytest.raises(ValueError):
        transfer_time(0, ZIGBEE)


def test_profile_validation():
    with pytest.raises(ValueError):
        LinkProfile("x", 0, 1)
    with pytest.raises(ValueError):
        LinkProfile("x", 1, -1)


def _job(mid, bits):
    return TransferJob(mid, 1, 2, 1, float(bits))


def test_advance_transfers_drains_in_order():
    link = ContactLink(0, 1, 2, LinkProfile("t", 10, 100.0), 0.0)
    link.queue.extend([_job(1, 80), _job(2, 80), _job(3, 80)])
    assert [j.message_id for j in advance_transfers(link, 1.0)] == [1]
    assert link.queue[0].bits_remaining == pytest.approx(60)
    assert [j.message_id for j in advance_transfers(link, 1.0)] == [2]
    assert [j.message_id for j in advance_transfers(link, 1.0)] == [3]
    assert not link.queue


def test_many_small_jobs_per_step():
    link = ContactLink(0, 1, 2, ZIGBEE, 0.0)
    link.queue.extend([_job(m, 80) for m in range(10_000)])
    done = advance_transfers(link, 1.0)
    # 250 kbit/s moves 3125 10-byte messages per second
    assert len(done) == 3125


def test_link_down_returns_queue():
    link = ContactLink(0, 1, 2, ZIGBEE, 0.0)
    link.queue.extend([_job(1, 80), _job(2, 80)])
    aborted = on_link_down(link)
    assert [j.message_id for j in aborted] == [1, 2]
    assert not link.queue


def test_pair_profile_prefers_faster():
    both = (ZIGBEE, ITS_G5)
    assert pair_profile(both, both, 5.0) is ITS_G5
    assert pair_profile(both, (ZIGBEE,), 5.0) is ZIGBEE
    assert pair_profile(both, (ZIGBEE,), 10.0) is ZIGBEE  # range is inclusive
    assert pair_profile(both, (ZIGBEE,), 10.01) is None
    assert pair_profile(both, both, 300.0) is ITS_G5
    assert pair_profile(both, both, 300.5) is None


def test_detect_contacts_spec_examples():
    positions = {0: Point(0, 0), 1: Point(9, 0)}
    ifaces = {0: (ZIGBEE,), 1: (ZIGBEE, ITS_G5)}
    links, created, torn = detect_contacts(positions, ifaces)
    assert links == {(0, 1): "zigbee"} and created == [(0, 1, "zigbee")] and torn == []
    positions[1] = Point(11, 0)
    links, created, torn = detect_contacts(positions, ifaces, links)
    assert links == {} and torn == [(0, 1, "zigbee")]
    # vehicles 250 m apart share ITS-G5 only
    links, _, _ = detect_contacts({2: Point(0, 0), 3: Point(250, 0)},
                                  {2: (ZIGBEE, ITS_G5), 3: (ZIGBEE, ITS_G5)})
    assert links == {(2, 3): "itsg5"}


def _scan_all(scanner, steps):
    """Replay the scanner to a per-step link map."""
    k, changes = scanner.scan(0, 0)
    assert k == 0
    state = {}
    history = {}
    for a, b, old, new in changes:
        state[(a, b)] = new.name
    history[0] = dict(state)
    k = 1
    while k < steps:
        kk, changes = scanner.scan(k, steps - 1)
        for step in range(k, kk):
            history[step] = dict(state)
        for a, b, old, new in changes:
            assert state.get((a, b)) == (old.name if old else None)
            if new is None:
                del state[(a, b)]
            else:
                state[(a, b)] = new.name
        history[kk] = dict(state)
        k = kk + 1
    return history


@pytest.mark.parametrize("seed", [1, 2])
def test_scanner_matches_brute_force(seed):
    g = generate_grid_map(3, 3, 100)
    rnd = random.Random(seed)
    models = [Stationary(Point(rnd.uniform(0, 200), rnd.uniform(0, 200))) for _ in range(3)]
    models += [MapRandomWaypoint(5, 15, 0, 5) for _ in range(4)]
    ifaces = [(ZIGBEE,)] * 3 + [(ZIGBEE, LinkProfile("wide", 60, 1e6))] * 4
    dt, steps = 0.5, 1200
    trajs = [build_trajectory(m, g, node_rng(seed, i), steps * dt) for i, m in enumerate(models)]
    scanner = ContactScanner(trajs, ifaces, dt)
    history = _scan_all(scanner, steps)
    prev = {}
    for k in range(steps):
        pos = {i: tr.position(k * dt) for i, tr in enumerate(trajs)}
        links, _, _ = detect_contacts(pos, dict(enumerate(ifaces)), prev)
        assert history[k] == links, k
        prev = links


def test_scanner_positions_match_samples():
    g = generate_grid_map(4, 4, 250)
    trajs = [build_trajectory(MapRandomWaypoint(3 * KMH, 40 * KMH, 0, 60), g, node_rng(3, i), 3600)
             for i in range(5)]
    sc = ContactScanner(trajs, [(ITS_G5,)] * 5, 1.0)
    sc.scan(0, 0)
    k, _ = sc.scan(1, 1000)
    for tr, p in zip(trajs, sc.positions()):
        q = tr.position(k * 1.0)
        assert math.isclose(p.x, q.x, abs_tol=1e-6) and math.isclose(p.y, q.y, abs_tol=1e-6)


def test_scanner_first_scan_must_start_at_zero():
    trajs = [build_trajectory(Stationary(Point(0, 0)), generate_grid_map(2, 2, 10), node_rng(1, 0), 10)]
    sc = ContactScanner(trajs, [(ZIGBEE,)], 1.0)
    with pytest.raises(ValueError):
        sc.scan(3, 5)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 50), st.floats(0, 50)), min_size=2, max_size=8))
def test_detect_contacts_symmetric_and_disc(points):
    pos = {i: Point(x, y) for i, (x, y) in enumerate(points)}
    ifaces = {i: (ZIGBEE,) for i in pos}
    links, created, torn = detect_contacts(pos, ifaces)
    for a in pos:
        for b in pos:
            if a < b:
                assert ((a, b) in links) == (pos[a].dist(pos[b]) <= ZIGBEE.range)
    assert sorted(created) == sorted((a, b, n) for (a, b), n in links.items())
