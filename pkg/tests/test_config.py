import pytest

from vdtnsim.config import KB, MB, ConfigError, ScenarioConfig, dump_scenario, load_scenario, parse_scenario
from vdtnsim.geo import Point
from vdtnsim.net import ITS_G5, ZIGBEE
from vdtnsim.routing import DirectDelivery, SprayAndWait


def test_defaults_match_reference_scenario():
    cfg = ScenarioConfig()
    assert cfg.duration == 43200 and cfg.warmup == 200 and cfg.step_dt == 1.0
    assert cfg.sensors.count == 37 and cfg.sensors.interval == 300 and cfg.sensors.window == 25200
    assert cfg.sensors.ttl == 18000 and cfg.sensors.message_size == 10 and cfg.sensors.buffer == 64 * KB
    assert cfg.cars.count == 3 and cfg.cars.buffer == 5 * MB
    assert cfg.buses.per_route == 2 and cfg.buses.buffer == 25 * MB
    assert cfg.pops.buffer == 100 * MB
    assert cfg.links == {"zigbee": ZIGBEE, "itsg5": ITS_G5}
    assert cfg.policy == SprayAndWait("binary", 6)
    assert cfg.land_area_km2 == 9.0


def test_empty_text_is_default():
    assert dump_scenario(parse_scenario("")) == dump_scenario(ScenarioConfig())


def test_roundtrip_default():
    cfg = ScenarioConfig()
    assert dump_scenario(parse_scenario(dump_scenario(cfg))) == dump_scenario(cfg)


def test_roundtrip_custom():
    cfg = ScenarioConfig(duration=3600.0, seed=9, policy=DirectDelivery()).with_(**{
        "cars.count": 12, "sensors.placements": [Point(0, 0), Point(500, 250.5)],
        "buses.routes": {"X": (0, 5, 9)}, "pops.vertices": [0, 9], "sensors.window": 1800.0})
    text = dump_scenario(cfg)
    again = parse_scenario(text)
    assert dump_scenario(again) == text
    assert again.sensors.placements == [Point(0, 0), Point(500, 250.5)]
    assert again.buses.routes == {"X": (0, 5, 9)}
    assert again.policy == DirectDelivery()


def test_parse_sections():
    cfg = parse_scenario("""
    # comment
    [scenario]
    seed = 4
    [cars]
    count = 90
    [links]
    itsg5 = 250 3e6
    [routing]
    policy = spray_and_wait
    mode = standard
    copies = 10
    """)
    assert cfg.seed == 4 and cfg.cars.count == 90
    assert cfg.links["itsg5"].range == 250 and cfg.links["itsg5"].rate == 3e6
    assert cfg.policy == SprayAndWait("standard", 10)


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[cars]\ncolour = red\n",
    "count = 3\n",
    "[cars]\ncount\n",
    "[cars]\ncount = many\n",
    "[routing]\npolicy = epidemic\ncopies = 3\n",
    "[routing]\npolicy = teleport\n",
    "[sensors]\ninterfaces = wifi\n",
    "[scenario]\nstep_dt = 0\n",
    "[scenario]\nduration = 3600\n",  # generation window no longer fits
])
def test_parse_errors(text):
    with pytest.raises((ConfigError, ValueError)):
        parse_scenario(text)


def test_relative_paths_resolve_against_file(tmp_path):
    (tmp_path / "s.scenario").write_text("[map]\nfile = roads.map\nroutes_file = /abs/routes.txt\n")
    cfg = load_scenario(str(tmp_path / "s.scenario"))
    assert cfg.map_file == str(tmp_path / "roads.map")
    assert cfg.routes_file == "/abs/routes.txt"


def test_with_does_not_mutate():
    base = ScenarioConfig()
    other = base.with_(seed=3, **{"cars.count": 50})
    assert base.seed == 1 and base.cars.count == 3
    assert other.seed == 3 and other.cars.count == 50
