"""Scenario configuration and the bracketed ``key = value`` scenario file.

Defaults reproduce the reference data-collection scenario: a 7x9 grid at
500 m, 37 sensors, 5 PoPs, two bus routes with two buses each, 12 h runs.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Optional

from .geo import Point
from .net import ITS_G5, ZIGBEE, LinkProfile
from .routing import RoutingPolicy, SprayAndWait, parse_policy, policy_label

KB = 1024
MB = 1024 * 1024


class ConfigError(ValueError):
    pass


@dataclass
class SensorConfig:
    count: int = 37
    spacing: float = 500.0  # nominal lattice spacing, m
    placements: Optional[list[Point]] = None  # overrides the lattice
    interval: float = 300.0
    window: float = 7 * 3600.0
    message_size: int = 10
    ttl: float = 5 * 3600.0
    buffer: int = 64 * KB
    interfaces: tuple[str, ...] = ("zigbee",)


@dataclass
class CarConfig:
    count: int = 3
    speed_min_kmh: float = 10.0
    speed_max_kmh: float = 50.0
    pause_min: float = 60.0
    pause_max: float = 120 * 60.0
    buffer: int = 5 * MB
    interfaces: tuple[str, ...] = ("zigbee", "itsg5")


@dataclass
class BusConfig:
    per_route: int = 2
    speed_min_kmh: float = 10.0
    speed_max_kmh: float = 30.0
    pause_min: float = 10.0
    pause_max: float = 20.0
    buffer: int = 25 * MB
    interfaces: tuple[str, ...] = ("zigbee", "itsg5")
    routes: Optional[dict[str, tuple[int, ...]]] = None  # None: file or grid default


@dataclass
class PopConfig:
    vertices: Optional[list[int]] = None  # None: central vertex + route termini
    buffer: int = 100 * MB
    interfaces: tuple[str, ...] = ("itsg5",)


@dataclass
class ScenarioConfig:
    duration: float = 12 * 3600.0
    warmup: float = 200.0
    step_dt: float = 1.0
    seed: int = 1
    land_area_km2: float = 9.0
    map_file: Optional[str] = None
    routes_file: Optional[str] = None
    grid_rows: int = 7
    grid_cols: int = 9
    grid_spacing: float = 500.0
    sensors: SensorConfig = field(default_factory=SensorConfig)
    cars: CarConfig = field(default_factory=CarConfig)
    buses: BusConfig = field(default_factory=BusConfig)
    pops: PopConfig = field(default_factory=PopConfig)
    links: dict[str, LinkProfile] = field(default_factory=lambda: {"zigbee": ZIGBEE, "itsg5": ITS_G5})
    policy: RoutingPolicy = field(default_factory=SprayAndWait)

    def validate(self) -> None:
        if not self.step_dt > 0:
            raise ConfigError("step_dt must be positive")
        if self.duration < 0:
            raise ConfigError("duration must be non-negative")
        if self.duration > 0 and not self.warmup < self.duration:
            raise ConfigError("warmup must be shorter than the simulation")
        if self.duration > 0 and self.sensors.window > self.duration - self.warmup:
            raise ConfigError("generation window exceeds duration - warmup")
        if self.sensors.interval <= 0:
            raise ConfigError("generation interval must be positive")
        if self.cars.count < 0 or self.sensors.count < 0 or self.buses.per_route < 0:
            raise ConfigError("node counts must be non-negative")
        if self.land_area_km2 <= 0:
            raise ConfigError("land area must be positive")
        for role in (self.sensors, self.cars, self.buses, self.pops):
            for name in role.interfaces:
                if name not in self.links:
                    raise ConfigError(f"unknown link profile {name!r}")

    def with_(self, **changes) -> "ScenarioConfig":
        """Copy with top-level or dotted (``cars.count``) overrides."""
        cfg = dataclasses.replace(self)
        for key, value in changes.items():
            if "." in key:
                section, attr = key.split(".", 1)
                sub = dataclasses.replace(getattr(cfg, section), **{attr: value})
                setattr(cfg, section, sub)
            else:
                setattr(cfg, key, value)
        return cfg


_SECTIONS = {
    "scenario": ("duration", "warmup", "step_dt", "seed", "land_area_km2"),
    "map": ("file", "routes_file", "grid_rows", "grid_cols", "grid_spacing"),
    "sensors": tuple(f.name for f in dataclasses.fields(SensorConfig)),
    "cars": tuple(f.name for f in dataclasses.fields(CarConfig)),
    "buses": tuple(f.name for f in dataclasses.fields(BusConfig) if f.name != "routes"),
    "pops": tuple(f.name for f in dataclasses.fields(PopConfig)),
    "routing": ("policy", "mode", "copies"),
}


def _points(text: str) -> list[Point]:
    out = []
    for tok in text.split():
        x, y = tok.split(",")
        out.append(Point(float(x), float(y)))
    return out


def _convert(obj, name: str, raw: str):
    current = getattr(obj, name)
    ftype = {f.name: f.type for f in dataclasses.fields(obj)}[name]
    if name == "placements":
        return _points(raw)
    if name == "vertices":
        return [int(v) for v in raw.split()]
    if name == "interfaces":
        return tuple(raw.replace(",", " ").split())
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(current, int) or "int" in str(ftype):
        return int(raw)
    return float(raw)


def parse_scenario(text: str, base_dir: str = ".") -> ScenarioConfig:
    """Parse scenario text. Relative paths resolve against ``base_dir``."""
    cfg = ScenarioConfig()
    section = None
    routing = {}
    routes: dict[str, tuple[int, ...]] = {}
    links = dict(cfg.links)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS and section != "links":
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside of a section")
        raw_key, value = (s.strip() for s in line.split("=", 1))
        key = raw_key.lower()
        try:
            if section == "links":
                rng, rate = value.split()
                links[key] = LinkProfile(key, float(rng), float(rate))
            elif section == "buses" and key.startswith("route."):
                routes[raw_key[len("route."):]] = tuple(int(v) for v in value.split())
            elif key not in _SECTIONS[section]:
                raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
            elif section == "scenario":
                setattr(cfg, key, int(value) if key == "seed" else float(value))
            elif section == "map":
                if key in ("file", "routes_file"):
                    path = value if os.path.isabs(value) else os.path.join(base_dir, value)
                    setattr(cfg, "map_file" if key == "file" else "routes_file", path)
                else:
                    setattr(cfg, key, float(value) if key == "grid_spacing" else int(value))
            elif section == "routing":
                routing[key] = value
            else:
                sub = getattr(cfg, section)
                setattr(sub, key, _convert(sub, key, value))
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    if routes:
        cfg.buses.routes = routes
    cfg.links = links
    if routing:
        name = routing.get("policy", "spray_and_wait")
        if name == "spray_and_wait":
            name = f"spray_and_wait:{routing.get('mode', 'binary')}:{routing.get('copies', 6)}"
        elif "mode" in routing or "copies" in routing:
            raise ConfigError("mode/copies apply to spray_and_wait only")
        cfg.policy = parse_policy(name)
    cfg.validate()
    return cfg


def load_scenario(path: str) -> ScenarioConfig:
    with open(path) as fh:
        text = fh.read()
    return parse_scenario(text, os.path.dirname(os.path.abspath(path)))


def _fmt(v) -> str:
    if isinstance(v, float) and v == int(v):
        return str(int(v))
    return str(v)


def dump_scenario(cfg: ScenarioConfig) -> str:
    lines = ["[scenario]"]
    for k in _SECTIONS["scenario"]:
        lines.append(f"{k} = {_fmt(getattr(cfg, k))}")
    lines.append("")
    lines.append("[map]")
    if cfg.map_file:
        lines.append(f"file = {cfg.map_file}")
    else:
        lines += [f"grid_rows = {cfg.grid_rows}", f"grid_cols = {cfg.grid_cols}",
                  f"grid_spacing = {_fmt(cfg.grid_spacing)}"]
    if cfg.routes_file:
        lines.append(f"routes_file = {cfg.routes_file}")
    for section in ("sensors", "cars", "buses", "pops"):
        sub = getattr(cfg, section)
        lines += ["", f"[{section}]"]
        for k in _SECTIONS[section]:
            v = getattr(sub, k)
            if v is None:
                continue
            if k == "placements":
                v = " ".join(f"{_fmt(p.x)},{_fmt(p.y)}" for p in v)
            elif k == "vertices":
                v = " ".join(map(str, v))
            elif k == "interfaces":
                v = " ".join(v)
            else:
                v = _fmt(v)
            lines.append(f"{k} = {v}")
        if section == "buses" and sub.routes:
            for name, stops in sub.routes.items():
                lines.append(f"route.{name} = {' '.join(map(str, stops))}")
    lines += ["", "[links]"]
    for name, p in cfg.links.items():
        lines.append(f"{name} = {_fmt(p.range)} {_fmt(p.rate)}")
    lines += ["", "[routing]"]
    label = policy_label(cfg.policy).split(":")
    lines.append(f"policy = {label[0]}")
    if len(label) == 3:
        lines += [f"mode = {label[1]}", f"copies = {label[2]}"]
    return "\n".join(lines) + "\n"
