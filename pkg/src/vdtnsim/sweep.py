"""Density sweeps: every (policy, car count, seed) combination of a base
scenario, run in a process pool and aggregated across seeds."""
from __future__ import annotations

import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

from .config import ConfigError, ScenarioConfig, dump_scenario, load_scenario
from .engine import Simulation, build_world
from .metrics import AggregateRow, KpiReport, RunKey, kpi_report, sweep_aggregate
from .routing import parse_policy, policy_label

DEFAULT_CARS = (3, 6, 9, 18, 36, 54, 72, 90)
DEFAULT_POLICIES = ("direct_delivery", "first_contact", "epidemic", "spray_and_wait:binary:6")


@dataclass(frozen=True)
class SweepSpec:
    scenario: Optional[str]  # None: built-in defaults
    cars: tuple[int, ...] = DEFAULT_CARS
    policies: tuple[str, ...] = DEFAULT_POLICIES
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    workers: Optional[int] = None  # None: one per available core

    def __post_init__(self):
        for name in ("cars", "policies", "seeds"):
            values = getattr(self, name)
            if not values:
                raise ConfigError(f"sweep needs at least one entry in {name}")
            if len(set(values)) != len(values):
                raise ConfigError(f"sweep lists a duplicate in {name}: {list(values)}")
        if any(c < 0 for c in self.cars):
            raise ConfigError("car counts must be non-negative")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be at least 1")
        # normalise policy names to their labels so duplicates are caught
        labels = tuple(policy_label(parse_policy(p)) for p in self.policies)
        if len(set(labels)) != len(labels):
            raise ConfigError(f"sweep lists a duplicate policy: {list(labels)}")
        object.__setattr__(self, "policies", labels)

    def keys(self) -> list[RunKey]:
        return [RunKey(p, c, s) for p in self.policies for c in self.cars for s in self.seeds]


def parse_sweep(text: str, base_dir: str = ".") -> SweepSpec:
    """``[sweep]`` section with ``scenario``, ``cars``, ``policies``,
    ``seeds`` and ``workers``; lists are whitespace separated."""
    fields: dict[str, str] = {}
    in_section = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line.lower() != "[sweep]":
                raise ConfigError(f"line {lineno}: unknown section {line}")
            in_section = True
            continue
        if not in_section or "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value inside [sweep]")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in ("scenario", "cars", "policies", "seeds", "workers"):
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in fields:
            raise ConfigError(f"line {lineno}: {key!r} given twice")
        fields[key] = value
    try:
        scenario = fields.get("scenario")
        if scenario and not os.path.isabs(scenario):
            scenario = os.path.join(base_dir, scenario)
        kw = {}
        if "cars" in fields:
            kw["cars"] = tuple(int(v) for v in fields["cars"].split())
        if "policies" in fields:
            kw["policies"] = tuple(fields["policies"].split())
        if "seeds" in fields:
            kw["seeds"] = tuple(int(v) for v in fields["seeds"].split())
        if "workers" in fields:
            kw["workers"] = int(fields["workers"])
        return SweepSpec(scenario, **kw)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_sweep(path: str) -> SweepSpec:
    with open(path) as fh:
        return parse_sweep(fh.read(), os.path.dirname(os.path.abspath(path)))


def configure(base: ScenarioConfig, key: RunKey) -> ScenarioConfig:
    cfg = base.with_(policy=parse_policy(key.policy), seed=key.seed, **{"cars.count": key.cars})
    cfg.validate()
    return cfg


def run_one(base: ScenarioConfig, key: RunKey) -> KpiReport:
    return kpi_report(Simulation(build_world(configure(base, key))).run())


def _fingerprint(base: ScenarioConfig) -> str:
    # everything except the swept fields
    return dump_scenario(base.with_(seed=0, **{"cars.count": 0}))


def _worker(args):
    base, key = args
    try:
        return key, run_one(base, key), None
    except Exception:  # reported per combination, never fatal to the sweep
        return key, None, traceback.format_exc(limit=3)


@dataclass
class SweepResult:
    rows: list[AggregateRow]
    reports: dict[RunKey, KpiReport]
    failures: dict[RunKey, str]


def run_sweep(spec: SweepSpec, base: Optional[ScenarioConfig] = None, workers: Optional[int] = None,
              progress: Optional[Callable[[RunKey, Optional[KpiReport]], None]] = None) -> SweepResult:
    """Run every combination; failed runs are collected, not raised.

    Results are aggregated in (policy, cars, seed) order whatever order the
    pool finishes in, so the worker count cannot change the output.
    """
    if base is None:
        base = load_scenario(spec.scenario) if spec.scenario else ScenarioConfig()
    base.validate()
    n = workers or spec.workers or os.cpu_count() or 1
    jobs = [(base, key) for key in spec.keys()]
    results: dict[RunKey, KpiReport] = {}
    failures: dict[RunKey, str] = {}
    if n == 1:
        outcomes = map(_worker, jobs)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=min(n, len(jobs)))
        # longest runs first keeps the pool busy at the end
        order = sorted(jobs, key=lambda j: (j[1].policy != "epidemic", -j[1].cars))
        outcomes = pool.map(_worker, order)
    try:
        for key, rep, err in outcomes:
            if err is None:
                results[key] = rep
            else:
                failures[key] = err
            if progress:
                progress(key, rep)
    finally:
        if pool is not None:
            pool.shutdown()
    ordered = {k: results[k] for k in spec.keys() if k in results}
    fp = _fingerprint(base)
    rows = sweep_aggregate(ordered, base.land_area_km2, {k: fp for k in ordered})
    return SweepResult(rows, ordered, {k: failures[k] for k in spec.keys() if k in failures})
