"""Deterministic vehicular DTN simulator for sensor data collection."""
from .config import ScenarioConfig, load_scenario, parse_scenario
from .engine import Simulation, World, build_world, run
from .metrics import EventLog, KpiReport, kpi_report

__all__ = ["ScenarioConfig", "load_scenario", "parse_scenario", "Simulation", "World", "build_world",
           "run", "EventLog", "KpiReport", "kpi_report"]
