"""Event log, the three KPIs, and sweep aggregation."""
from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

KINDS = ("generated", "transfer_started", "transfer_completed", "transfer_aborted",
         "rejected_duplicate", "rejected_buffer", "dropped_ttl", "delivered")
HEADER = "time\tkind\tmessage\tfrom\tto"


class EventRecord(NamedTuple):
    time: float
    kind: str
    message: int
    src: int
    dst: int = -1  # -1 where not applicable


def _fmt_node(n: int) -> str:
    return "-" if n < 0 else str(n)


class EventLog:
    """Append-only list of EventRecords in emission order."""

    def __init__(self, records: Optional[list[EventRecord]] = None):
        self.records: list[EventRecord] = records if records is not None else []

    def append(self, time: float, kind: str, message: int, src: int, dst: int = -1) -> None:
        self.records.append(EventRecord(time, kind, message, src, dst))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def of_kind(self, kind: str) -> list[EventRecord]:
        return [r for r in self.records if r.kind == kind]

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(HEADER + "\n")
        for r in self.records:
            out.write(f"{r.time:.6f}\t{r.kind}\t{r.message}\t{_fmt_node(r.src)}\t{_fmt_node(r.dst)}\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "EventLog":
        lines = text.splitlines()
        if not lines or lines[0] != HEADER:
            raise ValueError("event log is missing its header line")
        recs = []
        for line in lines[1:]:
            t, kind, mid, src, dst = line.split("\t")
            recs.append(EventRecord(float(t), kind, int(mid),
                                    -1 if src == "-" else int(src), -1 if dst == "-" else int(dst)))
        return cls(recs)


class NoGenerationError(ValueError):
    pass


class MismatchedConfigError(ValueError):
    pass


def _delivery_times(log: EventLog) -> tuple[dict[int, float], dict[int, float]]:
    created, delivered = {}, {}
    for r in log.records:
        if r.kind == "generated":
            created[r.message] = r.time
        elif r.kind == "delivered":
            delivered.setdefault(r.message, r.time)
    return created, delivered


def delivery_probability(log: EventLog) -> float:
    created, delivered = _delivery_times(log)
    if not created:
        raise NoGenerationError("no messages were generated")
    return len(delivered) / len(created)


def average_latency(log: EventLog) -> Optional[float]:
    """Mean creation-to-delivery time in seconds; None if nothing was delivered."""
    created, delivered = _delivery_times(log)
    if not delivered:
        return None
    return math.fsum(t - created[m] for m, t in delivered.items()) / len(delivered)


def overhead_ratio(log: EventLog) -> Optional[float]:
    """(transmitted - delivered) / delivered over every completed hop."""
    _, delivered = _delivery_times(log)
    n = len(delivered)
    if n == 0:
        return None
    t = sum(1 for r in log.records if r.kind == "transfer_completed")
    return (t - n) / n


@dataclass(frozen=True)
class KpiReport:
    generated: int
    delivered: int
    transmitted: int
    delivery_probability: float
    average_latency: Optional[float]
    overhead_ratio: Optional[float]


def kpi_report(log: EventLog) -> KpiReport:
    created, delivered = _delivery_times(log)
    n = len(delivered)
    t = sum(1 for r in log.records if r.kind == "transfer_completed")
    return KpiReport(
        generated=len(created),
        delivered=n,
        transmitted=t,
        delivery_probability=n / len(created) if created else 0.0,
        average_latency=(math.fsum(tm - created[m] for m, tm in delivered.items()) / n) if n else None,
        overhead_ratio=(t - n) / n if n else None,
    )


def classify_messages(log: EventLog, alive: Iterable[int] = (), in_flight: Iterable[int] = ()) -> dict[int, str]:
    """Final fate of every generated message: delivered, alive, in_flight,
    dropped (TTL) or gone, checked in that order."""
    alive, in_flight = set(alive), set(in_flight)
    created, delivered = _delivery_times(log)
    dropped = {r.message for r in log.records if r.kind == "dropped_ttl"}
    fate = {}
    for m in created:
        if m in delivered:
            fate[m] = "delivered"
        elif m in alive:
            fate[m] = "alive"
        elif m in in_flight:
            fate[m] = "in_flight"
        elif m in dropped:
            fate[m] = "dropped"
        else:
            fate[m] = "gone"
    return fate


@dataclass(frozen=True)
class RunKey:
    policy: str  # policy label, e.g. spray_and_wait:binary:6
    cars: int
    seed: int


CSV_COLUMNS = ("policy", "mode", "L", "cars", "density_per_km2", "seed_count", "dp_mean", "dp_std",
               "al_minutes_mean", "al_minutes_std", "or_mean", "or_std", "generated",
               "delivered_mean", "transmitted_mean")


@dataclass
class AggregateRow:
    policy: str
    mode: Optional[str]
    copies: Optional[int]
    cars: int
    density_per_km2: float
    seed_count: int
    dp_mean: float
    dp_std: float
    al_minutes_mean: Optional[float]
    al_minutes_std: Optional[float]
    or_mean: Optional[float]
    or_std: Optional[float]
    generated: int
    delivered_mean: float
    transmitted_mean: float


def _mean_std(values: Sequence[Optional[float]]) -> tuple[Optional[float], Optional[float]]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    mean = math.fsum(vals) / len(vals)
    std = statistics.stdev(vals) if len(vals) > 1 else 0.0
    return mean, std


def sweep_aggregate(reports: dict[RunKey, KpiReport], land_area_km2: float,
                    fingerprints: Optional[dict[RunKey, object]] = None) -> list[AggregateRow]:
    """Mean and sample std of per-run KPIs across seeds for each
    (policy, car count). ``fingerprints`` identify the rest of each run's
    configuration; they must all agree."""
    if fingerprints:
        distinct = set(fingerprints.values())
        if len(distinct) > 1:
            raise MismatchedConfigError(f"runs differ beyond policy/cars/seed: {len(distinct)} variants")
    groups: dict[tuple[str, int], list[tuple[int, KpiReport]]] = {}
    for key, rep in reports.items():
        groups.setdefault((key.policy, key.cars), []).append((key.seed, rep))
    rows = []
    for (policy, cars) in sorted(groups, key=lambda g: (g[0], g[1])):
        reps = [r for _, r in sorted(groups[(policy, cars)], key=lambda sr: sr[0])]
        gens = {r.generated for r in reps}
        if len(gens) > 1:
            raise MismatchedConfigError(f"{policy}/{cars}: generated counts differ {sorted(gens)}")
        dp_m, dp_s = _mean_std([r.delivery_probability for r in reps])
        al_m, al_s = _mean_std([r.average_latency / 60.0 if r.average_latency is not None else None for r in reps])
        or_m, or_s = _mean_std([r.overhead_ratio for r in reps])
        parts = policy.split(":")
        rows.append(AggregateRow(
            policy=parts[0],
            mode=parts[1] if len(parts) > 1 else None,
            copies=int(parts[2]) if len(parts) > 2 else None,
            cars=cars,
            density_per_km2=cars / land_area_km2,
            seed_count=len(reps),
            dp_mean=dp_m, dp_std=dp_s,
            al_minutes_mean=al_m, al_minutes_std=al_s,
            or_mean=or_m, or_std=or_s,
            generated=reps[0].generated,
            delivered_mean=math.fsum(r.delivered for r in reps) / len(reps),
            transmitted_mean=math.fsum(r.transmitted for r in reps) / len(reps),
        ))
    return rows


def _cell(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def rows_to_csv(rows: Sequence[AggregateRow]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_cell(v) for v in (r.policy, r.mode, r.copies, r.cars, r.density_per_km2, r.seed_count,
                                       r.dp_mean, r.dp_std, r.al_minutes_mean, r.al_minutes_std,
                                       r.or_mean, r.or_std, r.generated, r.delivered_mean,
                                       r.transmitted_mean)])
    return out.getvalue()


def read_results_csv(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))
