"""Demand schedules: piecewise-constant arrival rates per approach."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

APPROACHES = ("N", "S", "W", "E")

# Hourly through-volumes (vph) at Douglas Ave & 70th St, Des Moines.
HOURLY_DEMAND = {
    "0700": (195, 178, 430, 566),
    "0800": (133, 104, 331, 412),
    "1100": (88, 99, 527, 545),
    "1200": (104, 86, 587, 412),
    "1500": (137, 143, 589, 598),
    "1600": (153, 185, 766, 690),
    "1700": (185, 225, 862, 699),
}

PEAK_ROWS = {
    "morning": ("0700", "0800"),
    "midday": ("1100", "1200"),
    "evening": ("1500", "1600", "1700"),
}

TRAINING_RATE_RANGE = (135.0, 2400.0)


@dataclass
class DemandSchedule:
    """Sorted list of ``(start_time_s, (rate_N, rate_S, rate_W, rate_E))`` entries.

    The rate tuple of an entry applies from its start time until the next
    entry begins; the first entry also covers any earlier time.
    """

    entries: list[tuple[float, tuple[float, float, float, float]]] = field(default_factory=list)

    def __post_init__(self):
        self.entries = [(float(t), tuple(float(r) for r in rates)) for t, rates in self.entries]
        if not self.entries:
            raise ValueError("demand schedule needs at least one entry")
        starts = [t for t, _ in self.entries]
        if starts != sorted(starts):
            raise ValueError("demand entries must be sorted by start_time")
        for _, rates in self.entries:
            if len(rates) != 4:
                raise ValueError("each entry needs four approach rates (N, S, W, E)")
            if any(r < 0 or not np.isfinite(r) for r in rates):
                raise ValueError("arrival rates must be finite and non-negative")
        self._starts = starts

    def rates_at(self, t: float) -> tuple[float, float, float, float]:
        idx = 0
        for i, start in enumerate(self._starts):
            if start <= t:
                idx = i
            else:
                break
        return self.entries[idx][1]

    @classmethod
    def constant(cls, rates) -> "DemandSchedule":
        return cls([(0.0, tuple(rates))])

    @classmethod
    def from_rows(cls, rows, row_duration: float = 3600.0) -> "DemandSchedule":
        """Stitch hourly demand rows (e.g. ``("1500", "1600")``) into consecutive hours."""
        return cls([(i * row_duration, HOURLY_DEMAND[r]) for i, r in enumerate(rows)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["start_time_s", "rate_N", "rate_S", "rate_W", "rate_E"])
            for t, rates in self.entries:
                writer.writerow([_fmt(t), *(_fmt(r) for r in rates)])

    @classmethod
    def from_csv(cls, path) -> "DemandSchedule":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            required = {"start_time_s", "rate_N", "rate_S", "rate_W", "rate_E"}
            if reader.fieldnames is None or not required <= set(reader.fieldnames):
                raise ValueError(f"{path}: demand CSV needs columns {sorted(required)}")
            entries = [
                (float(row["start_time_s"]),
                 tuple(float(row[f"rate_{a}"]) for a in APPROACHES))
                for row in reader
            ]
        return cls(entries)


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def scenario_demand(name: str) -> tuple[DemandSchedule, float]:
    """Return ``(schedule, duration_s)`` for a named peak or a demand CSV path."""
    if name in PEAK_ROWS:
        rows = PEAK_ROWS[name]
        return DemandSchedule.from_rows(rows), 3600.0 * len(rows)
    if name == "zero":
        return DemandSchedule.constant((0, 0, 0, 0)), 3600.0
    path = Path(name)
    if path.exists():
        schedule = DemandSchedule.from_csv(path)
        return schedule, schedule.entries[-1][0] + 3600.0
    raise ValueError(f"unknown scenario {name!r}; expected one of "
                     f"{sorted(PEAK_ROWS)} or 'zero' or a demand CSV path")


def sample_training_demand(rng: np.random.Generator,
                           low: float = TRAINING_RATE_RANGE[0],
                           high: float = TRAINING_RATE_RANGE[1]) -> DemandSchedule:
    """Draw each approach rate independently and uniformly from ``[low, high]``."""
    if low > high:
        raise ValueError("low must not exceed high")
    if low == high:
        return DemandSchedule.constant((low,) * 4)
    rates = rng.uniform(low, high, size=4)
    return DemandSchedule.constant(tuple(float(r) for r in rates))
