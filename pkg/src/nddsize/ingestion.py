"""Reading driving logs and cutting them into car-following events."""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

COLUMNS = ("timestamp", "driver_id", "trip_id", "v_e", "a_e",
           "delta_v", "delta_d", "lane_change", "cut_in")
NUMERIC = ("timestamp", "v_e", "a_e", "delta_v", "delta_d")
VARIABLES = ("v_e", "a_e", "delta_v", "delta_d")
_TRUE = {"1", "true", "t", "yes"}
_FALSE = {"0", "false", "f", "no", ""}


class ConfigurationError(ValueError):
    """Bad column mapping, unknown variable name and the like."""


@dataclass(frozen=True, slots=True)
class SampleRecord:
    timestamp: float
    v_e: float
    a_e: float
    delta_v: float | None
    delta_d: float | None
    lane_change: bool = False
    cut_in: bool = False
    driver_id: str = ""
    trip_id: str = ""

    @property
    def has_target(self) -> bool:
        return self.delta_d is not None


@dataclass(frozen=True, slots=True)
class RowError:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


@dataclass
class ParsedLog:
    records: list[SampleRecord]
    errors: list[RowError] = field(default_factory=list)

    @property
    def n_errors(self) -> int:
        return len(self.errors)


@dataclass(frozen=True)
class ScenarioRules:
    max_distance: float = 120.0
    min_speed: float = 5.0
    min_duration: float = 30.0
    min_events_per_driver: int = 300
    rate_hz: float = 10.0

    def accepts(self, r: SampleRecord) -> bool:
        # v_e strictly above min_speed; delta_d inclusive of max_distance
        return (
            r.delta_d is not None
            and 0.0 <= r.delta_d <= self.max_distance
            and r.v_e > self.min_speed
            and not r.lane_change
            and not r.cut_in
        )


@dataclass(frozen=True)
class CarFollowingEvent:
    driver_id: str
    trip_id: str
    samples: tuple[SampleRecord, ...]
    duration: float

    @property
    def start(self) -> float:
        return self.samples[0].timestamp

    @property
    def end(self) -> float:
        return self.samples[-1].timestamp

    def __len__(self) -> int:
        return len(self.samples)

    def column(self, which: str) -> np.ndarray:
        return np.array([getattr(s, which) for s in self.samples], dtype=np.float64)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float(text: str, name: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ValueError(f"non-numeric {name}: {text!r}") from None
    if not np.isfinite(v):
        raise ValueError(f"non-finite {name}: {text!r}")
    return v


def parse_log(stream: IO[str] | IO[bytes] | str, column_map: dict[str, str] | None = None,
              delimiter: str | None = None) -> ParsedLog:
    """Parse a delimited log into SampleRecords.

    ``column_map`` maps canonical names to the header names used in the file.
    The delimiter is sniffed from the header (tab if present, else comma)
    unless given. Bad rows are collected in ``errors`` with their line number
    and skipped; a missing required column raises ConfigurationError.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    else:
        first = stream.read(0)
        if isinstance(first, bytes):
            stream = io.TextIOWrapper(stream, encoding="utf-8", newline="")

    header_line = stream.readline()
    if not header_line:
        raise ConfigurationError("empty input: no header row")
    if delimiter is None:
        delimiter = "\t" if "\t" in header_line and "," not in header_line else ","
    header = next(csv.reader([header_line], delimiter=delimiter))
    header = [h.strip() for h in header]

    mapping = {c: c for c in COLUMNS}
    if column_map:
        unknown = set(column_map) - set(COLUMNS)
        if unknown:
            raise ConfigurationError(f"unknown canonical columns in mapping: {sorted(unknown)}")
        mapping.update(column_map)
    index = {}
    missing = []
    for canon, name in mapping.items():
        if name in header:
            index[canon] = header.index(name)
        elif canon in ("lane_change", "cut_in"):
            index[canon] = None
        else:
            missing.append(name)
    if missing:
        raise ConfigurationError(f"missing required column(s): {', '.join(missing)}")

    groups: dict[tuple[str, str], list[SampleRecord]] = {}
    errors: list[RowError] = []
    reader = csv.reader(stream, delimiter=delimiter)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            rec = _parse_row(row, index)
        except (ValueError, IndexError) as exc:
            errors.append(RowError(lineno, str(exc)))
            continue
        groups.setdefault((rec.driver_id, rec.trip_id), []).append(rec)
    records = [r for g in groups.values() for r in g]
    if errors:
        log.warning("%d malformed row(s) skipped; first: %s", len(errors), errors[0])
    return ParsedLog(records, errors)


def _parse_row(row: Sequence[str], index: dict[str, int | None]) -> SampleRecord:
    def cell(name):
        i = index[name]
        if i is None:
            return ""
        if i >= len(row):
            raise ValueError(f"row too short: no {name} field")
        return row[i].strip()

    dd = cell("delta_d")
    dv = cell("delta_v")
    return SampleRecord(
        timestamp=_parse_float(cell("timestamp"), "timestamp"),
        v_e=_parse_float(cell("v_e"), "v_e"),
        a_e=_parse_float(cell("a_e"), "a_e"),
        delta_v=_parse_float(dv, "delta_v") if dv else None,
        delta_d=_parse_float(dd, "delta_d") if dd else None,
        lane_change=_parse_bool(cell("lane_change")),
        cut_in=_parse_bool(cell("cut_in")),
        driver_id=cell("driver_id"),
        trip_id=cell("trip_id"),
    )


def read_log(path, column_map=None, delimiter=None) -> ParsedLog:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_log(fh, column_map, delimiter)


def write_log(records: Iterable[SampleRecord], stream: IO[str]) -> None:
    """Write records in the canonical CSV layout (round-trips via parse_log)."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        w.writerow([
            repr(r.timestamp), r.driver_id, r.trip_id, repr(r.v_e), repr(r.a_e),
            "" if r.delta_v is None else repr(r.delta_v),
            "" if r.delta_d is None else repr(r.delta_d),
            int(r.lane_change), int(r.cut_in),
        ])


def extract_events(records: Iterable[SampleRecord],
                   rules: ScenarioRules = ScenarioRules()) -> list[CarFollowingEvent]:
    """Maximal runs of accepted samples lasting at least ``min_duration``.

    A run ends at any rejected sample (flag, no target, too far, too slow)
    and at any timestamp gap larger than two sample periods. Duration is
    ``last - first + 1/f``, i.e. sample count over rate on a regular log.
    """
    period = 1.0 / rules.rate_hz
    # 1e-9 s slack: decimal timestamps like 40.1 - 39.9 overshoot 0.2 in binary
    max_gap = 2.0 * period
    by_trip: dict[tuple[str, str], list[SampleRecord]] = {}
    for r in records:
        by_trip.setdefault((r.driver_id, r.trip_id), []).append(r)

    events = []
    for (driver, trip), recs in by_trip.items():
        recs = sorted(recs, key=lambda r: r.timestamp)
        run: list[SampleRecord] = []
        for r in recs:
            if run and r.timestamp - run[-1].timestamp > max_gap + 1e-9:
                _close(run, driver, trip, rules, period, events)
                run = []
            if rules.accepts(r):
                run.append(r)
            elif run:
                _close(run, driver, trip, rules, period, events)
                run = []
        if run:
            _close(run, driver, trip, rules, period, events)

    for driver in drivers_below_floor(events, rules):
        log.warning("driver %s has fewer than %d car-following events",
                    driver, rules.min_events_per_driver)
    return events


def _close(run, driver, trip, rules, period, out) -> None:
    duration = run[-1].timestamp - run[0].timestamp + period
    # same round-off tolerance as the gap test above
    if duration >= rules.min_duration - 1e-9:
        out.append(CarFollowingEvent(driver, trip, tuple(run), duration))


def event_counts(events: Iterable[CarFollowingEvent]) -> dict[str, int]:
    return dict(Counter(e.driver_id for e in events))


def drivers_below_floor(events: Iterable[CarFollowingEvent],
                        rules: ScenarioRules = ScenarioRules()) -> list[str]:
    """Drivers with fewer events than ``rules.min_events_per_driver``."""
    counts = event_counts(events)
    return sorted(d for d, c in counts.items() if c < rules.min_events_per_driver)


def chronological(events: Iterable[CarFollowingEvent]) -> list[CarFollowingEvent]:
    return sorted(events, key=lambda e: (e.start, e.driver_id, e.trip_id))


def pool_variable(events: Sequence[CarFollowingEvent], which: str) -> np.ndarray:
    """Concatenate one variable over events, earliest event first."""
    if which not in VARIABLES:
        raise ConfigurationError(f"unknown variable {which!r}; choose from {VARIABLES}")
    if not events:
        raise ValueError("no events to pool")
    return np.concatenate([e.column(which) for e in chronological(events)])


def pool_matrix(events: Sequence[CarFollowingEvent],
                variables: Sequence[str] = VARIABLES) -> np.ndarray:
    """(n, len(variables)) matrix, rows in the same order as pool_variable."""
    return np.column_stack([pool_variable(events, v) for v in variables])
