"""Synthetic car-following logs from the Gazis-Herman-Rothery law.

The follower obeys ``a(t) = c * v(t)**r * dv(t - T) / dx(t - T)**l`` with
``dv`` = lead speed minus follower speed and ``dx`` = spacing. It is
integrated with explicit Euler at a small step and sampled at the log rate.
"""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ingestion import SampleRecord, write_log

log = logging.getLogger(__name__)

COLLISION_GAP = 0.1


class CollisionError(RuntimeError):
    """Spacing fell to the collision threshold; the GHR law is singular there."""


@dataclass(frozen=True)
class GhrParams:
    c: float = 15.0
    r: float = 0.0
    l: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.c):
            raise ValueError("c must be finite")
        if self.T < 0:
            raise ValueError("reaction time T must be >= 0")


@dataclass(frozen=True)
class Segment:
    """One piece of the lead speed profile.

    kind is ``constant`` (speed), ``ramp`` (speed -> end_speed) or
    ``sinusoid`` (speed + amplitude * sin(2 pi t / period + phase)).
    """

    kind: str
    duration: float
    speed: float
    end_speed: float | None = None
    amplitude: float = 0.0
    period: float = 1.0
    phase: float = 0.0

    def speed_at(self, tau: float) -> float:
        if self.kind == "constant":
            return self.speed
        if self.kind == "ramp":
            frac = tau / self.duration if self.duration > 0 else 1.0
            return self.speed + (self.end_speed - self.speed) * frac
        if self.kind == "sinusoid":
            return self.speed + self.amplitude * math.sin(2 * math.pi * tau / self.period + self.phase)
        raise ValueError(f"unknown segment kind {self.kind!r}")


@dataclass(frozen=True)
class Interruption:
    """Window ``[start, end)`` (trip-relative seconds) with a flag raised."""

    kind: str
    start: float
    end: float

    def __post_init__(self):
        if self.kind not in ("cut_in", "lane_change"):
            raise ValueError(f"interruption kind must be cut_in or lane_change, not {self.kind!r}")
        if self.end < self.start:
            raise ValueError("interruption ends before it starts")


@dataclass(frozen=True)
class LeadProfile:
    segments: tuple[Segment, ...]
    interruptions: tuple[Interruption, ...] = ()

    def __post_init__(self):
        if not self.segments:
            raise ValueError("lead profile needs at least one segment")
        if any(s.duration < 0 for s in self.segments):
            raise ValueError("segment durations must be >= 0")
        # segment start times, for bisection in speed_at
        object.__setattr__(self, "_starts", np.concatenate(
            [[0.0], np.cumsum([s.duration for s in self.segments])[:-1]]))

    def speed_at(self, t: float) -> float:
        i = int(np.searchsorted(self._starts, t, side="right")) - 1
        i = max(i, 0)
        seg = self.segments[i]
        tau = min(t - self._starts[i], seg.duration)
        return max(seg.speed_at(tau), 0.0)

    def flags_at(self, t: float) -> tuple[bool, bool]:
        lane = cut = False
        for it in self.interruptions:
            if it.start <= t < it.end:
                if it.kind == "lane_change":
                    lane = True
                else:
                    cut = True
        return lane, cut

    @classmethod
    def constant(cls, speed: float, interruptions=()) -> "LeadProfile":
        return cls((Segment("constant", math.inf, speed),), tuple(interruptions))


@dataclass(frozen=True)
class InitialState:
    speed: float
    spacing: float


@dataclass(frozen=True)
class Trajectory:
    """Full-resolution simulation output (one entry per Euler step)."""

    t: np.ndarray
    v: np.ndarray
    a: np.ndarray
    lead_v: np.ndarray
    spacing: np.ndarray

    @property
    def delta_v(self) -> np.ndarray:
        return self.lead_v - self.v


def _steps(span: float, dt: float, what: str) -> int:
    k = round(span / dt)
    if abs(k * dt - span) > 1e-9 * max(1.0, span):
        raise ValueError(f"{what} ({span}) must be an integer multiple of dt ({dt})")
    return k


def integrate(params: GhrParams, lead: LeadProfile, initial: InitialState,
              dt: float = 0.01, duration: float = 60.0, noise_std: float = 0.0,
              seed: int | None = None) -> Trajectory:
    """Euler-integrate the follower; arrays hold the state at each step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if initial.spacing <= 0:
        raise ValueError("initial spacing must be positive")
    delay = _steps(params.T, dt, "reaction time T")
    steps = _steps(duration, dt, "duration")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(steps + 1) * noise_std if noise_std > 0 else None

    t = np.arange(steps + 1) * dt
    lead_v = np.array([lead.speed_at(x) for x in t])
    v = np.empty(steps + 1)
    a = np.empty(steps + 1)
    gap = np.empty(steps + 1)
    v[0] = initial.speed
    gap[0] = initial.spacing
    c, r, l = params.c, params.r, params.l
    warned = False
    for k in range(steps + 1):
        j = k - delay if k >= delay else 0
        stimulus = (lead_v[j] - v[j]) / gap[j] ** l if l else lead_v[j] - v[j]
        sens = c * v[k] ** r if r else c
        a[k] = sens * stimulus + (noise[k] if noise is not None else 0.0)
        if k == steps:
            break
        v_next = v[k] + a[k] * dt
        if v_next < 0.0:
            if not warned:
                log.warning("follower speed went negative at t=%.2f s; clamped to 0", t[k])
                warned = True
            v_next = 0.0
        v[k + 1] = v_next
        gap[k + 1] = gap[k] + (lead_v[k] - v[k]) * dt
        if gap[k + 1] <= COLLISION_GAP:
            raise CollisionError(f"collision: spacing {gap[k + 1]:.3f} m at t={t[k + 1]:.2f} s")
    return Trajectory(t, v, a, lead_v, gap)


def simulate(params: GhrParams, lead: LeadProfile, initial: InitialState,
             dt: float = 0.01, duration: float = 60.0, noise_std: float = 0.0,
             seed: int | None = None, rate_hz: float = 10.0, t0: float = 0.0,
             driver_id: str = "driver", trip_id: str = "trip") -> list[SampleRecord]:
    """Simulate one trip and sample it at ``rate_hz`` (``duration * rate_hz`` rows)."""
    stride = _steps(1.0 / rate_hz, dt, "output period")
    traj = integrate(params, lead, initial, dt, duration, noise_std, seed)
    n_out = round(duration * rate_hz)
    out = []
    for i in range(n_out):
        k = i * stride
        lane, cut = lead.flags_at(traj.t[k])
        out.append(SampleRecord(
            timestamp=round(t0 + i / rate_hz, 9),
            v_e=float(traj.v[k]),
            a_e=float(traj.a[k]),
            delta_v=float(traj.lead_v[k] - traj.v[k]),
            delta_d=float(traj.spacing[k]),
            lane_change=lane,
            cut_in=cut,
            driver_id=driver_id,
            trip_id=trip_id,
        ))
    return out


# scenario files --------------------------------------------------------------

@dataclass
class TripSpec:
    trip_id: str
    duration: float
    initial: InitialState
    lead: LeadProfile
    noise_std: float | None = None  # None: the driver's level


@dataclass
class DriverSpec:
    driver_id: str
    params: GhrParams
    noise_std: float = 0.0
    trips: list[TripSpec] = field(default_factory=list)
    random_trips: dict | None = None


@dataclass
class ScenarioSpec:
    drivers: list[DriverSpec]
    rate_hz: float = 10.0
    dt: float = 0.01
    trip_gap: float = 60.0


def _segment(d: dict) -> Segment:
    return Segment(
        kind=d["kind"], duration=float(d.get("duration", math.inf)),
        speed=float(d["speed"]), end_speed=d.get("end_speed"),
        amplitude=float(d.get("amplitude", 0.0)), period=float(d.get("period", 1.0)),
        phase=float(d.get("phase", 0.0)),
    )


def _lead(d: dict) -> LeadProfile:
    return LeadProfile(
        tuple(_segment(s) for s in d["segments"]),
        tuple(Interruption(i["kind"], float(i["start"]), float(i["end"]))
              for i in d.get("interruptions", ())),
    )


def scenario_from_dict(tree: dict) -> ScenarioSpec:
    drivers = []
    for dd in tree["drivers"]:
        trips = [
            TripSpec(
                trip_id=str(td["trip_id"]),
                duration=float(td["duration"]),
                initial=InitialState(**td["initial"]),
                lead=_lead(td["lead"]),
                noise_std=td.get("noise_std"),
            )
            for td in dd.get("trips", ())
        ]
        drivers.append(DriverSpec(
            driver_id=str(dd["driver_id"]),
            params=GhrParams(**dd.get("params", {})),
            noise_std=float(dd.get("noise_std", 0.0)),
            trips=trips,
            random_trips=dd.get("random_trips"),
        ))
    return ScenarioSpec(
        drivers=drivers,
        rate_hz=float(tree.get("rate_hz", 10.0)),
        dt=float(tree.get("dt", 0.01)),
        trip_gap=float(tree.get("trip_gap", 60.0)),
    )


def load_scenario(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def default_scenario_path():
    from importlib.resources import files
    return files("nddsize") / "data" / "default_scenario.json"


def _uniform(rng: np.random.Generator, bounds: Sequence[float]) -> float:
    lo, hi = bounds
    return float(rng.uniform(lo, hi))


def _oscillating_lead(cfg: dict, duration: float, rng: np.random.Generator) -> LeadProfile:
    """Whole-period sinusoids around one trip-level mean; speed is continuous."""
    mean = _uniform(rng, cfg["speed"])
    segments = []
    elapsed = 0.0
    while elapsed < duration:
        period = _uniform(rng, cfg["period"])
        segments.append(Segment("sinusoid", period, mean,
                                amplitude=_uniform(rng, cfg["amplitude"]), period=period))
        elapsed += period
    return LeadProfile(tuple(segments))


def _mixed_lead(cfg: dict, duration: float, rng: np.random.Generator) -> LeadProfile:
    """Constant holds (or oscillations) joined by ramps to new speed levels."""
    p_osc = float(cfg.get("oscillation", 0.0))
    speed = _uniform(rng, cfg["speed"])
    segments = []
    elapsed = 0.0
    while elapsed < duration:
        hold = _uniform(rng, cfg["hold"])
        if rng.random() < p_osc:
            segments.append(Segment("sinusoid", hold, speed,
                                    amplitude=_uniform(rng, cfg["amplitude"]),
                                    period=_uniform(rng, cfg["period"])))
        else:
            segments.append(Segment("constant", hold, speed))
        ramp = _uniform(rng, cfg["ramp"])
        target = _uniform(rng, cfg["speed"])
        segments.append(Segment("ramp", ramp, speed, end_speed=target))
        speed = target
        elapsed += hold + ramp
    return LeadProfile(tuple(segments))


def _smooth_lead(cfg: dict, duration: float, rng: np.random.Generator) -> LeadProfile:
    """Lead acceleration as a mean-reverting random process, 1 s ramps.

    The acceleration relaxes with time constant ``accel_tau`` toward a pull
    ``-(v - mean) / restore**2`` and is driven so its stationary spread is
    about ``accel_sd``. Speed is kept inside the ``bounds`` range.
    """
    mean = _uniform(rng, cfg["speed"])
    tau = float(cfg.get("accel_tau", 30.0))
    sd = float(cfg.get("accel_sd", 0.5))
    restore = float(cfg.get("restore", 20.0))
    lo, hi = cfg.get("bounds", (6.0, 35.0))
    phi = math.exp(-1.0 / tau)
    kick = sd * math.sqrt(1.0 - phi * phi)
    steps = int(math.ceil(duration))
    v = mean
    a = rng.normal(0.0, sd)
    segments = []
    for _ in range(steps):
        pull = -(v - mean) / restore ** 2
        a = phi * a + (1.0 - phi) * pull * tau + kick * rng.standard_normal()
        nxt = min(max(v + a, lo), hi)
        segments.append(Segment("ramp", 1.0, v, end_speed=nxt))
        v = nxt
    return LeadProfile(tuple(segments))


_LEAD_STYLES = {"oscillating": _oscillating_lead, "mixed": _mixed_lead, "smooth": _smooth_lead}


def _random_trips(driver: DriverSpec, rng: np.random.Generator) -> list[TripSpec]:
    """Draw ``count`` trips from the ranges in ``random_trips``.

    ``style`` picks the lead profile family: ``oscillating`` (default),
    ``mixed`` or ``smooth``. The follower starts at the lead speed. An optional ``noise``
    range draws a per-trip noise level in place of the driver's.
    """
    cfg = driver.random_trips
    duration = float(cfg["duration"])
    style = cfg.get("style", "oscillating")
    if style not in _LEAD_STYLES:
        raise ValueError(f"unknown random trip style {style!r}")
    trips = []
    for i in range(int(cfg["count"])):
        lead = _LEAD_STYLES[style](cfg, duration, rng)
        trips.append(TripSpec(
            trip_id=f"r{i:04d}",
            duration=duration,
            initial=InitialState(speed=lead.speed_at(0.0), spacing=_uniform(rng, cfg["spacing"])),
            lead=lead,
            noise_std=_uniform(rng, cfg["noise"]) if "noise" in cfg else None,
        ))
    return trips


def generate_records(spec: ScenarioSpec, seed: int) -> list[SampleRecord]:
    """All trips of all drivers; trips follow each other on one clock per driver."""
    root = np.random.SeedSequence(seed)
    driver_seeds = root.spawn(len(spec.drivers))
    records = []
    for driver, ds in zip(spec.drivers, driver_seeds):
        rng = np.random.default_rng(ds)
        trips = list(driver.trips)
        if driver.random_trips:
            trips += _random_trips(driver, rng)
        clock = 0.0
        for trip in trips:
            records += simulate(
                driver.params, trip.lead, trip.initial, dt=spec.dt,
                duration=trip.duration,
                noise_std=driver.noise_std if trip.noise_std is None else trip.noise_std,
                seed=int(rng.integers(2**63)), rate_hz=spec.rate_hz, t0=clock,
                driver_id=driver.driver_id, trip_id=trip.trip_id,
            )
            clock += trip.duration + spec.trip_gap
    return records


def generate_dataset(spec: ScenarioSpec, seed: int) -> bytes:
    """Scenario -> CSV bytes in the canonical log layout; deterministic in seed."""
    buf = io.StringIO()
    write_log(generate_records(spec, seed), buf)
    return buf.getvalue().encode("utf-8")
