"""Shared city-model pieces: parameters, lazy trip kinematics and the agenda."""
from __future__ import annotations

import heapq
import itertools
from bisect import bisect_right
from dataclasses import dataclass, fields
from typing import Callable

from ..engine import VEHICLE_SPEED, WALK_SPEED, Position, distance, travel_ticks

STRATEGIES = ("Traditional", "FSO", "PerfectOracle")


@dataclass
class CityParams:
    strategy: str = "FSO"
    threshold: int = 150
    n_individuals: int = 140
    n_hospitals: int = 4
    n_doctors: int = 15
    n_ambulances: int = 8
    n_appliances: int = 70
    n_offices: int = 4
    car_owner_fraction: float = 0.25
    n_taxis: int = 10
    # fire experiment; off in the healthcare sweep
    n_houses: int = 0
    n_trucks: int = 0
    n_firefighters: int = 0
    fire_interval: int = 100
    fire_batch: int = 10
    observe_radius: float = 3.0
    escalate_below: float = 80.0
    # activities
    talk_duration: int = 20
    market_duration: int = 60
    walk_duration: int = 80
    p_company: float = 0.5
    share_radius: float = 3.0
    share_invalidation: int = 50
    office_deadline_min: int = 30
    office_deadline_max: int = 150
    office_stay: int = 50
    # healthcare
    treatment_min: int = 100
    treatment_max: int = 500
    doctor_leaves_after_diagnosis: bool = True
    walk_speed: float = WALK_SPEED
    vehicle_speed: float = VEHICLE_SPEED

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1 tick")
        if self.n_individuals < 0 or self.n_hospitals < 1 or self.n_offices < 1:
            raise ValueError("need at least one hospital and one office")
        if not 0.0 <= self.car_owner_fraction <= 1.0 or not 0.0 <= self.p_company <= 1.0:
            raise ValueError("fractions must lie in [0, 1]")
        if self.n_firefighters > 4 * self.n_trucks or (self.n_trucks and self.n_firefighters < self.n_trucks):
            raise ValueError("each truck carries between 1 and 4 firefighters")
        if not 1 <= self.treatment_min <= self.treatment_max:
            raise ValueError("need 1 <= treatment_min <= treatment_max")
        if not 0 < self.office_deadline_min <= self.office_deadline_max:
            raise ValueError("need 0 < office_deadline_min <= office_deadline_max")
        if self.walk_speed <= 0 or self.vehicle_speed <= 0:
            raise ValueError("speeds must be positive")

    @property
    def fires(self) -> bool:
        return self.n_houses > 0

    @property
    def collaboration(self) -> bool:
        """Whether communities escalate to each other (fire trucks answer detectors)."""
        return self.strategy == "FSO"

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def fire_params(strategy: str = "FSO", **overrides) -> CityParams:
    """The houses-on-fire setup: 50 houses, 50 individuals, 10 trucks, 35 firefighters."""
    base = dict(strategy=strategy, n_individuals=50, n_houses=50, n_trucks=10, n_firefighters=35)
    base.update(overrides)
    return CityParams(**base)


class Trip:
    """Straight-line legs through ``waypoints`` at constant speed from ``depart``.

    Positions are computed on demand, so an agent on a trip costs nothing per
    tick. Before ``depart`` the traveller waits at the origin.
    """

    __slots__ = ("points", "cum", "depart", "speed")

    def __init__(self, origin: Position, waypoints, depart: int, speed: float) -> None:
        self.points = [origin, *waypoints]
        cum = [0.0]
        for a, b in zip(self.points, self.points[1:]):
            cum.append(cum[-1] + distance(a, b))
        self.cum = cum
        self.depart = depart
        self.speed = speed

    @property
    def length(self) -> float:
        return self.cum[-1]

    def reach_tick(self, index: int) -> int:
        """Tick at which waypoint ``index`` (0 = origin) is reached."""
        return self.depart + travel_ticks(self.cum[index], self.speed)

    @property
    def arrival(self) -> int:
        return self.reach_tick(len(self.points) - 1)

    @property
    def destination(self) -> Position:
        return self.points[-1]

    def position_at(self, t: int) -> Position:
        if t <= self.depart:
            return self.points[0]
        s = (t - self.depart) * self.speed
        if s >= self.cum[-1]:
            return self.points[-1]
        i = bisect_right(self.cum, s) - 1
        a, b = self.points[i], self.points[i + 1]
        seg = self.cum[i + 1] - self.cum[i]
        f = (s - self.cum[i]) / seg if seg else 0.0
        return Position(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f)

    def rest(self, t: int) -> list[Position]:
        """Waypoints not yet reached at tick ``t``."""
        s = max(0, t - self.depart) * self.speed
        return [p for p, c in zip(self.points[1:], self.cum[1:]) if c > s]


class Agenda:
    """Callbacks due at future ticks, run in (tick, insertion) order."""

    def __init__(self) -> None:
        self._heap: list = []
        self._seq = itertools.count()

    def __len__(self) -> int:
        return len(self._heap)

    def at(self, tick: int, fn: Callable, *args) -> None:
        heapq.heappush(self._heap, (tick, next(self._seq), fn, args))

    def run_due(self, tick: int) -> int:
        n = 0
        h = self._heap
        while h and h[0][0] <= tick:
            _, _, fn, args = heapq.heappop(h)
            fn(*args)
            n += 1
        return n
