"""Deterministic tick-driven world.

A :class:`World` owns the clock, the event log and a set of named random
streams. Scenario code plugs in as *systems*: objects exposing any of the six
phase hooks listed in :data:`PHASES`. Every tick runs the hooks phase by phase,
systems in registration order, so a run is a pure function of its config and
master seed.
"""
from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, NamedTuple

import numpy as np

PHASES = (
    "generate_events",
    "sense",
    "coordinate",
    "move",
    "progress",
    "accrue_metrics",
)

WALK_SPEED = 0.25
VEHICLE_SPEED = 1.0


class Position(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class WorldConfig:
    width: int = 41
    height: int = 41
    max_ticks: int = 3000
    master_seed: int = 0
    topology: str = "bounded"

    def __post_init__(self) -> None:
        if self.width < 3 or self.height < 3:
            raise ValueError("arena must be at least 3x3 cells")
        if self.max_ticks < 1:
            raise ValueError("max_ticks must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.topology != "bounded":
            raise ValueError("only the bounded topology is supported")

    def clamp(self, p: Position) -> Position:
        # half-open arena [0, width) x [0, height)
        x = min(max(p.x, 0.0), math.nextafter(self.width, 0.0))
        y = min(max(p.y, 0.0), math.nextafter(self.height, 0.0))
        if x == p.x and y == p.y:
            return p
        return Position(x, y)

    def contains(self, p: Position) -> bool:
        return 0.0 <= p.x < self.width and 0.0 <= p.y < self.height

    def center(self) -> Position:
        return Position(self.width / 2.0, self.height / 2.0)


def distance(a: Position, b: Position) -> float:
    """Euclidean distance in cells."""
    return math.hypot(a[0] - b[0], a[1] - b[1])


def move_toward(
    current: Position,
    target: Position,
    speed: float,
    config: WorldConfig | None = None,
) -> tuple[Position, bool]:
    """Advance ``speed`` cells along the straight segment to ``target``.

    Returns the new position and an arrival flag. A step that would overshoot
    lands exactly on the target. With ``config`` given the result is clamped
    to the arena.
    """
    if speed <= 0:
        raise ValueError("speed must be positive")
    d = distance(current, target)
    if d <= speed:
        new, arrived = Position(float(target[0]), float(target[1])), True
    else:
        f = speed / d
        new = Position(current[0] + (target[0] - current[0]) * f,
                       current[1] + (target[1] - current[1]) * f)
        arrived = False
    if config is not None:
        new = config.clamp(new)
    return new, arrived


def travel_ticks(d: float, speed: float) -> int:
    """Ticks needed to cover ``d`` cells at ``speed`` with per-tick stepping."""
    if d <= 0:
        return 0
    return max(1, math.ceil(d / speed - 1e-9))


# --------------------------------------------------------------------------
# random streams

def _stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


class RngStream:
    """A named, independently seeded random stream.

    Scalar draws come from a refillable block of uniforms, which keeps hot
    per-agent loops cheap while staying a pure function of (seed, name).
    ``generator`` exposes the underlying numpy Generator for vectorised draws.
    """

    _BLOCK = 2048

    def __init__(self, master_seed: int, name: str) -> None:
        self.name = name
        self.seed_sequence = np.random.SeedSequence([master_seed & 0xFFFFFFFFFFFFFFFF, _stream_key(name)])
        self.generator = np.random.Generator(np.random.PCG64(self.seed_sequence))
        self._buf: list[float] = []
        self._i = 0

    def random(self) -> float:
        if self._i >= len(self._buf):
            self._buf = self.generator.random(self._BLOCK).tolist()
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return u

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in ``[low, high]`` (inclusive)."""
        return low + min(int(self.random() * (high - low + 1)), high - low)

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def choice(self, seq):
        if not seq:
            raise IndexError("choice from empty sequence")
        return seq[self.integers(0, len(seq) - 1)]

    def sample(self, seq, k: int) -> list:
        pool = list(seq)
        k = min(k, len(pool))
        out = []
        for _ in range(k):
            out.append(pool.pop(self.integers(0, len(pool) - 1)))
        return out

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.integers(0, i)
            items[i], items[j] = items[j], items[i]

    def position(self, config: WorldConfig) -> Position:
        return config.clamp(Position(self.uniform(0, config.width), self.uniform(0, config.height)))

    def weighted(self, items: list, weights: list[float]):
        """Pick from ``items`` by weight; leftover mass maps to ``None``."""
        u = self.random()
        acc = 0.0
        for item, w in zip(items, weights):
            acc += w
            if u < acc:
                return item
        return None


class RngStreams:
    def __init__(self, master_seed: int) -> None:
        self.master_seed = master_seed
        self._streams: dict[str, RngStream] = {}

    def __getitem__(self, name: str) -> RngStream:
        s = self._streams.get(name)
        if s is None:
            s = self._streams[name] = RngStream(self.master_seed, name)
        return s


# --------------------------------------------------------------------------
# event log

class Event(NamedTuple):
    tick: int
    agent_id: Any
    kind: str
    payload: dict


class EventLog:
    """Append-only list of :class:`Event` records."""

    def __init__(self, events: Iterable[Event] = ()) -> None:
        self.events: list[Event] = list(events)

    def append(self, tick: int, agent_id, kind: str, **payload) -> None:
        self.events.append(Event(tick, agent_id, kind, payload))

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __getitem__(self, i):
        return self.events[i]

    def of_kind(self, *kinds: str) -> list[Event]:
        return [e for e in self.events if e.kind in kinds]

    def to_ndjson(self) -> str:
        lines = [
            json.dumps({"tick": e.tick, "agent_id": e.agent_id, "kind": e.kind, "payload": e.payload},
                       sort_keys=True, separators=(",", ":"))
            for e in self.events
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_ndjson(cls, text: str) -> "EventLog":
        events = []
        for line in text.splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            events.append(Event(d["tick"], d["agent_id"], d["kind"], d["payload"]))
        return cls(events)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_ndjson())

    @classmethod
    def load(cls, path) -> "EventLog":
        with open(path, encoding="utf-8") as fh:
            return cls.from_ndjson(fh.read())


# --------------------------------------------------------------------------
# world

class World:
    """Clock, log, random streams and the systems stepped each tick."""

    def __init__(self, config: WorldConfig, systems: Iterable[Any] = ()) -> None:
        self.config = config
        self.tick = 0
        self.log = EventLog()
        self.rng = RngStreams(config.master_seed)
        self.systems: list[Any] = []
        self._closed = False
        for s in systems:
            self.add_system(s)

    def add_system(self, system) -> None:
        self.systems.append(system)
        attach = getattr(system, "attach", None)
        if attach is not None:
            attach(self)

    @property
    def finished(self) -> bool:
        return self.tick >= self.config.max_ticks

    def emit(self, agent_id, kind: str, **payload) -> None:
        self.log.append(self.tick, agent_id, kind, **payload)

    def run(self, ticks: int | None = None) -> "World":
        n = self.config.max_ticks - self.tick if ticks is None else ticks
        for _ in range(n):
            if self.finished:
                break
            advance_tick(self)
        if self.finished and not self._closed:
            self._closed = True
            for s in self.systems:
                end = getattr(s, "finish", None)
                if end is not None:
                    end(self)
        return self


def advance_tick(world: World) -> World:
    """Step every system once, in the fixed six-phase order."""
    if world.finished:
        return world
    world.tick += 1
    for phase in PHASES:
        for s in world.systems:
            hook = getattr(s, phase, None)
            if hook is not None:
                hook(world)
    return world
