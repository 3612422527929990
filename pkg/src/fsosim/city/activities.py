"""Individuals and their everyday activities.

Every idle individual draws a new activity each tick. Talking on the phone and
going to the market are solo and fixed-length. Walkers that want company are
grouped by the residents' coordinator. Car owners heading somewhere offer a
ride to carless neighbours bound for the same area. Office-goers pick on
foot, own car or taxi by a distance/time check.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from ..engine import Position, RngStream, distance
from ..fso import ServiceRequest
from ..mutualism import GroupActivity, merge_group_activity
from .common import Trip

if TYPE_CHECKING:
    from .model import CityModel

TALK = "talk_on_phone"
MARKET = "go_to_market"
WALK = "walk_in_park"
LOCATION = "go_to_location"
OFFICE = "go_to_office"
HEALTH = "health_care"

ACTIVITY_KINDS = (TALK, MARKET, WALK, LOCATION, OFFICE, HEALTH)
ACTIVITY_WEIGHTS = (0.18, 0.18, 0.18, 0.18, 0.18, 0.09)  # leftover 0.01: stay idle

# activities an individual may interrupt to help at a fire
PAUSABLE = frozenset({TALK, MARKET, WALK})

IDLE, BUSY, HELPING, PATIENT, DEAD = "idle", "activity", "helping", "patient", "dead"

ON_FOOT, OWN_CAR, TAXI = "on_foot", "own_car", "taxi"
TRANSPORT_MODES = (ON_FOOT, OWN_CAR, TAXI)


@dataclass(eq=False, slots=True)
class Individual:
    id: int
    position: Position
    owns_car: bool
    office: int
    state: str = IDLE
    kind: str | None = None
    trip: Trip | None = None
    ends_at: int | None = None
    token: int = 0
    wants_company: bool = False
    group: GroupActivity | None = None
    riding: bool = False
    paused: tuple | None = None

    def where(self, t: int) -> Position:
        return self.trip.position_at(t) if self.trip is not None else self.position

    def settle(self, t: int) -> Position:
        """Drop the current trip, keeping the position reached at ``t``."""
        self.position = self.where(t)
        self.trip = None
        return self.position


def trigger_activity(ind: Individual, rng: RngStream) -> str | None:
    """Draw the next activity for an idle individual (``None``: stays idle)."""
    if ind.state != IDLE:
        return None
    return rng.weighted(list(ACTIVITY_KINDS), list(ACTIVITY_WEIGHTS))


def plan_office_trip(origin: Position, office: Position, deadline_ticks: int, owns_car: bool,
                     walk_speed: float) -> str:
    if distance(origin, office) / walk_speed <= deadline_ticks:
        return ON_FOOT
    return OWN_CAR if owns_car else TAXI


def find_share_partner(dest: Position, offers, radius: float, near: Position):
    """Pick a ride offer whose destination lies within ``radius`` of ``dest``.

    ``offers`` holds ``(agent_id, destination, position)``; among fitting
    offers the driver closest to ``near`` wins, then the lowest id.
    """
    best = None
    for agent, odest, pos in offers:
        if distance(odest, dest) > radius:
            continue
        key = (distance(pos, near), agent)
        if best is None or key < best[0]:
            best = (key, agent)
    return None if best is None else best[1]


class Fleet:
    """Vehicles that wander when idle and follow a :class:`Trip` when busy."""

    def __init__(self, ids, positions, width: float, height: float) -> None:
        self.ids = list(ids)
        self.index = {a: i for i, a in enumerate(self.ids)}
        self.pos = np.asarray(positions, dtype=float).reshape(-1, 2)
        self.trips: list[Trip | None] = [None] * len(self.ids)
        self.busy = np.zeros(len(self.ids), dtype=bool)
        self._hi = np.array([np.nextafter(width, 0.0), np.nextafter(height, 0.0)])

    def __contains__(self, agent) -> bool:
        return agent in self.index

    def where(self, agent, t: int) -> Position:
        i = self.index[agent]
        trip = self.trips[i]
        if trip is not None:
            return trip.position_at(t)
        return Position(float(self.pos[i, 0]), float(self.pos[i, 1]))

    def dispatch(self, agent, trip: Trip) -> None:
        i = self.index[agent]
        self.trips[i] = trip
        self.busy[i] = True

    def park(self, agent, position: Position) -> None:
        i = self.index[agent]
        self.trips[i] = None
        self.pos[i] = position
        self.busy[i] = False

    def wander(self, rng: RngStream, step: float) -> None:
        if not len(self.ids):
            return
        # one angle per vehicle every tick keeps the stream independent of who is busy
        ang = rng.generator.uniform(0.0, 2.0 * np.pi, len(self.ids))
        idle = ~self.busy
        delta = step * np.column_stack((np.cos(ang), np.sin(ang)))
        self.pos[idle] = np.clip(self.pos[idle] + delta[idle], 0.0, self._hi)


class Society:
    """Activity life cycle for all individuals."""

    def __init__(self, model: "CityModel") -> None:
        self.m = model
        self.p = model.params
        self.idle: set[int] = set()
        self.walk_seekers: list[Individual] = []
        self.walk_lonely: list[Individual] = []
        self.walk_group: GroupActivity | None = None
        self.share_requests: list[tuple[Individual, Position, int]] = []
        self.share_offers: dict[int, Position] = {}
        self.taxi_queue: list[tuple[Individual, int]] = []
        self.transport = dict.fromkeys(TRANSPORT_MODES, 0)

    # -- life cycle ------------------------------------------------------------

    def generate(self, t: int) -> None:
        rng = self.m.rng_activity
        for iid in sorted(self.idle):
            ind = self.m.individuals[iid]
            kind = trigger_activity(ind, rng)
            if kind is not None:
                self.start(ind, kind, t)

    def start(self, ind: Individual, kind: str, t: int) -> None:
        self.idle.discard(ind.id)
        ind.state, ind.kind = BUSY, kind
        ind.token += 1
        self.m.world.emit(ind.id, "activity_start", activity=kind)
        p = self.p
        if kind == TALK:
            self._end_after(ind, t, p.talk_duration)
        elif kind == MARKET:
            ind.trip = Trip(ind.position, [self.m.market], t, p.walk_speed)
            self._end_after(ind, t, p.market_duration)
        elif kind == WALK:
            ind.wants_company = self.m.rng_activity.bernoulli(p.p_company)
            ind.trip = Trip(ind.position, [self.m.park], t, p.walk_speed)
            self._end_after(ind, t, p.walk_duration)
            if ind.wants_company:
                self.walk_seekers.append(ind)
        elif kind == LOCATION:
            dest = self.m.rng_activity.position(self.m.world.config)
            if ind.owns_car:
                ind.trip = Trip(ind.position, [dest], t, p.vehicle_speed)
                ind.riding = True
                self.share_offers[ind.id] = dest
                self.m.world.emit(ind.id, "ride_offer", x=dest.x, y=dest.y)
                self._end_at(ind, ind.trip.arrival)
            else:
                self.share_requests.append((ind, dest, t))
                self.m.world.emit(ind.id, "ride_request", x=dest.x, y=dest.y)
        elif kind == OFFICE:
            deadline = self.m.rng_activity.integers(p.office_deadline_min, p.office_deadline_max)
            office = self.m.offices[ind.office]
            mode = plan_office_trip(ind.position, office, deadline, ind.owns_car, p.walk_speed)
            if mode == TAXI:
                self.taxi_queue.append((ind, t + deadline))
            else:
                speed = p.walk_speed if mode == ON_FOOT else p.vehicle_speed
                ind.trip = Trip(ind.position, [office], t, speed)
                ind.riding = mode == OWN_CAR
                self.m.agenda.at(ind.trip.arrival, self._at_office, ind, ind.token, mode, t + deadline)
        else:
            self.m.health.issue(ind, t)

    def _end_after(self, ind: Individual, t: int, ticks: int) -> None:
        self._end_at(ind, t + ticks)

    def _end_at(self, ind: Individual, tick: int) -> None:
        ind.ends_at = tick
        self.m.agenda.at(tick, self._finish, ind, ind.token)

    def _finish(self, ind: Individual, token: int) -> None:
        if ind.token != token or ind.state != BUSY:
            return
        t = self.m.world.tick
        self.m.world.emit(ind.id, "activity_end", activity=ind.kind)
        if ind.group is not None:
            group, ind.group = ind.group, None
            if group.leave(ind):
                for other in group.members:
                    other.group = None
                    if other.state in (BUSY, HELPING) and other.kind == WALK:
                        self.walk_lonely.append(other)
                if self.walk_group is group:
                    self.walk_group = None
        self.share_offers.pop(ind.id, None)
        self.make_idle(ind, t)

    def make_idle(self, ind: Individual, t: int) -> None:
        ind.settle(t)
        ind.state, ind.kind = IDLE, None
        ind.riding = ind.wants_company = False
        ind.ends_at = None
        ind.token += 1
        self.idle.add(ind.id)

    def _at_office(self, ind: Individual, token: int, mode: str, due: int) -> None:
        if ind.token != token:
            return
        t = self.m.world.tick
        self.transport[mode] += 1
        ind.settle(t)
        ind.riding = False
        self.m.world.emit(ind.id, "office_arrival", mode=mode, late=t > due)
        self._end_after(ind, t, self.p.office_stay)

    # -- coordinator -----------------------------------------------------------

    def coordinate(self, t: int) -> None:
        if self.walk_seekers:
            self._group_walkers(t)
        if self.share_requests:
            self._match_rides(t)
        if self.taxi_queue:
            self._dispatch_taxis(t)

    def _group_walkers(self, t: int) -> None:
        for ind in self.walk_seekers:
            g = self.walk_group
            if g is not None and not g.dissolved:
                g.join(ind)
                ind.group = g
                self.m.world.emit(ind.id, "group_join", activity=WALK, members=[a.id for a in g.members])
            else:
                self.walk_lonely.append(ind)
        self.walk_seekers = []
        lonely = [a for a in self.walk_lonely if a.group is None and a.kind == WALK and a.state in (BUSY, HELPING)]
        groups = merge_group_activity([(a, WALK, True) for a in lonely], formed_at=t)
        for g in groups:
            for a in g.members:
                a.group = g
            self.walk_group = g
            self.m.world.emit(None, "mutualistic_relationship", activity=WALK,
                              members=[a.id for a in g.members])
        self.walk_lonely = [a for a in lonely if a.group is None]

    def _match_rides(self, t: int) -> None:
        p, world = self.p, self.m.world
        keep = []
        for ind, dest, since in self.share_requests:
            if ind.state != BUSY or ind.kind != LOCATION:
                continue
            if t - since > p.share_invalidation:
                world.emit(ind.id, "activity_canceled", activity=LOCATION, reason="allocation_time_exceeded")
                self.make_idle(ind, t)
                continue
            people = self.m.individuals
            offers = [(a, d, people[a].where(t)) for a, d in self.share_offers.items()]
            here = ind.position
            driver_id = find_share_partner(dest, offers, p.share_radius, here)
            if driver_id is None:
                keep.append((ind, dest, since))
                continue
            driver = people[driver_id]
            del self.share_offers[driver_id]
            own = driver.trip.destination
            trip = Trip(driver.where(t), [here, dest, own], t, p.vehicle_speed)
            driver.trip = trip
            driver.riding = True
            driver.token += 1
            self._end_at(driver, trip.arrival)
            pickup, drop = trip.reach_tick(1), trip.reach_tick(2)
            ind.trip = Trip(here, [dest], pickup, p.vehicle_speed)
            ind.riding = True
            self._end_at(ind, max(drop, ind.trip.arrival))
            world.emit(None, "mutualistic_relationship", activity=LOCATION,
                       members=[ind.id, driver_id], passenger=ind.id, driver=driver_id)
        self.share_requests = keep

    def _dispatch_taxis(self, t: int) -> None:
        m, p = self.m, self.p
        waiting = []
        for ind, due in self.taxi_queue:
            if ind.state != BUSY or ind.kind != OFFICE:
                continue
            if waiting or not (~m.taxis.busy).any():
                waiting.append((ind, due))
                continue
            req = ServiceRequest(m.next_request_id(), "transport", {"taxi": 1}, ind.position, t, origin=ind.id)
            alloc = m.tree.match_notification(m.residents, req)
            taxi = alloc[0].agent
            office = m.offices[ind.office]
            trip = Trip(m.taxis.where(taxi, t), [ind.position, office], t, p.vehicle_speed)
            m.taxis.dispatch(taxi, trip)
            ind.trip = Trip(ind.position, [office], trip.reach_tick(1), p.vehicle_speed)
            ind.riding = True
            arrive = max(trip.arrival, ind.trip.arrival)
            m.agenda.at(arrive, self._taxi_done, taxi, office)
            m.agenda.at(arrive, self._at_office, ind, ind.token, TAXI, due)
            m.world.emit(None, "mutualistic_relationship", activity=OFFICE, members=[ind.id, taxi],
                         passenger=ind.id, taxi=taxi)
        self.taxi_queue = waiting

    def _taxi_done(self, taxi: int, where: Position) -> None:
        m = self.m
        m.taxis.park(taxi, where)
        m.tree.nodes[m.residents].registry.release(taxi, m.world.tick)

    # -- fires interrupt activities ----------------------------------------------

    def can_help(self, ind: Individual) -> bool:
        if ind.state == IDLE:
            return True
        return ind.state == BUSY and ind.kind in PAUSABLE and not ind.riding

    def pause(self, ind: Individual, t: int) -> None:
        if ind.state == IDLE:
            self.idle.discard(ind.id)
            ind.paused = None
        else:
            rest = ind.trip.rest(t) if ind.trip is not None else []
            speed = ind.trip.speed if ind.trip is not None else 0.0
            ind.paused = (ind.ends_at - t, rest, speed)
        ind.settle(t)
        ind.state = HELPING
        ind.token += 1

    def resume(self, ind: Individual, t: int) -> None:
        if ind.state != HELPING:
            return
        if ind.paused is None:
            ind.state = IDLE
            ind.kind = None
            self.idle.add(ind.id)
            return
        remaining, rest, speed = ind.paused
        ind.paused = None
        ind.state = BUSY
        ind.token += 1
        if rest:
            ind.trip = Trip(ind.position, rest, t, speed)
        self._end_after(ind, t, max(remaining, 0))

    def forget(self, ind: Individual) -> None:
        self.idle.discard(ind.id)
        self.share_offers.pop(ind.id, None)
