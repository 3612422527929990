"""Houses on fire.

Every ``fire_interval`` ticks a batch of untouched houses ignites. A burning
house loses ``firelevel`` health per tick; the fire may grow by one unit each
tick, bystanders within the observation radius knock it down by 0.5 each, and
a fire truck by 2 to 5 depending on its crew. With collaboration on, the
house's detector calls the firefighters once health drops below 80.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from ..engine import Position, RngStream, distance
from ..fso import Escalation, ServiceRequest, SocialOverlayNetwork
from .common import Trip

if TYPE_CHECKING:
    from .model import CityModel

HELPER_REDUCTION = 0.5
GROWTH_P = 0.5
FIRE_TRUCK = "fire_truck"


def truck_reduction(firefighters: int) -> int:
    """Firelevel knocked down per tick by a truck with 1-4 firefighters: 2-5."""
    if firefighters <= 0:
        return 0
    return 1 + min(firefighters, 4)


@dataclass(eq=False)
class House:
    id: int
    position: Position
    detector: int
    health: float = 100.0
    firelevel: float = 0.0
    burning: bool = False
    ignited: bool = False

    @property
    def burned(self) -> bool:
        return self.health <= 0


def generate_fire_events(houses: list[House], tick: int, rng: RngStream,
                         interval: int = 100, batch: int = 10) -> list[House]:
    """Ignite up to ``batch`` houses that never burned, on every ``interval``-th tick."""
    if tick <= 0 or tick % interval:
        return []
    fresh = [h for h in houses if not h.ignited and not h.burned]
    lit = rng.sample(fresh, batch)
    for h in lit:
        h.ignited = h.burning = True
        h.firelevel = float(rng.integers(1, 5))
    return lit


def fire_dynamics_step(house: House, helpers: int = 0, firefighters: int = 0, grow: bool = False) -> House:
    """Advance one burning house by a tick.

    Growth and suppression both act on the cumulative firelevel; the house
    then loses what is left of it. A fire knocked to zero goes out without
    further damage.
    """
    if not house.burning:
        return house
    house.firelevel += 1.0 if grow else 0.0
    house.firelevel -= HELPER_REDUCTION * helpers + truck_reduction(firefighters)
    if house.firelevel <= 0:
        house.firelevel = 0.0
        house.burning = False
        return house
    house.health = max(house.health - house.firelevel, 0.0)
    if house.health <= 0:
        house.firelevel = 0.0
        house.burning = False
    return house


@dataclass(eq=False)
class Dispatch:
    truck: int
    son: SocialOverlayNetwork
    arrival: int


class FireService:
    def __init__(self, model: "CityModel") -> None:
        self.m = model
        self.p = model.params
        self.houses: list[House] = []
        self.crew: dict[int, int] = {}
        self.helpers: dict[int, list[int]] = {}  # house id -> helping individuals
        self.dispatch: dict[int, Dispatch] = {}
        self.burned = 0
        self.extinguished = 0

    def generate(self, t: int) -> None:
        lit = generate_fire_events(self.houses, t, self.m.rng_fire, self.p.fire_interval, self.p.fire_batch)
        for h in lit:
            self.m.world.emit(h.id, "ignition", firelevel=h.firelevel)

    def sense(self, t: int) -> None:
        burning = [h for h in self.houses if h.burning]
        if not burning:
            return
        self._recruit(burning, t)
        if self.p.collaboration:
            for h in burning:
                if h.health < self.p.escalate_below and h.id not in self.dispatch:
                    self._call_truck(h, t)

    def _recruit(self, burning: list[House], t: int) -> None:
        society = self.m.society
        cands = [ind for ind in self.m.individuals.values() if society.can_help(ind)]
        if not cands:
            return
        pos = np.array([ind.where(t) for ind in cands])
        hp = np.array([h.position for h in burning])
        d = np.hypot(pos[:, None, 0] - hp[None, :, 0], pos[:, None, 1] - hp[None, :, 1])
        nearest = d.argmin(axis=1)
        for i in np.flatnonzero(d[np.arange(len(cands)), nearest] <= self.p.observe_radius):
            ind, h = cands[i], burning[nearest[i]]
            society.pause(ind, t)
            self.helpers.setdefault(h.id, []).append(ind.id)
            self.m.world.emit(ind.id, "fire_help", house=h.id)

    def _call_truck(self, h: House, t: int) -> None:
        m = self.m
        req = ServiceRequest(m.next_request_id(), "fire", {FIRE_TRUCK: 1}, h.position, t, origin=h.detector)
        son = m.tree.raise_exception(m.residents, Escalation(req, Counter(req.roles), m.residents), tick=t)
        if son is None:
            return
        truck = son.agents(FIRE_TRUCK)[0]
        trip = Trip(m.trucks.where(truck, t), [h.position], t, self.p.vehicle_speed)
        m.trucks.dispatch(truck, trip)
        self.dispatch[h.id] = Dispatch(truck, son, trip.arrival)
        m.world.emit(truck, "truck_dispatched", house=h.id, crew=self.crew[truck], eta=trip.arrival)

    def progress(self, t: int) -> None:
        rng = self.m.rng_fire
        for h in self.houses:
            if not h.burning:
                continue
            grow = rng.bernoulli(GROWTH_P)
            n_help = len(self.helpers.get(h.id, ()))
            d = self.dispatch.get(h.id)
            ff = self.crew[d.truck] if d is not None and t >= d.arrival else 0
            fire_dynamics_step(h, n_help, ff, grow)
            if not h.burning:
                self._fire_over(h, t)

    def _fire_over(self, h: House, t: int) -> None:
        m = self.m
        if h.burned:
            self.burned += 1
            m.world.emit(h.id, "house_burned")
        else:
            self.extinguished += 1
            m.world.emit(h.id, "fire_out", health=h.health)
        for iid in self.helpers.pop(h.id, []):
            m.society.resume(m.individuals[iid], t)
        d = self.dispatch.pop(h.id, None)
        if d is not None:
            m.trucks.park(d.truck, m.trucks.where(d.truck, t))
            m.tree.dissolve_son(d.son, t)

    def forget(self, iid: int) -> None:
        for helpers in self.helpers.values():
            if iid in helpers:
                helpers.remove(iid)
