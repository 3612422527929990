"""The city world: community tree, placement and phase wiring."""
from __future__ import annotations

from dataclasses import asdict

from ..engine import Position, World, WorldConfig
from ..fso import FSOTree
from .activities import DEAD, Fleet, Individual, Society
from .common import Agenda, CityParams
from .fire import FIRE_TRUCK, FireService, House
from .healthcare import (
    AMBULANCE,
    Ambulance,
    Appliance,
    Doctor,
    HealthService,
    Hospital,
    appliance_role,
    doctor_roles,
)

ROOT = "emergency_response"
RESIDENTS = "local_residents"
FIREFIGHTERS = "firefighters"

WANDER_STEP = 1.0


def hospital_names(params: CityParams) -> list[str]:
    return [f"hospital_{k}" for k in range(params.n_hospitals)]


def default_tree_edges(params: CityParams) -> list[tuple[str, str | None]]:
    """Emergency response at the top; residents, firefighters and hospitals below."""
    edges: list[tuple[str, str | None]] = [(ROOT, None), (RESIDENTS, ROOT), (FIREFIGHTERS, ROOT)]
    edges += [(h, ROOT) for h in hospital_names(params)]
    return edges


class CityModel:
    """Individuals, hospitals, taxis and (optionally) burning houses.

    Placement is drawn first, resources before people, so the hospitals and
    their staff are identical across strategies and population sizes for a
    given seed.
    """

    def __init__(self, params: CityParams | None = None, tree_edges=None) -> None:
        self.params = params or CityParams()
        self.tree_edges = list(tree_edges) if tree_edges is not None else default_tree_edges(self.params)
        self.individuals: dict[int, Individual] = {}
        self._ids = 0
        self._req_ids = 0

    def _new_id(self) -> int:
        self._ids += 1
        return self._ids

    def next_request_id(self) -> int:
        self._req_ids += 1
        return self._req_ids

    # -- construction ----------------------------------------------------------------

    def attach(self, world: World) -> None:
        p = self.params
        self.world = world
        cfg = world.config
        self.agenda = Agenda()
        self.rng_activity = world.rng["activity"]
        self.rng_health = world.rng["health"]
        self.rng_fire = world.rng["fire"]
        self.rng_vehicles = world.rng["vehicles"]
        place = world.rng["placement"]

        self.society = Society(self)
        self.health = HealthService(self)
        self.fire = FireService(self)

        tree = self.tree = FSOTree.from_edges(self.tree_edges, leaf_level=1, locate=self._locate)
        missing = {RESIDENTS, FIREFIGHTERS, *hospital_names(p)} - set(tree.nodes)
        if missing:
            raise ValueError(f"community tree lacks {sorted(missing)}")
        self.residents = RESIDENTS

        hs = self.health
        for k in range(p.n_hospitals):
            name = f"hospital_{k}"
            hs.hospitals.append(Hospital(k, name, place.position(cfg)))
        for _ in range(p.n_doctors):
            h = hs.hospitals[place.integers(0, p.n_hospitals - 1)]
            doc = Doctor(self._new_id(), h.id, frozenset(place.sample(range(4, 11), 3)))
            hs.doctors[doc.id] = doc
            self._offer(h.name, doc.id, doctor_roles(doc.expertise), h.position)
        for _ in range(p.n_ambulances):
            h = hs.hospitals[place.integers(0, p.n_hospitals - 1)]
            amb = Ambulance(self._new_id(), h.id)
            hs.ambulances[amb.id] = amb
            self._offer(h.name, amb.id, [AMBULANCE], h.position)
        for _ in range(p.n_appliances):
            h = hs.hospitals[place.integers(0, p.n_hospitals - 1)]
            app = Appliance(self._new_id(), h.id, place.integers(1, 10))
            hs.appliances[app.id] = app
            self._offer(h.name, app.id, [appliance_role(app.condition)], h.position)

        self.offices = [place.position(cfg) for _ in range(p.n_offices)]
        self.market = place.position(cfg)
        self.park = place.position(cfg)

        taxi_ids = [self._new_id() for _ in range(p.n_taxis)]
        self.taxis = Fleet(taxi_ids, [place.position(cfg) for _ in taxi_ids], cfg.width, cfg.height)
        for tid in taxi_ids:
            self._offer(RESIDENTS, tid, ["taxi"], self.taxis.where(tid, 0))

        for _ in range(p.n_houses):
            hid, det = self._new_id(), self._new_id()
            h = House(hid, place.position(cfg), det)
            self.fire.houses.append(h)
            tree.add_member(RESIDENTS, det)

        truck_ids = [self._new_id() for _ in range(p.n_trucks)]
        self.trucks = Fleet(truck_ids, [place.position(cfg) for _ in truck_ids], cfg.width, cfg.height)
        crew = dict.fromkeys(truck_ids, 1)
        for _ in range(p.n_firefighters - p.n_trucks):
            room = [t for t in truck_ids if crew[t] < 4]
            crew[place.choice(room)] += 1
        self.fire.crew = crew
        for tid in truck_ids:
            self._offer(FIREFIGHTERS, tid, [FIRE_TRUCK], self.trucks.where(tid, 0))

        for _ in range(p.n_individuals):
            ind = Individual(self._new_id(), place.position(cfg), place.bernoulli(p.car_owner_fraction),
                             place.integers(0, p.n_offices - 1))
            self.individuals[ind.id] = ind
            tree.add_member(RESIDENTS, ind.id)
            self.society.idle.add(ind.id)

    def _offer(self, community: str, agent: int, roles, position: Position) -> None:
        self.tree.add_member(community, agent)
        reg = self.tree.nodes[community].registry
        for r in roles:
            reg.offer(agent, r, position)

    def _locate(self, agent: int):
        t = self.world.tick
        if agent in self.taxis:
            return self.taxis.where(agent, t)
        if agent in self.trucks:
            return self.trucks.where(agent, t)
        return None

    def kill(self, ind: Individual) -> None:
        ind.state = DEAD
        ind.token += 1
        ind.trip = None
        self.society.forget(ind)
        self.fire.forget(ind.id)
        self.tree.remove_member(ind.id)
        self.world.emit(ind.id, "death")

    # -- phases ---------------------------------------------------------------------

    def generate_events(self, world: World) -> None:
        t = world.tick
        if self.fire.houses:
            self.fire.generate(t)
        self.society.generate(t)

    def sense(self, world: World) -> None:
        if self.fire.houses:
            self.fire.sense(world.tick)

    def coordinate(self, world: World) -> None:
        t = world.tick
        self.society.coordinate(t)
        self.health.coordinate(t)

    def move(self, world: World) -> None:
        self.taxis.wander(self.rng_vehicles, WANDER_STEP)
        self.trucks.wander(self.rng_vehicles, WANDER_STEP)

    def progress(self, world: World) -> None:
        self.agenda.run_due(world.tick)
        if self.fire.houses:
            self.fire.progress(world.tick)

    def finish(self, world: World) -> None:
        p = self.params
        open_requests = sum(1 for r in self.health.requests if r.outcome is None)
        world.emit(None, "run_end", scenario="fire" if p.fires else "city", strategy=p.strategy,
                   threshold=p.threshold, individuals=p.n_individuals, houses=p.n_houses,
                   seed=world.config.master_seed, max_ticks=world.config.max_ticks,
                   open_requests=open_requests, params=asdict(p))


def build_city_world(params: CityParams | None = None, seed: int = 0, ticks: int = 3000,
                     width: int = 41, height: int = 41, tree_edges=None) -> World:
    cfg = WorldConfig(width=width, height=height, max_ticks=ticks, master_seed=seed)
    return World(cfg, [CityModel(params, tree_edges)])


def run_city(params: CityParams | None = None, seed: int = 0, ticks: int = 3000, **kw) -> World:
    return build_city_world(params, seed, ticks, **kw).run()
