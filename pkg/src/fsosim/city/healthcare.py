"""Healthcare requests under three dispatch strategies.

A patient's condition has a severity from 1 to 10. Minor cases (1-3) reach a
hospital on their own; the rest need an ambulance. Treatment needs a doctor
able to treat the severity plus ``ceil(severity / 3)`` appliances of the
matching condition type, all from the hospital where treatment happens unless
hospitals share. The request dies if its resources are not all allocated by
the deadline.

* ``Traditional``: a random hospital sends an ambulance blind; on arrival a
  hospital that cannot treat forwards the patient to the next one in a fixed
  ring.
* ``PerfectOracle``: the patient knows where a suitable doctor is free and
  goes straight there, but hospitals never lend appliances; a hospital short
  of appliances redirects the patient.
* ``FSO``: the request climbs the community tree and is allocated at once,
  borrowing doctors, appliances and ambulances across hospitals when needed.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from ..engine import Position, distance, travel_ticks
from ..fso import Escalation, FSOTree, RoleAssignment, ServiceRequest, SocialOverlayNetwork
from .activities import PATIENT, Individual
from .common import Trip

if TYPE_CHECKING:
    from .model import CityModel

MINOR_MAX = 3
AMBULANCE = "ambulance"


def required_appliances(severity: int) -> int:
    return -(-severity // 3)


def treat_role(severity: int) -> str:
    return f"treat:{severity}"


def appliance_role(condition: int) -> str:
    return f"appliance:{condition}"


def doctor_roles(expertise) -> list[str]:
    """Every doctor treats the minor conditions plus three specialities."""
    return [treat_role(s) for s in range(1, MINOR_MAX + 1)] + [treat_role(e) for e in sorted(expertise)]


def treatment_roles(severity: int) -> dict[str, int]:
    return {treat_role(severity): 1, appliance_role(severity): required_appliances(severity)}


def request_roles(severity: int) -> dict[str, int]:
    roles = treatment_roles(severity)
    if severity > MINOR_MAX:
        roles[AMBULANCE] = 1
    return roles


@dataclass(eq=False)
class Hospital:
    id: int
    name: str
    position: Position


@dataclass(frozen=True)
class Doctor:
    id: int
    hospital: int
    expertise: frozenset

    def can_treat(self, severity: int) -> bool:
        return severity <= MINOR_MAX or severity in self.expertise


@dataclass(frozen=True)
class Appliance:
    id: int
    hospital: int
    condition: int


@dataclass(frozen=True)
class Ambulance:
    id: int
    hospital: int


@dataclass(eq=False)
class HealthcareRequest:
    id: int
    patient: int
    severity: int
    issued_at: int
    deadline: int
    strategy: str
    treatment_time: int
    first_choice: int
    querying_ended_at: int | None = None
    outcome: str | None = None  # "treated" | "died"
    hospital: int | None = None
    at_hospital: bool = False
    ambulance: int | None = None
    ambulance_home: bool = True
    treatment_over: bool = False
    failures: int = 0
    son: SocialOverlayNetwork | None = None
    held: list[int] = field(default_factory=list)
    token: int = 0

    @property
    def needs_ambulance(self) -> bool:
        return self.severity > MINOR_MAX

    @property
    def querying_time(self) -> int | None:
        if self.querying_ended_at is None:
            return None
        return self.querying_ended_at - self.issued_at


def allocate_hospital_resources(tree: FSOTree, hospital: Hospital, severity: int,
                                tick: int) -> list[RoleAssignment] | None:
    """Doctor plus appliances from one hospital, all or nothing."""
    req = ServiceRequest(0, "healthcare", treatment_roles(severity), hospital.position, tick)
    return tree.match_notification(hospital.name, req)


class HealthService:
    def __init__(self, model: "CityModel") -> None:
        self.m = model
        self.p = model.params
        self.hospitals: list[Hospital] = []
        self.doctors: dict[int, Doctor] = {}
        self.appliances: dict[int, Appliance] = {}
        self.ambulances: dict[int, Ambulance] = {}
        self.requests: list[HealthcareRequest] = []
        self.waiting: list[HealthcareRequest] = []
        self.epoch = 0
        self._seen = 0
        self._capable: dict[tuple[int, int], bool] = {}

    # -- helpers -----------------------------------------------------------------

    def registry(self, hospital_id: int):
        return self.m.tree.nodes[self.hospitals[hospital_id].name].registry

    def home_of(self, agent: int) -> int:
        for table in (self.ambulances, self.doctors, self.appliances):
            if agent in table:
                return table[agent].hospital
        raise KeyError(agent)

    def _release(self, agent: int) -> None:
        self.registry(self.home_of(agent)).release(agent, self.m.world.tick)
        self.epoch += 1

    def _patient(self, req: HealthcareRequest) -> Individual:
        return self.m.individuals[req.patient]

    def _speed(self, req: HealthcareRequest) -> float:
        if req.ambulance is not None or self._patient(req).owns_car:
            return self.p.vehicle_speed
        return self.p.walk_speed

    def _wait(self, req: HealthcareRequest) -> None:
        self.waiting.append(req)

    # -- entry points ----------------------------------------------------------------

    def issue(self, ind: Individual, t: int) -> HealthcareRequest:
        rng = self.m.rng_health
        # all draws up front so every strategy consumes the stream identically
        severity = rng.integers(1, 10)
        duration = rng.integers(self.p.treatment_min, self.p.treatment_max)
        first = rng.integers(0, len(self.hospitals) - 1)
        req = HealthcareRequest(len(self.requests) + 1, ind.id, severity, t, t + self.p.threshold,
                                self.p.strategy, duration, first)
        self.requests.append(req)
        ind.state = PATIENT
        self.m.world.emit(ind.id, "hc_request", request=req.id, severity=severity, strategy=req.strategy,
                          deadline=req.deadline)
        self.m.agenda.at(req.deadline, self._deadline, req)
        if req.strategy == "FSO":
            if not self._fso_try(req, t):
                self._wait(req)
        elif req.strategy == "Traditional":
            self._trad_start(req, t)
        else:
            self._oracle_choose(req, t, exclude=None)
        return req

    def coordinate(self, t: int) -> None:
        # something was released since the last attempt: retry waiting requests in order
        if self.epoch == self._seen or not self.waiting:
            return
        self._seen = self.epoch
        pending, self.waiting = self.waiting, []
        for req in pending:
            if req.outcome is not None:
                continue
            if req.strategy == "FSO":
                if not self._fso_try(req, t):
                    self._wait(req)
            elif req.strategy == "Traditional":
                self._trad_call_ambulance(req, t, self.hospitals[req.hospital])
            else:
                self._oracle_retry(req, t)

    def _deadline(self, req: HealthcareRequest) -> None:
        if req.outcome is not None:
            return
        t = self.m.world.tick
        req.outcome = "died"
        req.token += 1
        ind = self._patient(req)
        pos = ind.where(t)
        if req.ambulance is not None:
            self._ambulance_back(req.ambulance, pos, t)
            req.ambulance = None
        self.m.world.emit(ind.id, "hc_died", request=req.id, strategy=req.strategy, failures=req.failures)
        self.m.kill(ind)

    def _allocated(self, req: HealthcareRequest, t: int, site: Hospital, inter: bool = False) -> None:
        req.querying_ended_at = t
        req.outcome = "treated"
        req.hospital = site.id
        self.m.world.emit(req.patient, "hc_allocated", request=req.id, strategy=req.strategy,
                          querying=t - req.issued_at, site=site.id, inter_community=inter,
                          failures=req.failures)

    def _ambulance_back(self, amb: int, frm: Position, t: int) -> None:
        home = self.hospitals[self.ambulances[amb].hospital].position
        self.m.agenda.at(t + travel_ticks(distance(frm, home), self.p.vehicle_speed), self._release, amb)

    def _start_treatment(self, req: HealthcareRequest) -> None:
        t = self.m.world.tick
        self.m.world.emit(req.patient, "treatment_start", request=req.id, site=req.hospital,
                          duration=req.treatment_time)
        if self.p.doctor_leaves_after_diagnosis:
            # the doctor has diagnosed and set up the appliances; they carry the treatment
            doc = self._doctor_of(req)
            if req.son is not None:
                self.m.tree.release_member(req.son, doc, t)
                self.epoch += 1
            else:
                req.held.remove(doc)
                self._release(doc)
        self.m.agenda.at(t + req.treatment_time, self._end_treatment, req)

    def _doctor_of(self, req: HealthcareRequest) -> int:
        agents = req.son.agents() if req.son is not None else req.held
        return next(a for a in agents if a in self.doctors)

    def _end_treatment(self, req: HealthcareRequest) -> None:
        t = self.m.world.tick
        req.treatment_over = True
        if req.son is not None:
            tree = self.m.tree
            if req.ambulance_home:
                tree.dissolve_son(req.son, t)
            else:
                for a in req.son.agents():
                    if a != req.ambulance:
                        tree.release_member(req.son, a, t)
            self.epoch += 1
        else:
            for a in req.held:
                self._release(a)
        ind = self._patient(req)
        self.m.world.emit(ind.id, "treatment_end", request=req.id, site=req.hospital)
        self.m.society.make_idle(ind, t)

    # -- FSO ---------------------------------------------------------------------------

    def _feasible(self, roles: dict[str, int]) -> bool:
        for role, n in roles.items():
            free = 0
            for h in self.hospitals:
                free += len(self.registry(h.id).available(role))
            if free < n:
                return False
        return True

    def _fso_try(self, req: HealthcareRequest, t: int) -> bool:
        roles = request_roles(req.severity)
        if not self._feasible(roles):
            return False
        tree = self.m.tree
        ind = self._patient(req)
        pos = ind.where(t)
        ranked = sorted(self.hospitals, key=lambda h: (distance(h.position, pos), h.id))
        sreq = ServiceRequest(req.id, "healthcare", roles, pos, t, origin=ind.id, deadline=req.deadline)
        son = None
        for h in ranked:
            alloc = tree.match_notification(h.name, sreq)
            if alloc is not None:
                son = tree.form_son(alloc, sreq, t)
                break
        if son is None:
            # nobody can do it alone: escalate from the nearest hospital with a free doctor
            tr = treat_role(req.severity)
            main = next((h for h in ranked if self.registry(h.id).available(tr)), ranked[0])
            son = tree.raise_exception(main.name, Escalation(sreq, Counter(roles), main.name), tick=t)
            if son is None:
                return False
        req.son = son
        site = self.hospitals[self.doctors[son.agents(treat_role(req.severity))[0]].hospital]
        self._allocated(req, t, site, inter=son.inter_community)
        v = self.p.vehicle_speed
        if req.needs_ambulance:
            amb = son.agents(AMBULANCE)[0]
            req.ambulance, req.ambulance_home = amb, False
            base = self.hospitals[self.ambulances[amb].hospital].position
            trip = Trip(base, [pos, site.position], t, v)
            ind.trip = Trip(pos, [site.position], trip.reach_tick(1), v)
            ready = max(trip.arrival, ind.trip.arrival)
            self.m.agenda.at(ready, self._fso_ambulance_free, req, site.position)
        else:
            ind.trip = Trip(pos, [site.position], t, self._speed(req))
            ready = ind.trip.arrival
        for a in son.agents():
            src = self.home_of(a)
            if a in self.appliances and src != site.id:
                # a van brings the borrowed appliance over
                self.m.world.emit(a, "resource_transfer", request=req.id, source=src, target=site.id)
                ready = max(ready, t + travel_ticks(distance(self.hospitals[src].position, site.position), v))
        self.m.agenda.at(ready, self._start_treatment, req)
        return True

    def _fso_ambulance_free(self, req: HealthcareRequest, frm: Position) -> None:
        amb = req.ambulance
        home = self.hospitals[self.ambulances[amb].hospital].position
        t = self.m.world.tick
        self.m.agenda.at(t + travel_ticks(distance(frm, home), self.p.vehicle_speed),
                         self._fso_ambulance_home, req)

    def _fso_ambulance_home(self, req: HealthcareRequest) -> None:
        t = self.m.world.tick
        req.ambulance_home = True
        son = req.son
        if req.treatment_over:
            self.m.tree.dissolve_son(son, t)
        else:
            self.m.tree.release_member(son, req.ambulance, t)
        self.epoch += 1

    # -- Traditional ---------------------------------------------------------------------

    def _trad_start(self, req: HealthcareRequest, t: int) -> None:
        h = self.hospitals[req.first_choice]
        req.hospital = h.id
        if req.needs_ambulance:
            self._trad_call_ambulance(req, t, h)
        else:
            self._travel(req, t, h)

    def _trad_call_ambulance(self, req: HealthcareRequest, t: int, h: Hospital) -> bool:
        ind = self._patient(req)
        pos = ind.where(t)
        sreq = ServiceRequest(req.id, "transport", {AMBULANCE: 1}, pos, t, origin=ind.id)
        alloc = self.m.tree.match_notification(h.name, sreq)
        if alloc is None:
            self._wait(req)
            return False
        self._board(req, alloc[0].agent, h, t)
        return True

    def _board(self, req: HealthcareRequest, amb: int, h: Hospital, t: int) -> None:
        ind = self._patient(req)
        pos = ind.where(t)
        v = self.p.vehicle_speed
        req.ambulance = amb
        base = self.hospitals[self.ambulances[amb].hospital].position
        trip = Trip(base, [pos, h.position], t, v)
        ind.trip = Trip(pos, [h.position], trip.reach_tick(1), v)
        req.at_hospital = False
        self.m.agenda.at(max(trip.arrival, ind.trip.arrival), self._arrive, req, h, req.token)

    def _travel(self, req: HealthcareRequest, t: int, h: Hospital) -> None:
        ind = self._patient(req)
        ind.trip = Trip(ind.where(t), [h.position], t, self._speed(req))
        req.hospital = h.id
        req.at_hospital = False
        self.m.agenda.at(ind.trip.arrival, self._arrive, req, h, req.token)

    def _arrive(self, req: HealthcareRequest, h: Hospital, token: int) -> None:
        if req.outcome is not None or token != req.token:
            return
        t = self.m.world.tick
        self._patient(req).settle(t)
        req.hospital = h.id
        req.at_hospital = True
        if self._treat_here(req, h, t):
            return
        req.failures += 1
        self.m.world.emit(req.patient, "hc_rejected", request=req.id, hospital=h.id, strategy=req.strategy)
        if req.strategy == "Traditional":
            self._travel(req, t, self.hospitals[(h.id + 1) % len(self.hospitals)])
        else:
            self._oracle_choose(req, t, exclude=h.id)

    def _treat_here(self, req: HealthcareRequest, h: Hospital, t: int) -> bool:
        alloc = allocate_hospital_resources(self.m.tree, h, req.severity, t)
        if alloc is None:
            return False
        req.held = [a.agent for a in alloc]
        self._allocated(req, t, h)
        if req.ambulance is not None:
            self._ambulance_back(req.ambulance, h.position, t)
            req.ambulance = None
        self.m.agenda.at(t, self._start_treatment, req)
        return True

    # -- Perfect Oracle ----------------------------------------------------------------

    def capable(self, hospital_id: int, severity: int) -> bool:
        """Static capability: an expert on staff and enough appliances owned, busy or not."""
        key = (hospital_id, severity)
        hit = self._capable.get(key)
        if hit is None:
            docs = any(d.hospital == hospital_id and d.can_treat(severity) for d in self.doctors.values())
            owned = sum(1 for a in self.appliances.values()
                        if a.hospital == hospital_id and a.condition == severity)
            hit = self._capable[key] = docs and owned >= required_appliances(severity)
        return hit

    def _oracle_candidates(self, req: HealthcareRequest, pos: Position, exclude: int | None) -> list[Hospital]:
        # the oracle knows what each hospital offers and whether its doctors and
        # ambulances are free right now, but not which appliances are in use
        tr = treat_role(req.severity)
        need_amb = req.needs_ambulance and req.ambulance is None
        out = []
        for h in self.hospitals:
            if h.id == exclude or not self.capable(h.id, req.severity):
                continue
            reg = self.registry(h.id)
            if reg.available(tr) and (not need_amb or reg.available(AMBULANCE)):
                out.append(h)
        out.sort(key=lambda h: (distance(h.position, pos), h.id))
        return out

    def _oracle_choose(self, req: HealthcareRequest, t: int, exclude: int | None) -> None:
        pos = self._patient(req).where(t)
        cands = self._oracle_candidates(req, pos, exclude)
        if not cands:
            self._wait(req)
            return
        h = cands[0]
        req.hospital = h.id
        if req.needs_ambulance and req.ambulance is None:
            sreq = ServiceRequest(req.id, "transport", {AMBULANCE: 1}, pos, t, origin=req.patient)
            alloc = self.m.tree.match_notification(h.name, sreq)
            self._board(req, alloc[0].agent, h, t)
        else:
            self._travel(req, t, h)

    def _oracle_retry(self, req: HealthcareRequest, t: int) -> None:
        if req.at_hospital:
            h = self.hospitals[req.hospital]
            if self._treat_here(req, h, t):
                return
            self._oracle_choose(req, t, exclude=h.id)
        else:
            self._oracle_choose(req, t, exclude=None)
