"""Ambient-assisted-living falls model.

Elderly agents (EA) live at fixed homes and wear one or two device agents
(DA). Alarms climb a three-level community hierarchy: the level-1 coordinator
forwards each alarm at once to the level-2 coordinator, which dispatches
informal carers (IC) to verify it, and to the level-3 coordinator (the
hospital), which reserves a mobility agent (MA) together with a professional
carer (PC). An IC that finds a false alarm cancels the emergency call; an MA
that reaches a true fall brings the EA to hospital for treatment.

Scenario tags: ``S1`` is one device per EA, ``S2`` two devices; either one
with ICs added is the third scenario family and is told apart by its IC count.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .engine import (
    WALK_SPEED,
    Position,
    RngStream,
    World,
    WorldConfig,
    distance,
    move_toward,
    travel_ticks,
)

TRUE_FALL = "true_fall"
FALSE_ALARM = "false_alarm"

# draw columns per EA and tick: fall, detect x2, false-fire x2
_MAX_DEVICES = 2
_COLS = 1 + 2 * _MAX_DEVICES


@dataclass
class FallsParams:
    n_elderly: int = 30
    n_devices: int = 1
    n_ic: int = 0
    n_pc: int = 6
    n_ma: int = 5
    p_fall: float = 1 / 600
    p_false_positive: float = 1 / 500
    p_false_negative: float = 100 / 500
    treatment_min: int = 50
    treatment_max: int = 150
    walk_speed: float = WALK_SPEED
    # calibrated on the S1 / no-IC reference row (avg MA cost ~68, avg WT ~119)
    vehicle_speed: float = 0.6
    wander_step: float = 1.0
    cost_includes_return: bool = True

    def __post_init__(self) -> None:
        for name in ("p_fall", "p_false_positive", "p_false_negative"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.n_devices not in (1, 2):
            raise ValueError("n_devices must be 1 or 2")
        if min(self.n_elderly, self.n_pc, self.n_ma) < 1 or self.n_ic < 0:
            raise ValueError("population sizes must be positive (ICs may be 0)")
        if not 1 <= self.treatment_min <= self.treatment_max:
            raise ValueError("need 1 <= treatment_min <= treatment_max")

    @property
    def scenario(self) -> str:
        return "S1" if self.n_devices == 1 else "S2"


@dataclass(slots=True)
class ElderlyAgent:
    id: int
    home: Position
    index: int
    non_falling_period: int = 0
    fallen: bool = False
    pending_alarm: int | None = None
    away: bool = False

    @property
    def monitorable(self) -> bool:
        return not self.away and self.non_falling_period == 0 and self.pending_alarm is None


@dataclass(slots=True)
class DeviceAgent:
    id: int
    ea_id: int
    p_false_positive: float
    p_false_negative: float

    def __post_init__(self) -> None:
        if not (0 <= self.p_false_positive <= 1 and 0 <= self.p_false_negative <= 1):
            raise ValueError("device probabilities must lie in [0, 1]")


@dataclass(slots=True)
class Alarm:
    id: int
    ea_id: int
    raised_at: int
    truth: str
    state: str = "open"  # open | confirmed_true | verified_false | treated
    verified_at: int | None = None
    verified_by: str | None = None
    ma_arrived_at: int | None = None
    ic: int | None = None
    ma: int | None = None
    pc: int | None = None

    @property
    def closed(self) -> bool:
        return self.state in ("verified_false", "treated")

    def waiting_time(self) -> int | None:
        # clock stops at the first verification, by IC or MA
        if not self.closed:
            return None
        return self.verified_at - self.raised_at


@dataclass(slots=True)
class InformalCarer:
    id: int
    index: int
    state: str = "wandering"  # wandering | dispatched
    alarm: int | None = None
    busy_cycles: int = 0


@dataclass(slots=True)
class MobilityAgent:
    id: int
    position: Position
    state: str = "idle"  # idle | en_route | aborting | transporting | returning
    alarm: int | None = None
    pc: int | None = None
    busy_cycles: int = 0


@dataclass(slots=True)
class ProfessionalCarer:
    id: int
    state: str = "idle"  # idle | reserved | treating
    alarm: int | None = None
    ea: int | None = None
    remaining: int = 0


# --------------------------------------------------------------------------
# pure decision rules

def fuse_device_alarms(fall: bool, detect_draws, false_fire_draws, devices) -> bool:
    """EA-level alarm from its devices: any detection or false firing (OR).

    A fall goes unreported only if every device misses it.
    """
    for d, u_det, u_fp in zip(devices, detect_draws, false_fire_draws):
        if fall and u_det >= d.p_false_negative:
            return True
        if u_fp < d.p_false_positive:
            return True
    return False


def da_step(devices, ea: ElderlyAgent, rng: RngStream, p_fall: float) -> tuple[bool, Alarm | None]:
    """Sense one EA for one tick with scalar draws.

    Returns ``(fell, alarm)``. Nothing happens for an EA that is away, in its
    non-falling period or already has an open alarm.
    """
    draws = [rng.random() for _ in range(_COLS)]
    if not ea.monitorable:
        return False, None
    fall = draws[0] < p_fall
    det = draws[1:1 + _MAX_DEVICES]
    fp = draws[1 + _MAX_DEVICES:]
    if fuse_device_alarms(fall, det, fp, devices):
        return fall, Alarm(-1, ea.id, -1, TRUE_FALL if fall else FALSE_ALARM)
    return fall, None


def classify_outcome(fall: bool, alarm: bool) -> str:
    if fall:
        return "TP" if alarm else "FN"
    return "FP" if alarm else "TN"


def l2_ca_assign_ic(queue, ics, ic_positions, homes) -> list[tuple[int, int]]:
    """Match queued alarms (FIFO) to the nearest wandering IC.

    ``queue`` holds alarms, ``ic_positions`` maps IC index to position and
    ``homes`` maps EA id to home. Ties go to the lowest IC id. Returns
    ``(alarm id, ic id)`` pairs; unmatched alarms are left for later.
    """
    free = [ic for ic in ics if ic.state == "wandering"]
    out = []
    for alarm in queue:
        if not free:
            break
        home = homes[alarm.ea_id]
        best = min(free, key=lambda ic: (distance(ic_positions[ic.index], home), ic.id))
        free.remove(best)
        out.append((alarm.id, best.id))
    return out


def l3_ca_assign_ma_pc(queue, mas, pcs) -> list[tuple[int, int, int]]:
    """Serve queued alarms while an idle MA *and* an idle PC both exist.

    Returns ``(alarm id, ma id, pc id)`` triples, lowest ids first.
    """
    free_ma = [m for m in mas if m.state == "idle"]
    free_pc = [p for p in pcs if p.state == "idle"]
    out = []
    for alarm, ma, pc in zip(queue, free_ma, free_pc):
        out.append((alarm.id, ma.id, pc.id))
    return out


# --------------------------------------------------------------------------
# the model

class FallsModel:
    """World system running one falls scenario."""

    def __init__(self, params: FallsParams | None = None) -> None:
        self.params = params or FallsParams()

    # -- setup ---------------------------------------------------------------

    def attach(self, world: World) -> None:
        p = self.params
        self.world = world
        cfg: WorldConfig = world.config
        place = world.rng["placement"]
        self.sense_rng = world.rng["falls"]
        self.wander_rng = world.rng["wander"]
        self.treat_rng = world.rng["treatment"]

        ids = iter(range(1, 10**9))
        self.hospital = place.position(cfg)
        self.elderly = [ElderlyAgent(next(ids), place.position(cfg), i) for i in range(p.n_elderly)]
        self.ea_by_id = {ea.id: ea for ea in self.elderly}
        self.homes = {ea.id: ea.home for ea in self.elderly}
        self.devices = {
            ea.id: [DeviceAgent(next(ids), ea.id, p.p_false_positive, p.p_false_negative) for _ in range(p.n_devices)]
            for ea in self.elderly
        }
        self.ics = [InformalCarer(next(ids), i) for i in range(p.n_ic)]
        self.ic_pos = np.array([place.position(cfg) for _ in self.ics], dtype=float).reshape(-1, 2)
        self.ic_by_id = {ic.id: ic for ic in self.ics}
        self.mas = [MobilityAgent(next(ids), self.hospital) for _ in range(p.n_ma)]
        self.ma_by_id = {m.id: m for m in self.mas}
        self.pcs = [ProfessionalCarer(next(ids)) for _ in range(p.n_pc)]
        self.pc_by_id = {c.id: c for c in self.pcs}

        self.alarms: dict[int, Alarm] = {}
        self._alarm_ids = 0
        self.new_alarms: list[Alarm] = []
        self.l2_queue: deque[Alarm] = deque()
        self.l3_queue: deque[Alarm] = deque()

        self.monitorable = np.ones(p.n_elderly, dtype=bool)
        self._p_fp = np.array([p.p_false_positive] * p.n_devices, dtype=float)
        self.tallies = {"TP": 0, "FP": 0, "FN": 0, "TN": 0}
        self._xmax = math.nextafter(cfg.width, 0.0)
        self._ymax = math.nextafter(cfg.height, 0.0)

    def ic_position(self, ic: InformalCarer) -> Position:
        x, y = self.ic_pos[ic.index]
        return Position(float(x), float(y))

    def _set_monitorable(self, ea: ElderlyAgent) -> None:
        self.monitorable[ea.index] = ea.monitorable

    # -- phase 2: device sensing ----------------------------------------------

    def sense(self, world: World) -> None:
        p = self.params
        u = self.sense_rng.generator.random((p.n_elderly, _COLS))
        cand = u[:, 0] < p.p_fall
        for k in range(p.n_devices):
            cand |= u[:, 1 + _MAX_DEVICES + k] < self._p_fp[k]
        n_mon = int(np.count_nonzero(self.monitorable))
        events = 0
        for i in np.flatnonzero(cand & self.monitorable):
            ea = self.elderly[i]
            row = u[i]
            fall = bool(row[0] < p.p_fall)
            alarm = fuse_device_alarms(fall, row[1:1 + _MAX_DEVICES], row[1 + _MAX_DEVICES:], self.devices[ea.id])
            outcome = classify_outcome(fall, alarm)
            self.tallies[outcome] += 1
            events += 1
            if fall:
                world.emit(ea.id, "fall", detected=alarm)
            if alarm:
                self._raise(world, ea, TRUE_FALL if fall else FALSE_ALARM)
        self.tallies["TN"] += n_mon - events

    def _raise(self, world: World, ea: ElderlyAgent, truth: str) -> Alarm:
        self._alarm_ids += 1
        a = Alarm(self._alarm_ids, ea.id, world.tick, truth)
        self.alarms[a.id] = a
        ea.pending_alarm = a.id
        ea.fallen = truth == TRUE_FALL
        self._set_monitorable(ea)
        self.new_alarms.append(a)
        world.emit(ea.id, "alarm_raised", alarm=a.id, truth=truth)
        return a

    # -- phase 3: coordinators --------------------------------------------------

    def coordinate(self, world: World) -> None:
        for a in self.new_alarms:
            self.l1_ca_handle_alarm(world, a)
        self.new_alarms = []
        self._prune_queues()

        if self.l2_queue and self.ics:
            for alarm_id, ic_id in l2_ca_assign_ic(list(self.l2_queue), self.ics, self.ic_pos, self.homes):
                alarm, ic = self.alarms[alarm_id], self.ic_by_id[ic_id]
                self.l2_queue.remove(alarm)
                alarm.ic = ic.id
                ic.state, ic.alarm = "dispatched", alarm.id
                world.emit(ic.id, "ic_assigned", alarm=alarm.id)

        if self.l3_queue:
            for alarm_id, ma_id, pc_id in l3_ca_assign_ma_pc(list(self.l3_queue), self.mas, self.pcs):
                alarm, ma, pc = self.alarms[alarm_id], self.ma_by_id[ma_id], self.pc_by_id[pc_id]
                self.l3_queue.remove(alarm)
                alarm.ma, alarm.pc = ma.id, pc.id
                ma.state, ma.alarm, ma.pc = "en_route", alarm.id, pc.id
                pc.state, pc.alarm = "reserved", alarm.id
                world.emit(ma.id, "ma_assigned", alarm=alarm.id, pc=pc.id)

    def l1_ca_handle_alarm(self, world: World, alarm: Alarm) -> list[str]:
        targets = []
        if self.ics:
            self.l2_queue.append(alarm)
            targets.append("L2")
        self.l3_queue.append(alarm)
        targets.append("L3")
        world.emit("L1", "alarm_forwarded", alarm=alarm.id, to=targets)
        return targets

    def _prune_queues(self) -> None:
        # L2 only serves alarms nobody has verified yet
        if any(a.state != "open" for a in self.l2_queue):
            self.l2_queue = deque(a for a in self.l2_queue if a.state == "open")
        if any(a.closed for a in self.l3_queue):
            self.l3_queue = deque(a for a in self.l3_queue if not a.closed)

    # -- phase 4: movement ------------------------------------------------------

    def move(self, world: World) -> None:
        self._wander()
        for ic in self.ics:
            if ic.state == "dispatched":
                self.ic_step(world, ic)
        for ma in self.mas:
            if ma.state != "idle":
                self.ma_step(world, ma)

    def _wander(self) -> None:
        n = len(self.ics)
        if not n:
            return
        theta = self.wander_rng.generator.random(n) * (2 * math.pi)
        mask = np.fromiter((ic.state == "wandering" for ic in self.ics), dtype=bool, count=n)
        step = self.params.wander_step
        self.ic_pos[mask, 0] += step * np.cos(theta[mask])
        self.ic_pos[mask, 1] += step * np.sin(theta[mask])
        np.clip(self.ic_pos[:, 0], 0.0, self._xmax, out=self.ic_pos[:, 0])
        np.clip(self.ic_pos[:, 1], 0.0, self._ymax, out=self.ic_pos[:, 1])

    def ic_step(self, world: World, ic: InformalCarer) -> None:
        alarm = self.alarms[ic.alarm]
        ic.busy_cycles += 1
        if alarm.state != "open":
            # somebody else verified first; the visit is called off
            self._release_ic(world, ic)
            return
        home = self.homes[alarm.ea_id]
        pos, arrived = move_toward(self.ic_position(ic), home, self.params.vehicle_speed, world.config)
        self.ic_pos[ic.index] = pos
        if not arrived:
            return
        alarm.verified_at, alarm.verified_by = world.tick, "ic"
        world.emit(ic.id, "verification", alarm=alarm.id, by="ic", truth=alarm.truth)
        if alarm.truth == FALSE_ALARM:
            self._close_false(world, alarm)
            world.emit(ic.id, "cancel", alarm=alarm.id, to="L3")
            self._cancel_l3(world, alarm)
        else:
            alarm.state = "confirmed_true"
        self._release_ic(world, ic)

    def _release_ic(self, world: World, ic: InformalCarer) -> None:
        world.emit(ic.id, "cost", resource="volunteer", cycles=ic.busy_cycles)
        ic.state, ic.alarm, ic.busy_cycles = "wandering", None, 0

    def _cancel_l3(self, world: World, alarm: Alarm) -> None:
        """Free the reserved PC and turn an en-route MA around."""
        if alarm.pc is not None:
            pc = self.pc_by_id[alarm.pc]
            if pc.state == "reserved" and pc.alarm == alarm.id:
                pc.state, pc.alarm = "idle", None
        if alarm.ma is not None:
            ma = self.ma_by_id[alarm.ma]
            if ma.alarm == alarm.id and ma.state == "en_route":
                ma.state, ma.alarm, ma.pc = "aborting", None, None
                world.emit(ma.id, "ma_abort", alarm=alarm.id)

    def _close_false(self, world: World, alarm: Alarm) -> None:
        alarm.state = "verified_false"
        ea = self.ea_by_id[alarm.ea_id]
        ea.pending_alarm = None
        ea.fallen = False
        self._set_monitorable(ea)
        world.emit(alarm.ea_id, "alarm_closed", alarm=alarm.id, outcome="verified_false",
                   wt=alarm.waiting_time(), by=alarm.verified_by)

    def ma_step(self, world: World, ma: MobilityAgent) -> None:
        p = self.params
        if ma.state in ("aborting", "returning") and not p.cost_includes_return:
            pass
        else:
            ma.busy_cycles += 1
        if ma.state == "en_route":
            alarm = self.alarms[ma.alarm]
            home = self.homes[alarm.ea_id]
            ma.position, arrived = move_toward(ma.position, home, p.vehicle_speed, world.config)
            if not arrived:
                return
            alarm.ma_arrived_at = world.tick
            if alarm.state == "open":
                alarm.verified_at, alarm.verified_by = world.tick, "ma"
                world.emit(ma.id, "verification", alarm=alarm.id, by="ma", truth=alarm.truth)
                if alarm.truth == FALSE_ALARM:
                    self._close_false(world, alarm)
                    world.emit(ma.id, "cancel", alarm=alarm.id, to="L2")
                    pc = self.pc_by_id[ma.pc]
                    pc.state, pc.alarm = "idle", None
                    ma.state, ma.alarm, ma.pc = "returning", None, None
                    return
                alarm.state = "confirmed_true"
            ea = self.ea_by_id[alarm.ea_id]
            ea.away = True
            self._set_monitorable(ea)
            ma.state = "transporting"
            world.emit(ma.id, "intervention", alarm=alarm.id, ea=ea.id)
        elif ma.state == "transporting":
            ma.position, arrived = move_toward(ma.position, self.hospital, p.vehicle_speed, world.config)
            if arrived:
                alarm = self.alarms[ma.alarm]
                pc = self.pc_by_id[ma.pc]
                pc.state, pc.ea = "treating", alarm.ea_id
                pc.remaining = self.treat_rng.integers(p.treatment_min, p.treatment_max)
                alarm.state = "treated"
                world.emit(pc.id, "treatment_start", alarm=alarm.id, ea=alarm.ea_id, duration=pc.remaining)
                world.emit(alarm.ea_id, "alarm_closed", alarm=alarm.id, outcome="treated",
                           wt=alarm.waiting_time(), by=alarm.verified_by)
                self._ma_idle(world, ma)
        else:  # aborting / returning
            ma.position, arrived = move_toward(ma.position, self.hospital, p.vehicle_speed, world.config)
            if arrived:
                self._ma_idle(world, ma)

    def _ma_idle(self, world: World, ma: MobilityAgent) -> None:
        world.emit(ma.id, "cost", resource="ambulance", cycles=ma.busy_cycles)
        ma.state, ma.alarm, ma.pc, ma.busy_cycles = "idle", None, None, 0

    # -- phase 5: treatment and recovery ------------------------------------------

    def progress(self, world: World) -> None:
        for ea in self.elderly:
            if ea.non_falling_period > 0:
                ea.non_falling_period -= 1
                if ea.non_falling_period == 0:
                    self._set_monitorable(ea)
        for pc in self.pcs:
            if pc.state == "treating":
                self.pc_step(world, pc)

    def pc_step(self, world: World, pc: ProfessionalCarer) -> None:
        pc.remaining -= 1
        if pc.remaining > 0:
            return
        ea = self.ea_by_id[pc.ea]
        ea.away = False
        ea.pending_alarm = None
        ea.fallen = False
        ea.non_falling_period = travel_ticks(distance(self.hospital, ea.home), self.params.walk_speed)
        self._set_monitorable(ea)
        world.emit(pc.id, "treatment_end", ea=ea.id, non_falling_period=ea.non_falling_period)
        pc.state, pc.ea, pc.alarm = "idle", None, None

    # -- end of run -----------------------------------------------------------------

    def finish(self, world: World) -> None:
        for ma in self.mas:
            if ma.busy_cycles:
                world.emit(ma.id, "cost", resource="ambulance", cycles=ma.busy_cycles)
                ma.busy_cycles = 0
        for ic in self.ics:
            if ic.busy_cycles:
                world.emit(ic.id, "cost", resource="volunteer", cycles=ic.busy_cycles)
                ic.busy_cycles = 0
        open_alarms = sum(1 for a in self.alarms.values() if not a.closed)
        world.emit("world", "run_end", scenario="falls", variant=self.params.scenario,
                   ic_count=self.params.n_ic, devices=self.params.n_devices,
                   seed=world.config.master_seed, max_ticks=world.config.max_ticks,
                   tn=self.tallies["TN"], open_alarms=open_alarms)


def build_falls_world(params: FallsParams | None = None, seed: int = 0, ticks: int = 10000,
                      width: int = 41, height: int = 41) -> World:
    cfg = WorldConfig(width=width, height=height, max_ticks=ticks, master_seed=seed)
    return World(cfg, [FallsModel(params or FallsParams())])


def run_falls(params: FallsParams | None = None, seed: int = 0, ticks: int = 10000, **kw) -> World:
    return build_falls_world(params, seed, ticks, **kw).run()
