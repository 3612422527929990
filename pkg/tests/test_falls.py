import math
from collections import Counter, defaultdict

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fsosim.engine import Position, distance, travel_ticks
from fsosim.falls import (
    FALSE_ALARM,
    TRUE_FALL,
    Alarm,
    DeviceAgent,
    ElderlyAgent,
    FallsParams,
    InformalCarer,
    MobilityAgent,
    ProfessionalCarer,
    classify_outcome,
    da_step,
    fuse_device_alarms,
    l2_ca_assign_ic,
    l3_ca_assign_ma_pc,
    run_falls,
)


class Scripted:
    """Stand-in stream returning fixed uniforms (fall, detect1, detect2, fp1, fp2)."""

    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def devices(n, p_fp=1 / 500, p_fn=0.2):
    return [DeviceAgent(10 + i, 1, p_fp, p_fn) for i in range(n)]


def ea():
    return ElderlyAgent(1, Position(5, 5), 0)


def test_params_defaults_and_validation():
    p = FallsParams()
    assert (p.n_elderly, p.n_pc, p.n_ma, p.n_ic) == (30, 6, 5, 0)
    assert p.p_fall == pytest.approx(1 / 600)
    assert p.p_false_positive == pytest.approx(1 / 500)
    assert p.p_false_negative == pytest.approx(0.2)
    with pytest.raises(ValueError):
        FallsParams(p_false_positive=-0.1)
    with pytest.raises(ValueError):
        FallsParams(n_devices=3)
    with pytest.raises(ValueError):
        DeviceAgent(1, 1, 1.5, 0.1)


def test_da_step_one_device_detected_fall():
    fell, alarm = da_step(devices(1), ea(), Scripted([0.0001, 0.9, 0.9, 0.9, 0.9]), 1 / 600)
    assert fell and alarm.truth == TRUE_FALL


def test_da_step_two_devices_second_false_fires():
    fell, alarm = da_step(devices(2), ea(), Scripted([0.9, 0.9, 0.9, 0.9, 0.0001]), 1 / 600)
    assert not fell and alarm.truth == FALSE_ALARM


def test_da_step_guard_blocks_everything():
    e = ea()
    e.non_falling_period = 3
    assert da_step(devices(1), e, Scripted([0.0, 0.9, 0.9, 0.0, 0.0]), 1.0) == (False, None)
    e = ea()
    e.pending_alarm = 4
    assert da_step(devices(2), e, Scripted([0.0, 0.9, 0.9, 0.0, 0.0]), 1.0) == (False, None)


def test_missed_fall_needs_every_device_to_miss():
    assert not fuse_device_alarms(True, [0.1, 0.9], [0.9, 0.9], devices(1))
    assert fuse_device_alarms(True, [0.1, 0.9], [0.9, 0.9], devices(2))
    assert not fuse_device_alarms(True, [0.1, 0.15], [0.9, 0.9], devices(2))


@given(st.booleans(), st.lists(st.floats(0, 1), min_size=2, max_size=2),
       st.lists(st.floats(0, 1), min_size=2, max_size=2))
def test_two_devices_detect_whenever_one_does(fall, det, fp):
    assert fuse_device_alarms(fall, det, fp, devices(2)) >= fuse_device_alarms(fall, det, fp, devices(1))


@pytest.mark.parametrize("n, p_miss", [(1, 0.2), (2, 0.04)])
def test_miss_probability_binomial(n, p_miss):
    trials = 10**6
    u = np.random.default_rng(123).random((trials, 2))
    devs = devices(n, p_fp=0.0)
    fp = (1.0, 1.0)
    misses = sum(not fuse_device_alarms(True, row, fp, devs) for row in u.tolist())
    sigma = math.sqrt(trials * p_miss * (1 - p_miss))
    assert abs(misses - trials * p_miss) <= 3 * sigma


def test_classify_outcome_table():
    assert classify_outcome(True, True) == "TP"
    assert classify_outcome(False, True) == "FP"
    assert classify_outcome(True, False) == "FN"
    assert classify_outcome(False, False) == "TN"


def test_reference_sensitivity_and_specificity_arithmetic():
    assert 195 / (195 + 56) == pytest.approx(0.7768, abs=1e-4)
    assert 147313 / (147313 + 299) == pytest.approx(0.99797, abs=1e-5)


def _alarm(i, ea_id=1):
    return Alarm(i, ea_id, 0, FALSE_ALARM)


def test_l2_nearest_ic_wins():
    ics = [InformalCarer(100, 0), InformalCarer(101, 1)]
    pos = {0: Position(9, 0), 1: Position(4, 0)}
    homes = {1: Position(0, 0)}
    assert l2_ca_assign_ic([_alarm(1)], ics, pos, homes) == [(1, 101)]


def test_l2_no_free_ic_and_capacity():
    busy = [InformalCarer(100, 0, state="dispatched")]
    assert l2_ca_assign_ic([_alarm(1)], busy, {0: Position(0, 0)}, {1: Position(0, 0)}) == []
    one = [InformalCarer(100, 0)]
    out = l2_ca_assign_ic([_alarm(1), _alarm(2), _alarm(3)], one, {0: Position(0, 0)}, {1: Position(1, 1)})
    assert out == [(1, 100)]


def test_l3_needs_both_ma_and_pc():
    mas = [MobilityAgent(1, Position(0, 0))]
    pcs = [ProfessionalCarer(2, state="treating")]
    assert l3_ca_assign_ma_pc([_alarm(1)], mas, pcs) == []
    pcs = [ProfessionalCarer(2)]
    assert l3_ca_assign_ma_pc([_alarm(1)], mas, pcs) == [(1, 1, 2)]


def test_l3_five_alarms_five_mas_six_pcs():
    mas = [MobilityAgent(i, Position(0, 0)) for i in range(5)]
    pcs = [ProfessionalCarer(10 + i) for i in range(6)]
    out = l3_ca_assign_ma_pc([_alarm(i) for i in range(5)], mas, pcs)
    assert len(out) == 5
    assert len({m for _, m, _ in out}) == 5 and len({p for _, _, p in out}) == 5


def test_walk_home_arithmetic():
    assert travel_ticks(10, 0.25) == 40


@pytest.fixture(scope="module")
def runs():
    return {
        "s1": run_falls(FallsParams(), seed=4, ticks=4000),
        "s3": run_falls(FallsParams(n_ic=10, n_devices=2), seed=4, ticks=4000),
    }


def test_forwarding_targets(runs):
    s1 = runs["s1"].log.of_kind("alarm_forwarded")
    assert s1 and all(e.payload["to"] == ["L3"] for e in s1)
    s3 = runs["s3"].log.of_kind("alarm_forwarded")
    assert s3 and all(e.payload["to"] == ["L2", "L3"] for e in s3)
    raised = {e.payload["alarm"]: e.tick for e in runs["s3"].log.of_kind("alarm_raised")}
    assert all(raised[e.payload["alarm"]] == e.tick for e in s3)
    ids = [e.payload["alarm"] for e in s3]
    assert ids == sorted(ids)


def test_alarm_terminal_once_and_wt(runs):
    for w in runs.values():
        raised = {e.payload["alarm"]: e.tick for e in w.log.of_kind("alarm_raised")}
        closed = Counter(e.payload["alarm"] for e in w.log.of_kind("alarm_closed"))
        assert max(closed.values()) == 1
        verified = {}
        for e in w.log.of_kind("verification"):
            verified.setdefault(e.payload["alarm"], e.tick)
        for e in w.log.of_kind("alarm_closed"):
            a = e.payload["alarm"]
            assert e.payload["wt"] == verified[a] - raised[a]


def test_ma_never_without_pc_and_cancel_means_no_treatment(runs):
    for w in runs.values():
        assert all(e.payload["pc"] is not None for e in w.log.of_kind("ma_assigned"))
        canceled = {e.payload["alarm"] for e in w.log.of_kind("cancel")}
        treated = {e.payload["alarm"] for e in w.log.of_kind("treatment_start")}
        assert not canceled & treated


def test_ic_verifications_abort_mas(runs):
    w = runs["s3"]
    assert w.log.of_kind("ma_abort")
    ic_false = {e.payload["alarm"] for e in w.log.of_kind("verification")
                if e.payload["by"] == "ic" and e.payload["truth"] == FALSE_ALARM}
    assert {e.payload["alarm"] for e in w.log.of_kind("ma_abort")} <= ic_false


def test_treatment_duration_and_recovery_period(runs):
    w = runs["s1"]
    model = w.systems[0]
    starts = {e.payload["ea"]: [] for e in w.log.of_kind("treatment_start")}
    by_pc = defaultdict(list)
    for e in w.log.of_kind("treatment_start", "treatment_end"):
        by_pc[e.agent_id].append(e)
    checked = 0
    for evs in by_pc.values():
        for a, b in zip(evs, evs[1:]):
            if a.kind == "treatment_start" and b.kind == "treatment_end":
                assert b.tick - a.tick + 1 == a.payload["duration"]
                home = model.homes[b.payload["ea"]]
                assert b.payload["non_falling_period"] == travel_ticks(distance(model.hospital, home), 0.25)
                checked += 1
    assert checked > 0 and starts


def test_no_alarm_while_pending_or_recovering(runs):
    w = runs["s1"]
    open_by_ea = {}
    blocked_until = {}
    for e in w.log:
        if e.kind == "alarm_raised":
            assert e.agent_id not in open_by_ea
            assert blocked_until.get(e.agent_id, -1) < e.tick
            open_by_ea[e.agent_id] = e.payload["alarm"]
        elif e.kind == "alarm_closed" and e.payload["outcome"] == "verified_false":
            open_by_ea.pop(e.agent_id, None)
        elif e.kind == "treatment_end":
            open_by_ea.pop(e.payload["ea"], None)
            blocked_until[e.payload["ea"]] = e.tick + e.payload["non_falling_period"]


def test_ics_stay_in_bounds(runs):
    m = runs["s3"].systems[0]
    assert (m.ic_pos >= 0).all() and (m.ic_pos[:, 0] < 41).all() and (m.ic_pos[:, 1] < 41).all()
