import itertools

import pytest
from hypothesis import given, settings, strategies as st

from fsosim.mutualism import (
    ActionDomain,
    ActionMap,
    GroupActivity,
    Significance,
    UnknownAction,
    check_extended_precondition,
    check_mutualistic_precondition,
    map_action,
    merge_group_activity,
)

N, Z, P = Significance.NEGATIVE, Significance.NEUTRAL, Significance.POSITIVE
sig = st.sampled_from([N, Z, P])


@st.composite
def paired_domains(draw, max_size=6):
    n = draw(st.integers(1, max_size))
    xs = [f"a{i}" for i in range(n)]
    ys = [f"b{i}" for i in range(n)]
    perm = draw(st.permutations(ys))
    amap = ActionMap(zip(xs, perm))
    # each domain grades its own actions and the other's (mapped) actions
    x = ActionDomain("X", {a: draw(sig) for a in xs})
    y = ActionDomain("Y", {b: draw(sig) for b in ys})
    return x, y, amap


def brute_force(x, y, amap, strict):
    """Double existential scan over every action pair."""
    def side(src, dst, pairs):
        for a, b in pairs:
            if strict and src.evals[a] < Z:
                continue
            if dst.evals[b] == P:
                return True
        return False
    fwd = amap.pairs()
    inv = [(b, a) for a, b in fwd]
    return side(x, y, fwd) and side(y, x, inv)


def test_map_action_examples():
    m = ActionMap({"a1": "b1"})
    assert map_action(m, "a1") == "b1"
    assert map_action(m, "b1", "inverse") == "a1"
    with pytest.raises(UnknownAction):
        map_action(m, "zz")
    with pytest.raises(ValueError):
        map_action(m, "a1", "sideways")


def test_non_bijective_map_rejected():
    with pytest.raises(ValueError):
        ActionMap([("a", "b"), ("c", "b")])


def test_random_50_pair_bijection_roundtrip():
    import random
    rnd = random.Random(4)
    ys = [f"b{i}" for i in range(50)]
    rnd.shuffle(ys)
    m = ActionMap(zip((f"a{i}" for i in range(50)), ys))
    for a, b in m.pairs():
        assert map_action(m, map_action(m, a), "inverse") == a
        assert map_action(m, map_action(m, b, "inverse")) == b


def test_minimal_witness_true():
    x = ActionDomain("X", {"a1": Z, "a2": P})
    y = ActionDomain("Y", {"b1": P, "b2": Z})
    m = ActionMap({"a1": "b1", "a2": "b2"})
    assert check_mutualistic_precondition(x, y, m)


def test_negative_blocks_strict_but_not_extended():
    x = ActionDomain("X", {"a1": N})
    y = ActionDomain("Y", {"b1": N})
    m = ActionMap({"a1": "b1"})
    assert not check_mutualistic_precondition(x, y, m)
    # symmetric witness where each side pays a cost but helps the other
    x = ActionDomain("X", {"a1": N, "a2": P})
    y = ActionDomain("Y", {"b1": P, "b2": N})
    m = ActionMap({"a1": "b1", "a2": "b2"})
    assert check_extended_precondition(x, y, m)
    assert not check_mutualistic_precondition(x, y, m)


def test_empty_witness_is_false():
    x = ActionDomain("X", {"a1": P})
    y = ActionDomain("Y", {"b1": Z})
    m = ActionMap({"a1": "b1"})
    assert not check_extended_precondition(x, y, m)


@settings(max_examples=1000)
@given(paired_domains())
def test_checks_match_brute_force_and_strict_implies_extended(d):
    x, y, m = d
    strict = check_mutualistic_precondition(x, y, m)
    ext = check_extended_precondition(x, y, m)
    assert strict == brute_force(x, y, m, True)
    assert ext == brute_force(x, y, m, False)
    assert not strict or ext


@settings(max_examples=1000)
@given(paired_domains())
def test_checks_symmetric_under_swap(d):
    x, y, m = d
    inv = m.inverted()
    assert check_mutualistic_precondition(x, y, m) == check_mutualistic_precondition(y, x, inv)
    assert check_extended_precondition(x, y, m) == check_extended_precondition(y, x, inv)


@settings(max_examples=1000)
@given(st.lists(st.text("abcdefgh", min_size=1, max_size=2), min_size=1, max_size=40, unique=True))
def test_bijection_roundtrip_property(names):
    m = ActionMap((n, "y" + n) for n in names)
    for n in names:
        assert m.inverse(m.forward(n)) == n


def test_merge_examples():
    two = merge_group_activity([(1, "walk", True), (2, "walk", True)])
    assert [g.members for g in two] == [[1, 2]]
    three = merge_group_activity([(1, "walk", True), (2, "walk", True), (3, "walk", True)])
    assert [g.members for g in three] == [[1, 2, 3]]
    assert merge_group_activity([(1, "walk", True), (2, "walk", False)]) == []
    assert merge_group_activity([]) == []


candidates = st.lists(st.tuples(st.integers(0, 30), st.sampled_from(["walk", "talk", "market"]), st.booleans()),
                      max_size=30)


@given(candidates)
def test_merge_partitions_company_seekers(cands):
    groups = merge_group_activity(cands)
    seen = [a for g in groups for a in g.members]
    assert len(seen) == len(set(seen))
    seekers = {(a, k) for a, k, w in cands if w}
    for g in groups:
        assert len(g.members) >= 2
        assert all((a, g.activity_kind) in seekers for a in g.members)


def test_group_dissolves_below_two():
    g = GroupActivity([1, 2, 3], "walk")
    assert not g.leave(1)
    assert g.members == [2, 3]
    assert g.leave(2)
    assert g.dissolved


def test_exhaustive_small_tables():
    # every evaluation table over two-action domains with the identity map
    xs, ys = ["a0", "a1"], ["b0", "b1"]
    m = ActionMap(zip(xs, ys))
    for ex in itertools.product([N, Z, P], repeat=2):
        for ey in itertools.product([N, Z, P], repeat=2):
            x = ActionDomain("X", dict(zip(xs, ex)))
            y = ActionDomain("Y", dict(zip(ys, ey)))
            assert check_mutualistic_precondition(x, y, m) == brute_force(x, y, m, True)
            assert check_extended_precondition(x, y, m) == brute_force(x, y, m, False)
