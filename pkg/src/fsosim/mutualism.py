"""Mutualistic relationships between two action domains.

Each domain carries a set of actions and an evaluation table that grades every
action as negative, neutral or positive *from that domain's point of view*. A
bijective action map links the two domains. Two checks are offered: the strict
precondition, which additionally requires the acting domain to find its own
action at least neutral, and the extended one, which drops that requirement.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Hashable, Iterable, Mapping, Sequence

ActionId = Hashable


class UnknownAction(KeyError):
    pass


class Significance(IntEnum):
    NEGATIVE = -1
    NEUTRAL = 0
    POSITIVE = 1


@dataclass(frozen=True)
class ActionDomain:
    """A domain's actions together with how it evaluates them."""

    id: str
    evals: Mapping[ActionId, Significance]

    @property
    def actions(self) -> frozenset:
        return frozenset(self.evals)

    def evaluate(self, action: ActionId) -> Significance:
        try:
            return self.evals[action]
        except KeyError:
            raise UnknownAction(action) from None


class ActionMap:
    """Bijection between the actions of two domains."""

    def __init__(self, pairs: Mapping[ActionId, ActionId] | Iterable[tuple[ActionId, ActionId]]) -> None:
        items = pairs.items() if isinstance(pairs, Mapping) else pairs
        self._fwd: dict = {}
        self._inv: dict = {}
        for a, b in items:
            if a in self._fwd or b in self._inv:
                raise ValueError(f"mapping is not bijective at {a!r} <-> {b!r}")
            self._fwd[a] = b
            self._inv[b] = a

    def __len__(self) -> int:
        return len(self._fwd)

    def pairs(self) -> list[tuple]:
        return list(self._fwd.items())

    def forward(self, a: ActionId) -> ActionId:
        try:
            return self._fwd[a]
        except KeyError:
            raise UnknownAction(a) from None

    def inverse(self, b: ActionId) -> ActionId:
        try:
            return self._inv[b]
        except KeyError:
            raise UnknownAction(b) from None

    def inverted(self) -> "ActionMap":
        return ActionMap(self._inv)


def map_action(amap: ActionMap, a: ActionId, direction: str = "forward") -> ActionId:
    if direction == "forward":
        return amap.forward(a)
    if direction == "inverse":
        return amap.inverse(a)
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def _one_way(src: ActionDomain, dst: ActionDomain, translate, strict: bool) -> bool:
    for a in src.evals:
        if strict and src.evals[a] < Significance.NEUTRAL:
            continue
        if dst.evaluate(translate(a)) == Significance.POSITIVE:
            return True
    return False


def check_mutualistic_precondition(x: ActionDomain, y: ActionDomain, amap: ActionMap) -> bool:
    """Some X action that X rates >= neutral helps Y, and vice versa."""
    return (_one_way(x, y, amap.forward, strict=True)
            and _one_way(y, x, amap.inverse, strict=True))


def check_extended_precondition(x: ActionDomain, y: ActionDomain, amap: ActionMap) -> bool:
    """Like the strict check but the acting domain may pay a cost for its action."""
    return (_one_way(x, y, amap.forward, strict=False)
            and _one_way(y, x, amap.inverse, strict=False))


# --------------------------------------------------------------------------
# group activities

@dataclass
class GroupActivity:
    members: list
    activity_kind: str
    formed_at: int = 0
    dissolved: bool = field(default=False)

    def join(self, agent) -> None:
        if agent not in self.members:
            self.members.append(agent)

    def leave(self, agent) -> bool:
        """Remove ``agent``; returns True when the group is left with one member and dissolves."""
        if agent in self.members:
            self.members.remove(agent)
        if len(self.members) < 2:
            self.dissolved = True
        return self.dissolved


def merge_group_activity(
    candidates: Sequence[tuple],
    formed_at: int = 0,
) -> list[GroupActivity]:
    """Group company-seeking candidates that share an activity kind.

    ``candidates`` are ``(agent, kind, wants_company)`` triples in arrival
    order. Groups are filled earliest-first and grow past two members; solo
    candidates and kinds with a single seeker are left out. An agent listed
    more than once keeps only its earliest company-seeking request.
    """
    by_kind: dict[str, list] = {}
    placed = set()
    for agent, kind, wants_company in candidates:
        if wants_company and agent not in placed:
            placed.add(agent)
            by_kind.setdefault(kind, []).append(agent)
    return [GroupActivity(agents, kind, formed_at) for kind, agents in by_kind.items() if len(agents) >= 2]
