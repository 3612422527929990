"""Community tree, service registries, role matching and exception escalation.

A :class:`FSOTree` is a tree of :class:`CommunityNode` objects. Each node has a
coordinator and a :class:`ServiceRegistry` of roles offered by its member
agents. A service request that the local registry cannot satisfy is escalated
upward as an :class:`Escalation`; every ancestor contributes what its subtree
has free until all roles are allocated or the flooding threshold is hit. A
complete allocation becomes a :class:`SocialOverlayNetwork` that lives until
the request is finished.
"""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .engine import Position, distance

NOTIFICATION_KINDS = frozenset(
    {"status", "service_request", "service_offer", "event_report", "alarm", "cancel"}
)


class FSOError(Exception):
    pass


class NotAMember(FSOError):
    pass


class IncompleteAllocation(FSOError):
    pass


class AlreadyDissolved(FSOError):
    pass


@dataclass(slots=True)
class RegistryEntry:
    agent: int
    role: str
    available: bool
    position: Position
    updated_at: int = 0


@dataclass(slots=True)
class RegistryChange:
    community: str
    agent: int
    role: str
    before: bool | None  # None: entry did not exist
    after: bool | None   # None: entry removed


RegistryDelta = list  # list[RegistryChange]


class ServiceRegistry:
    """Roles offered inside one community.

    An agent may publish several roles; it serves at most one request at a
    time, so allocating or releasing it flips all of its entries together.
    """

    def __init__(self, community: str) -> None:
        self.community = community
        self._by_role: dict[str, dict[int, RegistryEntry]] = {}
        self._by_agent: dict[int, dict[str, RegistryEntry]] = {}

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_agent.values())

    def __contains__(self, agent: int) -> bool:
        return agent in self._by_agent

    def entries(self) -> Iterator[RegistryEntry]:
        for roles in self._by_agent.values():
            yield from roles.values()

    def roles(self) -> list[str]:
        return list(self._by_role)

    def roles_of(self, agent: int) -> list[str]:
        return list(self._by_agent.get(agent, ()))

    def offer(self, agent: int, role: str, position: Position, tick: int = 0) -> RegistryDelta:
        roles = self._by_agent.setdefault(agent, {})
        e = roles.get(role)
        if e is not None:
            e.position = position
            e.updated_at = tick
            return []
        # a newly offered role inherits the agent's current availability
        available = next(iter(roles.values())).available if roles else True
        e = RegistryEntry(agent, role, available, position, tick)
        roles[role] = e
        self._by_role.setdefault(role, {})[agent] = e
        return [RegistryChange(self.community, agent, role, None, available)]

    def withdraw(self, agent: int) -> RegistryDelta:
        roles = self._by_agent.pop(agent, {})
        delta = []
        for role, e in roles.items():
            del self._by_role[role][agent]
            delta.append(RegistryChange(self.community, agent, role, e.available, None))
        return delta

    def is_available(self, agent: int) -> bool:
        roles = self._by_agent.get(agent)
        return bool(roles) and next(iter(roles.values())).available

    def set_available(self, agent: int, available: bool, tick: int = 0) -> RegistryDelta:
        delta = []
        for e in self._by_agent.get(agent, {}).values():
            if e.available != available:
                delta.append(RegistryChange(self.community, agent, e.role, e.available, available))
                e.available = available
            e.updated_at = tick
        return delta

    def allocate(self, agent: int, tick: int = 0) -> RegistryDelta:
        return self.set_available(agent, False, tick)

    def release(self, agent: int, tick: int = 0) -> RegistryDelta:
        return self.set_available(agent, True, tick)

    def move(self, agent: int, position: Position) -> None:
        for e in self._by_agent.get(agent, {}).values():
            e.position = position

    def available(self, role: str) -> list[RegistryEntry]:
        return [e for e in self._by_role.get(role, {}).values() if e.available]

    def counts(self, role: str) -> tuple[int, int]:
        """``(available, allocated)`` entries for ``role``."""
        es = self._by_role.get(role, {})
        free = sum(1 for e in es.values() if e.available)
        return free, len(es) - free


@dataclass
class ServiceRequest:
    id: int
    kind: str
    roles: dict[str, int]
    position: Position
    issued_at: int
    origin: int | None = None
    deadline: int | None = None


@dataclass
class Notification:
    origin: int
    kind: str
    payload: dict = field(default_factory=dict)
    tick: int = 0

    def __post_init__(self) -> None:
        if self.kind not in NOTIFICATION_KINDS:
            raise ValueError(f"unknown notification kind {self.kind!r}")


@dataclass(frozen=True, slots=True)
class RoleAssignment:
    agent: int
    role: str
    community: str


@dataclass
class Escalation:
    """The exception message: roles still missing for a request."""

    request: ServiceRequest
    missing_roles: Counter
    origin_community: str
    hops: int = 0


@dataclass
class SocialOverlayNetwork:
    id: int
    member_roles: list[RoleAssignment]
    request: ServiceRequest
    formed_at: int
    state: str = "active"
    released: set = field(default_factory=set)

    @property
    def communities(self) -> list[str]:
        out: list[str] = []
        for m in self.member_roles:
            if m.community not in out:
                out.append(m.community)
        return out

    @property
    def inter_community(self) -> bool:
        return len(self.communities) >= 2

    @property
    def coordinator(self) -> int | None:
        # appointed, not elected: lowest agent id
        return min((m.agent for m in self.member_roles), default=None)

    def agents(self, role: str | None = None) -> list[int]:
        return [m.agent for m in self.member_roles if role is None or m.role == role]


class CommunityNode:
    def __init__(self, id: str, level: int, coordinator, parent: "CommunityNode | None" = None) -> None:
        self.id = id
        self.level = level
        self.coordinator = coordinator
        self.parent = parent
        self.children: list[CommunityNode] = []
        self.members: list[int] = []
        self.registry = ServiceRegistry(id)
        self.pending: deque[Notification] = deque()

    def __repr__(self) -> str:
        return f"CommunityNode({self.id!r}, level={self.level})"

    def ancestors(self) -> Iterator["CommunityNode"]:
        n = self.parent
        while n is not None:
            yield n
            n = n.parent

    def subtree(self) -> Iterator["CommunityNode"]:
        stack = [self]
        while stack:
            n = stack.pop()
            yield n
            stack.extend(reversed(n.children))


class FSOTree:
    """The community hierarchy plus SON bookkeeping."""

    def __init__(self, locate: Callable[[int], Position] | None = None) -> None:
        self.nodes: dict[str, CommunityNode] = {}
        self.root: CommunityNode | None = None
        self.home: dict[int, str] = {}
        self.locate = locate
        self.sons_formed = 0
        self.inter_community_sons = 0
        self._son_ids = 0
        self._subtree_cache: dict[str, list[CommunityNode]] = {}

    # -- structure ---------------------------------------------------------

    def add_community(self, id: str, level: int, coordinator=None, parent: str | None = None) -> CommunityNode:
        if id in self.nodes:
            raise FSOError(f"duplicate community {id!r}")
        if parent is None:
            if self.root is not None:
                raise FSOError("tree already has a root")
            node = CommunityNode(id, level, coordinator)
            self.root = node
        else:
            p = self.nodes[parent]
            if level >= p.level:
                raise FSOError(f"child {id!r} must sit below level {p.level}")
            node = CommunityNode(id, level, coordinator, p)
            p.children.append(node)
            if coordinator is not None and coordinator not in p.members:
                # the coordinator represents its community inside the parent
                p.members.append(coordinator)
        self.nodes[id] = node
        self._subtree_cache.clear()
        return node

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str | None]], leaf_level: int = 0, **kw) -> "FSOTree":
        """Build from ``(child, parent)`` pairs; the root has parent ``None``.

        Levels are subtree heights plus ``leaf_level``, so leaf communities
        sit at ``leaf_level`` (1 when their members are plain agents).
        """
        edges = list(edges)
        children: dict[str | None, list[str]] = {}
        for c, p in edges:
            children.setdefault(p or None, []).append(c)
        roots = children.get(None, [])
        if len(roots) != 1:
            raise FSOError(f"expected exactly one root, got {roots}")

        def height(n: str, seen: tuple = ()) -> int:
            if n in seen:
                raise FSOError(f"cycle through {n!r}")
            kids = children.get(n, [])
            return 0 if not kids else 1 + max(height(k, seen + (n,)) for k in kids)

        tree = cls(**kw)
        order = [(roots[0], None)]
        while order:
            n, p = order.pop(0)
            tree.add_community(n, height(n) + leaf_level, coordinator=f"{n}_coordinator", parent=p)
            order.extend((k, n) for k in children.get(n, []))
        return tree

    def node(self, ref: "str | CommunityNode") -> CommunityNode:
        return ref if isinstance(ref, CommunityNode) else self.nodes[ref]

    def add_member(self, community: str, agent: int) -> None:
        node = self.nodes[community]
        if agent in self.home:
            raise FSOError(f"agent {agent} already belongs to {self.home[agent]!r}")
        node.members.append(agent)
        self.home[agent] = community

    def remove_member(self, agent: int) -> RegistryDelta:
        c = self.home.pop(agent, None)
        if c is None:
            return []
        node = self.nodes[c]
        node.members.remove(agent)
        return node.registry.withdraw(agent)

    def height(self) -> int:
        if self.root is None:
            return 0
        def h(n: CommunityNode) -> int:
            return 0 if not n.children else 1 + max(h(c) for c in n.children)
        return h(self.root)

    def subtree_nodes(self, node: CommunityNode) -> list[CommunityNode]:
        s = self._subtree_cache.get(node.id)
        if s is None:
            s = self._subtree_cache[node.id] = list(node.subtree())
        return s

    def is_member(self, node: CommunityNode, agent) -> bool:
        """Transitive membership of ``agent`` in ``node``'s subtree."""
        c = self.home.get(agent)
        if c is not None:
            n = self.nodes[c]
            return n is node or any(a is node for a in n.ancestors())
        for n in self.subtree_nodes(node):
            if agent == n.coordinator or agent in n.members:
                return True
        return False

    def registry_of(self, agent: int) -> ServiceRegistry:
        return self.nodes[self.home[agent]].registry

    def check_well_formed(self) -> None:
        seen = set()
        for n in self.root.subtree() if self.root else ():
            if n.id in seen:
                raise FSOError(f"cycle or shared node at {n.id!r}")
            seen.add(n.id)
            for c in n.children:
                if c.parent is not n:
                    raise FSOError(f"broken parent link at {c.id!r}")
                if c.coordinator is not None and c.coordinator not in n.members:
                    raise FSOError(f"coordinator of {c.id!r} missing from {n.id!r}")
        if seen != set(self.nodes):
            raise FSOError("unreachable communities")

    # -- views -------------------------------------------------------------

    def _position(self, e: RegistryEntry) -> Position:
        # ``locate`` may know live positions of moving agents; None defers to the registry
        p = self.locate(e.agent) if self.locate is not None else None
        return e.position if p is None else p

    def _ranked(self, registries: Iterable[ServiceRegistry], role: str, near: Position) -> list[tuple[RegistryEntry, ServiceRegistry]]:
        cands = [(e, r) for r in registries for e in r.available(role)]
        cands.sort(key=lambda er: (distance(self._position(er[0]), near), er[0].agent))
        return cands

    def role_counts(self, role: str) -> tuple[int, int]:
        free = used = 0
        for n in self.nodes.values():
            f, u = n.registry.counts(role)
            free += f
            used += u
        return free, used

    def all_roles(self) -> list[str]:
        roles: list[str] = []
        for n in self.nodes.values():
            for r in n.registry.roles():
                if r not in roles:
                    roles.append(r)
        return roles

    # -- protocol operations -----------------------------------------------

    def publish_notification(self, node, n: Notification) -> RegistryDelta:
        node = self.node(node)
        if not self.is_member(node, n.origin):
            raise NotAMember(f"agent {n.origin} is not inside community {node.id!r}")
        delta: RegistryDelta = []
        if n.kind == "service_offer":
            reg = self.registry_of(n.origin) if n.origin in self.home else node.registry
            delta = reg.offer(n.origin, n.payload["role"], n.payload.get("position", Position(0.0, 0.0)), n.tick)
        elif n.kind == "status" and "available" in n.payload:
            if n.origin in self.home:
                delta = self.registry_of(n.origin).set_available(n.origin, bool(n.payload["available"]), n.tick)
        node.pending.append(n)
        return delta

    def match_notification(self, node, n: Notification | ServiceRequest) -> list[RoleAssignment] | None:
        """All-or-nothing match of a request against the node's own registry.

        Returns the allocation (entries marked busy) or ``None`` with the
        registry untouched.
        """
        node = self.node(node)
        req = n.payload["request"] if isinstance(n, Notification) else n
        if isinstance(n, Notification):
            try:
                node.pending.remove(n)
            except ValueError:
                pass
        picks: list[RoleAssignment] = []
        taken: set[int] = set()
        for role, count in req.roles.items():
            got = 0
            for e, reg in self._ranked((node.registry,), role, req.position):
                if e.agent in taken:
                    continue
                picks.append(RoleAssignment(e.agent, role, reg.community))
                taken.add(e.agent)
                got += 1
                if got == count:
                    break
            if got < count:
                return None
        for p in picks:
            node.registry.allocate(p.agent, req.issued_at)
        return picks

    def raise_exception(
        self,
        node,
        esc: Escalation,
        flooding_threshold: int | None = None,
        tick: int = 0,
    ) -> SocialOverlayNetwork | None:
        """Escalate missing roles up the tree.

        Each visited community (the origin first, then each ancestor) fills
        what it can from its whole subtree, nearest holders first. Returns the
        formed SON, or ``None`` after rolling every partial allocation back
        when the root is exhausted or the hop budget runs out.
        """
        node = self.node(node)
        if flooding_threshold is None:
            flooding_threshold = self.height()
        req = esc.request
        taken: list[tuple[RoleAssignment, ServiceRegistry]] = []
        current = node
        while True:
            regs = [n.registry for n in self.subtree_nodes(current)]
            for role in list(esc.missing_roles):
                need = esc.missing_roles[role]
                for e, reg in self._ranked(regs, role, req.position):
                    if need == 0:
                        break
                    if not e.available:
                        # taken for another role of this request during this pass
                        continue
                    reg.allocate(e.agent, tick)
                    taken.append((RoleAssignment(e.agent, role, reg.community), reg))
                    need -= 1
                if need:
                    esc.missing_roles[role] = need
                else:
                    del esc.missing_roles[role]
            if not esc.missing_roles:
                return self.form_son([a for a, _ in taken], req, tick)
            if current.parent is None or esc.hops >= flooding_threshold:
                for a, reg in reversed(taken):
                    reg.release(a.agent, tick)
                for a, _ in taken:
                    esc.missing_roles[a.role] += 1
                return None
            current = current.parent
            esc.hops += 1

    def form_son(self, allocation: list[RoleAssignment], request: ServiceRequest, tick: int) -> SocialOverlayNetwork:
        have = Counter(a.role for a in allocation)
        for role, n in request.roles.items():
            if have[role] < n:
                raise IncompleteAllocation(f"{role}: {have[role]}/{n}")
        self._son_ids += 1
        son = SocialOverlayNetwork(self._son_ids, list(allocation), request, tick)
        self.sons_formed += 1
        if son.inter_community:
            self.inter_community_sons += 1
        return son

    def release_member(self, son: SocialOverlayNetwork, agent: int, tick: int = 0) -> RegistryDelta:
        """Hand one member back before the SON ends (e.g. a vehicle done with its leg)."""
        if son.state != "active":
            raise AlreadyDissolved(son.id)
        if agent in son.released:
            return []
        for m in son.member_roles:
            if m.agent == agent:
                son.released.add(agent)
                return self.nodes[m.community].registry.release(agent, tick)
        raise FSOError(f"agent {agent} not in SON {son.id}")

    def dissolve_son(self, son: SocialOverlayNetwork, tick: int = 0) -> RegistryDelta:
        if son.state != "active":
            raise AlreadyDissolved(son.id)
        delta: RegistryDelta = []
        for m in son.member_roles:
            if m.agent in son.released:
                continue
            son.released.add(m.agent)
            if m.agent in self.nodes[m.community].registry:
                delta.extend(self.nodes[m.community].registry.release(m.agent, tick))
        son.state = "dissolved"
        return delta

    # -- debugging -----------------------------------------------------------

    def dump(self, label: Callable[[int], str] | None = None) -> str:
        """Indented listing of every community and its members with levels."""
        label = label or str
        lines = []

        def walk(n: CommunityNode, depth: int) -> None:
            pad = "  " * depth
            lines.append(f"{pad}{n.id} members\tL{n.level}")
            for c in n.children:
                lines.append(f"{pad}  {c.id} [{c.coordinator}]\tL{c.level}")
            for m in n.members:
                if any(m == c.coordinator for c in n.children):
                    continue
                roles = ",".join(n.registry.roles_of(m))
                lines.append(f"{pad}  {label(m)}{' (' + roles + ')' if roles else ''}\tL{max(n.level - 1, 0)}")
            for c in n.children:
                walk(c, depth + 1)

        if self.root is not None:
            walk(self.root, 0)
        return "\n".join(lines)
