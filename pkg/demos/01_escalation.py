"""
A request that no single hospital can serve
===========================================

Two hospitals sit under one emergency-response community. A patient needs
one doctor, one ambulance and two appliances; the first hospital owns the
doctor and the ambulance, the second owns the appliances. The request
escalates one level and a temporary overlay network spans both hospitals.
"""
from collections import Counter

from fsosim import FSOTree, Position, ServiceRequest
from fsosim.fso import Escalation

tree = FSOTree.from_edges([("er", None), ("residents", "er"), ("h0", "er"), ("h1", "er")], leaf_level=1)
print(tree.dump())

# register members and the roles they offer
staff = {"h0": [(1, "doctor"), (2, "ambulance")], "h1": [(3, "appliance"), (4, "appliance")]}
for community, members in staff.items():
    for agent, role in members:
        tree.add_member(community, agent)
        tree.nodes[community].registry.offer(agent, role, Position(0, 0))

req = ServiceRequest(1, "healthcare", {"doctor": 1, "ambulance": 1, "appliance": 2}, Position(3, 4), issued_at=0)
esc = Escalation(req, Counter(req.roles), "h0")
son = tree.raise_exception("h0", esc)

print("communities:", son.communities)
print("inter-community:", son.inter_community, "after", esc.hops, "hop(s)")
print("appliances:", son.agents("appliance"))

# nothing is left for a second identical request, and a failed attempt holds nothing
again = ServiceRequest(2, "healthcare", dict(req.roles), Position(0, 0), issued_at=1)
print("second request:", tree.raise_exception("h0", Escalation(again, Counter(again.roles), "h0")))

tree.dissolve_son(son, 5)
print("free appliances after dissolving:", tree.nodes["h1"].registry.counts("appliance")[0])
