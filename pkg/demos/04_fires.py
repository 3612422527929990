"""
Calling the firefighters
========================

Fifty houses catch fire in batches of ten. Bystanders help where they can.
With collaboration on, a house whose health falls below 80 calls the
firefighters' community through the residents' community and a truck
drives over.
"""
import numpy as np

from fsosim import summarize_city_run
from fsosim.city import fire_params, run_city

for strategy, label in (("FSO", "with collaboration"), ("Traditional", "bystanders only")):
    s = [summarize_city_run(run_city(fire_params(strategy), seed=k).log) for k in range(5)]
    print(f"{label:20} burned {np.mean([x.fully_burned_houses for x in s]):5.1f}"
          f"  put out {np.mean([x.extinguished_houses for x in s]):5.1f}")

# One saved house's story, from the event log.
w = run_city(fire_params("FSO"), seed=0)
saved = {e.agent_id for e in w.log.of_kind("fire_out")}
house = next(e.payload["house"] for e in w.log.of_kind("truck_dispatched") if e.payload["house"] in saved)
for e in w.log:
    if e.agent_id == house and e.kind in ("ignition", "house_burned", "fire_out") \
            or e.payload.get("house") == house:
        print(e.tick, e.kind, e.payload)
