"""
Who gets treated in time
========================

Patients in the city need a doctor with the right expertise, medical
appliances and sometimes an ambulance before a deadline. Three ways of
finding them are compared on the same seeds:

* ``Traditional``: go to a hospital and hope, try the next one if it is short
* ``PerfectOracle``: know where a doctor and an ambulance are free right now
* ``FSO``: ask the local hospital, which escalates and borrows from its siblings
"""
import numpy as np

from fsosim import summarize_city_run
from fsosim.city import CityParams, run_city

SEEDS = range(5)

for strategy in ("FSO", "PerfectOracle", "Traditional"):
    s = [summarize_city_run(run_city(CityParams(strategy=strategy, threshold=150, n_individuals=140),
                                     seed=k).log) for k in SEEDS]
    print(f"{strategy:14} treated {np.mean([x.treated for x in s]):6.1f}"
          f"  died {np.mean([x.died for x in s]):6.1f}"
          f"  querying {np.mean([x.avg_querying_time for x in s]):6.2f}"
          f"  shared across hospitals {np.mean([x.son_inter_community_count for x in s]):5.1f}")

# The same run also records everyday life: how people got to the office.
w = run_city(CityParams(strategy="FSO", n_individuals=140), seed=0)
print("office trips:", summarize_city_run(w.log).transport_mode_counts)
print("shared activities:", len(w.log.of_kind("mutualistic_relationship")))
