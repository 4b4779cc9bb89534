"""Behavior-aware planning on the shipped highway scenarios.

Each scenario runs once with the plain distance-based proximity cost and
once with the monotone behavior-aware cost, from the same seed.

    python demos/03_navigation.py
"""

# %%
from tdbm.sim import SHIPPED_SCENARIOS, compare, lowest_attention_neighbor, mean_scores, run, shipped_scenario

for name in SHIPPED_SCENARIOS:
    sc = shipped_scenario(name)
    print(f"\n== {name}: {sc.description}")
    for row in compare(sc, ("baseline-exp", "monotone")):
        dist = row["min_distance_flagged"]
        dist = "   -  " if dist is None else f"{dist:6.2f}"
        lc = row["first_lane_change"]
        lc = "none" if lc is None else f"{lc:.2f} s"
        print(f"  {row['cost_mode']:<13} {row['status']:<8} min dist to flagged {dist} m, "
              f"first lane change {lc}, final leader {row['final_leader']}")

# %% who the ego ends up following in slow traffic
trace = run(shipped_scenario("slow_traffic"))
scores = mean_scores(trace, trace.scenario.flagged)
print("\nmean safety score of the cars the ego can follow:",
      {k: round(v, 2) for k, v in scores.items()})
print("lowest attention needed:", lowest_attention_neighbor(trace), "| final leader:", trace.summary["final_leader"])
