"""
Optimal planning in the 3-1-2 Mouselab tree
===========================================

Solve the four environments exactly and compare the optimal value with the
hand-written reference strategies. Value tables are cached in ``.cache/``.
"""

# %% imports
import os

import numpy as np

from strategy_discovery import build_environment
from strategy_discovery.batch import rollout_returns
from strategy_discovery.flowchart import reference_policy
from strategy_discovery.pipeline import solve_cached

CACHE = os.path.join(os.path.dirname(__file__), "..", ".cache")
os.makedirs(CACHE, exist_ok=True)

# %% exact values of the initial belief
tables = {}
for kind in ("increasing", "decreasing", "constant", "different"):
    env = build_environment(kind)
    tables[kind] = solve_cached(env, os.path.join(CACHE, f"{kind}.vt"))
    print(f"{kind:<11} V(b0) = {tables[kind].value(env.initial_belief()):8.4f}"
          f"   ({tables[kind].state_count:,} canonical states)")

# %% which first click is optimal?
# Q values of the initial belief; clicks on symmetric nodes share a value.
env = build_environment("increasing")
q = tables["increasing"].q_values(env.initial_belief())
for c, v in q.items():
    print(f"  {c!r:<12} {v:8.4f}")

# %% reference strategies
# 20,000 seeded rollouts each; the gap to V(b0) is what the strategy gives up.
for kind in ("increasing", "decreasing", "constant"):
    env = build_environment(kind)
    rets, clicks = rollout_returns(env, reference_policy(kind), 20_000, seed=0)
    se = rets.std(ddof=1) / np.sqrt(len(rets))
    print(f"{kind:<11} reference {rets.mean():7.3f} ± {se:.3f}"
          f"   mean clicks {clicks.mean():.2f}")
