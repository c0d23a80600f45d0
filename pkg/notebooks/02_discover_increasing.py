"""
From demonstrations to a flowchart
==================================

Sample expert demonstrations in the Increasing environment, cluster them,
pick cluster counts at the elbows of the clustering value, and turn the
simplest accepted formula into a flowchart.
"""

# %% setup
import os

from strategy_discovery import build_environment
from strategy_discovery.flowchart import render
from strategy_discovery.interpret import InterpretConfig
from strategy_discovery.pipeline import PipelineConfig, discover, select_tree, solve_cached

CACHE = os.path.join(os.path.dirname(__file__), "..", ".cache")
os.makedirs(CACHE, exist_ok=True)
env = build_environment("increasing")
table = solve_cached(env, os.path.join(CACHE, "increasing.vt"))

# %% run the pipeline
# Fewer rollouts than the default keep this quick; the ranking barely moves.
cfg = PipelineConfig(n_demos=64, seed=0, interpret=InterpretConfig(rollouts=20_000))
cs = discover("increasing", cfg, table)

# %% clustering value over the grid
print(cs.elbow.table())
print("elbow candidates:", cs.elbow.candidates)

# %% accepted formulas
ps = cs.predicate_set
for c in cs.candidates:
    print(f"N={c.N:<3} ratio {c.perf_ratio:.3f}  nodes {c.tree.node_count}  {c.formula.render(ps)}")
for d in cs.diagnostics:
    print(f"N={d['N']:<3} {d['reason']}")

# %% the chosen flowchart
best = select_tree(cs)
print(render(best.tree, ps, env, "ascii"))
