"""Discovering interpretable planning strategies in Mouselab environments.

The package solves the metalevel MDP of a Mouselab tree exactly, samples
demonstrations of the optimal policy, and distills them into small logical
formulas over a predicate language that render as flowcharts.
"""
from .env import (
    KINDS,
    TERMINATE,
    Belief,
    Click,
    Computation,
    ContractViolation,
    EnvironmentSpec,
    build_environment,
)
from .solver import ValueTable, expert_policy, load_table, optimal_action_set, solve

__all__ = [
    "KINDS", "TERMINATE", "Belief", "Click", "Computation", "ContractViolation",
    "EnvironmentSpec", "build_environment", "ValueTable", "expert_policy", "load_table",
    "optimal_action_set", "solve",
]
