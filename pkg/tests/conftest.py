import os

import pytest

from strategy_discovery.dsl import enumerate_predicates
from strategy_discovery.env import build_environment
from strategy_discovery.pipeline import solve_cached

# Solved tables are reused across test sessions when this directory persists.
CACHE_DIR = os.path.join(os.path.dirname(__file__), "..", ".cache")


@pytest.fixture(scope="session")
def tables():
    os.makedirs(CACHE_DIR, exist_ok=True)
    out = {}

    def get(kind):
        if kind not in out:
            env = build_environment(kind)
            out[kind] = solve_cached(env, os.path.join(CACHE_DIR, f"{kind}.vt"))
        return out[kind]

    return get


@pytest.fixture(scope="session")
def predicates():
    return enumerate_predicates()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
