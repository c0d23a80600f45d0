import math

import numpy as np
import pytest

from strategy_discovery.bench import (
    SuiteConfig,
    _run_seed,
    aggregate,
    mean_ci,
    output_entropy,
    perf_ratio,
    run_benchmark_suite,
    success_rate,
    summarize,
)


def test_entropy_pins():
    assert output_entropy([None] * 9 + ["f"]) == pytest.approx(0.325, abs=1e-3)
    assert output_entropy([str(i) for i in range(10)]) == pytest.approx(math.log(10))
    assert output_entropy(["f"] * 10) == 0.0
    assert output_entropy([None] * 10) == 0.0
    with pytest.raises(ValueError):
        output_entropy([])


def test_success_and_perf():
    assert success_rate([None, "a", "b", None]) == 0.5
    assert perf_ratio(None, 10.0) == 0.0
    assert perf_ratio(9.0, 10.0) == 0.9
    with pytest.raises(ValueError):
        perf_ratio(1.0, 0.0)


def test_mean_ci():
    assert mean_ci([1.0, 1.0]) == (1.0, 0.0)
    assert mean_ci([3.0]) == (3.0, 0.0)
    m, h = mean_ci([0.0, 1.0, 2.0])
    assert m == 1.0 and h == pytest.approx(4.302653 / math.sqrt(3), rel=1e-6)


def _rec(env, method, run, digest, perf):
    return {"env": env, "size": 8, "method": method, "run": run, "found": digest is not None,
            "formula_digest": digest, "perf": perf, "complexity": 2 if digest else None,
            "support": 0.5 if digest else None}


def test_aggregate_and_summary():
    recs = [_rec("increasing", "ai", i, "d" if i else None, 0.9 if i else 0.0) for i in range(4)]
    recs += [_rec("increasing", "lpp", i, None, 0.0) for i in range(4)]
    cells = {c["method"]: c for c in aggregate(recs)}
    assert cells["ai"]["success"] == 0.75 and cells["ai"]["perf"] == pytest.approx(0.675)
    assert cells["ai"]["entropy"] == pytest.approx(-(0.75 * math.log(0.75) + 0.25 * math.log(0.25)))
    assert cells["lpp"]["complexity"] is None
    s = summarize(recs)
    assert s["ai"]["success"] == 0.75 and s["lpp"]["perf"] == 0.0


def test_suite_config():
    cfg = SuiteConfig.from_dict({"kinds": ["increasing"], "sizes": [8], "runs": 10})
    assert cfg.kinds == ("increasing",) and cfg.fast().runs == 3 and cfg.fast().rollouts == 10_000
    assert _run_seed(cfg, "increasing", 8, 0) == _run_seed(cfg, "increasing", 8, 0)
    assert _run_seed(cfg, "increasing", 8, 0) != _run_seed(cfg, "increasing", 8, 1)


def test_tiny_suite(tables):
    tables("decreasing")  # make sure the cache exists
    from tests.conftest import CACHE_DIR

    cfg = SuiteConfig(kinds=("decreasing",), sizes=(8,), methods=("ai", "binary", "lpp"), runs=2,
                      rollouts=1000, ai_mode="fixed", clusters={"decreasing": 4},
                      interpret={"max_depth": 2}, cache_dir=CACHE_DIR)
    rep = run_benchmark_suite(cfg)
    assert len(rep["runs"]) == 6 and len(rep["cells"]) == 3
    for r in rep["runs"]:
        assert r["found"] == (r["formula"] is not None)
        assert (r["perf"] == 0.0) or r["found"]
    assert rep == run_benchmark_suite(cfg)
