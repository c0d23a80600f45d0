"""
Reading a benchmark report
==========================

Print per-cell and per-method tables from the JSON written by
``strategy-discovery bench``. Usage::

    python3 notebooks/03_benchmark_tables.py report.json
"""

# %% load
import json
import sys

path = sys.argv[1] if len(sys.argv) > 1 else "bench.json"
with open(path) as fh:
    report = json.load(fh)
cfg = report["config"]
print(f"{cfg['runs']} runs per cell, {cfg['rollouts']:,} rollouts per estimate")

# %% per cell
print(f"\n{'env':<11}{'x':>5}  {'method':<7}{'SUCC':>7}{'PERF':>8}{'±':>7}{'H':>7}")
for c in sorted(report["cells"], key=lambda c: (c["env"], c["size"], c["method"])):
    print(f"{c['env']:<11}{c['size']:>5}  {c['method']:<7}{c['success']:>7.2f}"
          f"{c['perf']:>8.3f}{c['perf_ci']:>7.3f}{c['entropy']:>7.3f}")

# %% suite means
print()
for method, s in report["summary"].items():
    print(f"{method:<7} SUCC {s['success']:.3f}  PERF {s['perf']:.3f} ± {s['perf_ci']:.3f}")
