"""
A resumable sweep and its analysis
==================================

A small exact-diagonalization sweep is written to an append-only store,
interrupted, resumed, and then handed to the same analysis the command line
tool runs: spline peaks, crossings of neighbouring sizes, and a fit.
"""

import tempfile
from pathlib import Path

from o2chain import cli, sweep

work = Path(tempfile.mkdtemp(prefix="o2chain-demo-"))
plan = sweep.SweepPlan(variant="u", S=1, L=[6, 8, 10], window=(0.3, 1.5), grid_step=0.02,
                       engine="ed", output=str(work / "store"), plan_id="demo")

# stop after 20 points, as if the job had been killed
print(sweep.run_plan(plan, max_points=20))
# a second call only computes what is missing
print(sweep.run_plan(plan))

spec = {"store": plan.output, "S": 1, "L": plan.L,
        "peaks": {"observables": ["CHI_F"], "width": 0.2},
        "crossings": {"observable": "CHI_F", "window": [0.3, 0.9]},
        "fits": [{"model": "LINEAR_INV_L", "source": "CHI_F.position"}]}
result = cli.run_analysis(spec, work / "analysis")
for (obs, L), p in result["peaks"].items():
    print(f"{obs} L={L}: peak at D = {p.position:.4f}, height {p.height:.5f}")
for L, x in result["crossings"].items():
    print(f"crossing of L={L} with the next size: D = {x:.4f}")
print(result["fits"][0].to_text())
print("tables written to", work / "analysis")
