"""Objective against horizon and risk budget on a short highway.

A larger risk budget can only help, and the per-step cost should not grow
with the horizon; the table makes both trends visible.

    python demos/highway_table.py
"""

from ccssp.benchmarks import monotonicity_suite, small_highway

table = monotonicity_suite(lambda h, d: small_highway(horizon=h, delta=d), [2, 3, 4], [0.01, 0.05, 0.10])
print(f"{'h':>2} {'delta':>6} {'status':>10} {'objective':>10} {'obj/h':>7} {'nodes':>7} {'seconds':>8}")
for r in table.rows:
    obj = "" if r.objective is None else f"{r.objective:10.4f}"
    per = "" if r.objective is None else f"{r.objective / r.horizon:7.3f}"
    print(f"{r.horizon:>2} {r.delta:>6} {r.status:>10} {obj:>10} {per:>7} {r.graph_nodes:>7} {r.seconds:8.2f}")
print("trend violations:", table.violations or "none")
