"""Run the solved feedback policy on simulated markets.

Starting from 1.4 thousand in each portfolio, 100,000 paths follow the
solver's allocations, transfer whenever they wander into a transfer region
and settle the deadline plan at T1. The average realized cost should match
the value function within sampling and grid error.
"""
from goalgrid import BENCHMARK_MARKET, GridSpec, SimConfig, SolverConfig, benchmark_ladder, run_policy, solve_full

sol = solve_full(BENCHMARK_MARKET, benchmark_ladder(), GridSpec(), SolverConfig())
res = run_policy(sol, sol.market, sol.ladder, SimConfig(seed=7, n_paths=100_000))
print(f"solver value   V(0, 1.4, 1.4) = {sol.value(0.0, 1.4, 1.4):.4f}")
print(f"simulated cost                = {res.mean_objective:.4f} +- {res.std_error:.4f}")
for k, v in res.breakdown.items():
    print(f"  {k:<22} {v:.4f}")
