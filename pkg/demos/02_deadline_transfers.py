"""What happens at the shorter goal's deadline.

Both portfolios may trade wealth along the ray (+1, -1) at a per-unit
mental cost (0.3 into the goal, 0.1 out of it). We couple the two periods
and read off where the optimal one-shot transfer stops, then follow two
example states to their post-transfer positions.
"""
from goalgrid import BENCHMARK_MARKET, GridSpec, SolverConfig, benchmark_ladder, extract_thresholds, solve_full

sol = solve_full(BENCHMARK_MARKET, benchmark_ladder(), GridSpec(), SolverConfig())
thr = extract_thresholds(sol.coupled, sol.ladder[0])
print("deadline thresholds (thousands):")
print(f"  sell-back target for the fundamental portfolio: {thr.sellback_target:.1f}")
print(f"  transfers into the goal stop at x2 =           {thr.transferin_floor:.1f}")
print(f"  surplus is sent on until x2 =                  {thr.surplus_cap:.1f}")
print(f"  the goal keeps its full target once x1 >=      {thr.split_abscissa:.1f}")

ax = sol.axis
for x1, x2 in [(1.0, 1.0), (8.0, 2.0), (1.0, 8.0)]:
    i, j = ax.index_of(x1), ax.index_of(x2)
    s = sol.coupled.shift[i, j]
    print(f"  ({x1}, {x2}) -> ({x1 + s * ax.step:.1f}, {x2 - s * ax.step:.1f})")
