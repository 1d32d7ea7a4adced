"""Cross-check the PDE solver against a brute-force dynamic program.

On a coarse grid (0.5 thousand, quarter-year steps) the dynamic program
enumerates every allocation pair and every transfer, so it shares no code
with the finite-difference solver. The two should agree to about 0.15.
"""
import numpy as np

from goalgrid import BENCHMARK_MARKET, GridSpec, SolverConfig, benchmark_ladder, dp_value, solve_full

grid = GridSpec(10.0, 0.5, 0.25, 0.25)
pde = solve_full(BENCHMARK_MARKET, benchmark_ladder(), grid, SolverConfig(allocation_step_fine=0.25))
dp = dp_value(BENCHMARK_MARKET, benchmark_ladder())

gap = np.abs(dp.at_start - pde.two_goal.surface.values[0])
i, j = np.unravel_index(np.argmax(gap), gap.shape)
x = dp.axis.points
print(f"largest gap at t=0: {gap.max():.3f} at ({x[i]}, {x[j]})")
print(f"value with no wealth: dp {dp.at_start[0, 0]}, pde {pde.two_goal.surface.values[0][0, 0]}")
for x1, x2 in [(1.0, 1.0), (3.0, 3.0), (5.0, 2.0)]:
    a, b = dp.axis.index_of(x1), dp.axis.index_of(x2)
    print(f"  V(0, {x1}, {x2}): dp {dp.at_start[a, b]:.3f}, pde {pde.two_goal.surface.values[0][a, b]:.3f}")
