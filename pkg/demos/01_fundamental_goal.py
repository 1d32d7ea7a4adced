"""After the shorter goal expires only the fundamental portfolio is left.

We solve that one-wealth problem on the fine grid and print the optimal
stock proportions between 2.0 and 4.0 thousand. Below about 2.2 the
portfolio bets everything on the riskier second stock; as wealth approaches
the 4.0 target it diversifies and then retreats to cash.
"""
from goalgrid import BENCHMARK_MARKET, GridSpec, SolverConfig, benchmark_ladder, make_timeline, solve_last_period

axis = GridSpec().axis()
last = solve_last_period(BENCHMARK_MARKET, benchmark_ladder(), axis, make_timeline(1.0, 2.0, 0.01), SolverConfig())
alloc = last.policies.allocations[last.codes[0][0]]

print(f"{'x2':>5} {'stock 1':>8} {'stock 2':>8} {'value':>7}")
for x2 in [2.0 + 0.2 * k for k in range(11)]:
    i = axis.index_of(x2)
    print(f"{x2:5.1f} {alloc[i, 0]:8.2f} {alloc[i, 1]:8.2f} {last.surface.values[0, i]:7.3f}")
print(f"policy iterations per step: max {max(last.iterations)}")
