"""Shapes of the transfer regions at t = 0.8 under three settings.

With correlation 0.5 the transfer-into-goal region pushes a bulge into the
continuation region; a strongly negative correlation removes it, and a
goal twice as important as the fundamental one leaves a notch in the
transfer-out region instead. The maps print L (transfer in), M (transfer
out) and . (continue), rows from high x2 down.
"""
import dataclasses

from goalgrid import BENCHMARK_MARKET, GridSpec, SolverConfig, benchmark_ladder, detect_features, solve_full


def show(title, market, ladder):
    sol = solve_full(market, ladder, GridSpec(), SolverConfig())
    k = sol.time_index(0.8)
    lab = sol.labels()[k]
    print(f"\n{title}")
    for j in range(lab.shape[1] - 1, -1, -2):  # every other row keeps it compact
        print("  " + "".join("." if c == "C" else c for c in lab[::2, j]))
    for f in detect_features(lab, sol.axis):
        x0, x1, y0, y1 = f.box
        print(f"  {f.kind} of {f.region}: x1 in [{x0:.1f}, {x1:.1f}], x2 in [{y0:.1f}, {y1:.1f}], {f.cells} cells")


show("correlation 0.5", BENCHMARK_MARKET, benchmark_ladder())
show("correlation -0.9", dataclasses.replace(BENCHMARK_MARKET, correlation=-0.9), benchmark_ladder())
show("goal weight 2", BENCHMARK_MARKET, benchmark_ladder(weight=2.0))
