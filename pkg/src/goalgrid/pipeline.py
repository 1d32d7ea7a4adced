"""Full backward pass: last period, deadline coupling, two-wealth period."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .coupling import CoupledSlice, couple_at_deadline
from .grid import AxisGrid, make_axis, make_timeline
from .hjb import PeriodSolution, SolverConfig, solve_last_period, solve_two_goal_period
from .model import GoalLadder, MarketParams
from .regions import LABEL_TOL, classify, classify_deadline, fill_gaps


@dataclass(frozen=True)
class GridSpec:
    """Wealth axis shared by both periods and the time step of each period."""

    x_max: float = 10.0
    dx: float = 0.2
    dt_last: float = 0.01
    dt_two_goal: float = 0.2

    def axis(self) -> AxisGrid:
        return make_axis(self.x_max, self.dx)


@dataclass
class FullSolution:
    market: MarketParams
    ladder: GoalLadder
    grid: GridSpec
    solver: SolverConfig
    last: PeriodSolution
    coupled: CoupledSlice
    two_goal: PeriodSolution
    elapsed: float

    @property
    def axis(self) -> AxisGrid:
        return self.two_goal.surface.axes[0]

    def labels(self, tol: float = LABEL_TOL, close_gaps: bool = False) -> np.ndarray:
        """Region labels for every time of the two-wealth period; the last
        slice (the deadline) comes from the coupling plan. With
        ``close_gaps`` the one- and two-cell continuation seams inside a
        transfer region are relabeled as that region."""
        tg = self.two_goal
        lab = classify(tg.pde_term, tg.gap_in, tg.gap_out, tol)
        lab[-1] = classify_deadline(self.coupled)
        if close_gaps:
            lab = np.stack([fill_gaps(sl) for sl in lab])
        return lab

    def time_index(self, t: float) -> int:
        tl = self.two_goal.surface.times
        k = tl.index_of(t)
        if not 0 <= k < tl.count or abs(tl.points[k] - t) > 1e-9:
            raise ValueError(f"t={t} is not on the two-wealth time line")
        return k

    def value(self, t: float, x1: float, x2: float) -> float:
        ax = self.axis
        return float(self.two_goal.surface.values[self.time_index(t), ax.index_of(x1), ax.index_of(x2)])


def solve_full(market: MarketParams, ladder: GoalLadder, grid: GridSpec, solver: SolverConfig) -> FullSolution:
    if len(ladder) != 2:
        raise ValueError("the solver path covers one goal plus the fundamental goal")
    t0 = time.perf_counter()
    axis = grid.axis()
    t1 = ladder[0].deadline
    last = solve_last_period(market, ladder, axis, make_timeline(t1, ladder.horizon, grid.dt_last), solver)
    coupled = couple_at_deadline(last.surface.values[0], ladder[0], axis)
    two = solve_two_goal_period(coupled.values, market, ladder, axis, make_timeline(0.0, t1, grid.dt_two_goal), solver)
    return FullSolution(market, ladder, grid, solver, last, coupled, two, time.perf_counter() - t0)
