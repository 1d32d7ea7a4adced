"""Goal-based portfolio selection with mental-accounting transfer costs.

Finite-difference solver for the coupled two-goal control problem, free
boundary extraction, a Monte Carlo policy executor and a brute-force
dynamic-programming oracle.
"""
from .coupling import CoupledSlice, couple_at_deadline, verify_coupling_vi
from .grid import AxisGrid, NonconformingGrid, TimeLine, ValueSurface, build_grid, make_axis, make_timeline, stencil_at
from .hjb import (
    PolicyGrid,
    PolicyIterationDiverged,
    SolverConfig,
    covariance_block,
    hamiltonian_min,
    penalized_residual,
    solve_last_period,
    solve_two_goal_period,
    step_backward,
)
from .model import (
    BENCHMARK_MARKET,
    Allocation,
    GoalLadder,
    GoalSpec,
    InvalidLadder,
    InvalidMarket,
    MarketParams,
    TransferDecision,
    benchmark_ladder,
    cholesky_vol,
    supersolution_bound,
    validate_ladder,
)
from .oracle import BudgetExceeded, dp_value
from .pipeline import FullSolution, GridSpec, solve_full
from .regions import EmptyRegion, RegionLabel, ThresholdReport, classify, detect_features, extract_thresholds
from .simulate import ConfigMismatch, FeedbackPolicy, SimConfig, SimResult, run_policy

__version__ = "0.1.0"
