"""Domain types: goals, market coefficients and admissible controls.

All money amounts are in thousands of dollars.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InvalidLadder(ValueError):
    """A goal ladder violates an ordering or cost invariant.

    ``path`` names the offending field, e.g. ``goals[0].penalty_in``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class InvalidMarket(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


@dataclass(frozen=True)
class GoalSpec:
    """One investment goal: amount ``target_amount`` needed by ``deadline``."""

    target_amount: float
    deadline: float
    weight: float = 1.0
    penalty_in: float = 0.0
    penalty_out: float = 0.0


@dataclass(frozen=True)
class GoalLadder:
    """Goals ordered by deadline; the last one is the fundamental goal."""

    goals: tuple[GoalSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "goals", tuple(self.goals))

    def __len__(self):
        return len(self.goals)

    def __getitem__(self, k: int) -> GoalSpec:
        return self.goals[k]

    @property
    def fundamental(self) -> GoalSpec:
        return self.goals[-1]

    @property
    def horizon(self) -> float:
        return self.goals[-1].deadline


def validate_ladder(ladder: GoalLadder) -> GoalLadder:
    """Check every ladder invariant and return the ladder unchanged.

    Raises InvalidLadder naming the first offending field.
    """
    goals = ladder.goals
    if len(goals) < 1:
        raise InvalidLadder("goals", "at least the fundamental goal is required")
    for k, g in enumerate(goals):
        p = f"goals[{k}]"
        for name in ("target_amount", "deadline", "weight", "penalty_in", "penalty_out"):
            if not math.isfinite(getattr(g, name)):
                raise InvalidLadder(f"{p}.{name}", "must be finite")
        if g.target_amount <= 0:
            raise InvalidLadder(f"{p}.target_amount", "must be > 0")
        if g.deadline <= 0:
            raise InvalidLadder(f"{p}.deadline", "must be > 0")
        if g.weight < 0:
            raise InvalidLadder(f"{p}.weight", "must be >= 0")
        if g.penalty_in < 0:
            raise InvalidLadder(f"{p}.penalty_in", "must be >= 0")
        if g.penalty_out < 0:
            raise InvalidLadder(f"{p}.penalty_out", "must be >= 0")
        if k < len(goals) - 1 and g.penalty_in + g.penalty_out <= 0:
            raise InvalidLadder(f"{p}.penalty_in", "penalty_in + penalty_out must be > 0")
        if k > 0 and g.deadline <= goals[k - 1].deadline:
            raise InvalidLadder(f"{p}.deadline", "deadlines must be strictly increasing")
    if goals[-1].weight != 1.0:
        raise InvalidLadder(f"goals[{len(goals) - 1}].weight", "fundamental goal weight is fixed at 1.0")
    return ladder


@dataclass(frozen=True)
class MarketParams:
    """Constant market coefficients for two stocks."""

    risk_free: float
    discount: float
    drifts: tuple[float, ...]
    vol_1: float
    vol_2: float
    correlation: float

    def __post_init__(self):
        object.__setattr__(self, "drifts", tuple(float(m) for m in self.drifts))
        if len(self.drifts) != 2:
            raise InvalidMarket("drifts", "exactly two stock drifts are supported")
        if not (self.vol_1 > 0):
            raise InvalidMarket("vol_1", "must be > 0")
        if not (self.vol_2 > 0):
            raise InvalidMarket("vol_2", "must be > 0")
        if not (abs(self.correlation) <= 1):
            raise InvalidMarket("correlation", "must lie in [-1, 1]")
        if self.discount < 0:
            raise InvalidMarket("discount", "must be >= 0")

    @property
    def excess_drift(self) -> np.ndarray:
        return np.asarray(self.drifts) - self.risk_free

    @property
    def vol_matrix(self) -> np.ndarray:
        return cholesky_vol(self)

    @property
    def covariance(self) -> np.ndarray:
        s = cholesky_vol(self)
        return s @ s.T


def cholesky_vol(market: MarketParams) -> np.ndarray:
    """Lower-triangular 2x2 volatility matrix with the prescribed correlation."""
    s1, s2, rho = market.vol_1, market.vol_2, market.correlation
    return np.array([[s1, 0.0], [rho * s2, math.sqrt(max(0.0, 1.0 - rho * rho)) * s2]])


@dataclass(frozen=True)
class Allocation:
    """Stock proportions of one portfolio; no shorting, no borrowing."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        object.__setattr__(self, "weights", w)
        if any(v < -1e-12 for v in w):
            raise ValueError(f"allocation {w} has a negative entry")
        if sum(w) > 1 + 1e-12:
            raise ValueError(f"allocation {w} sums above 1")


@dataclass(frozen=True)
class TransferDecision:
    """Net instantaneous transfer: ``into_goal`` from the fundamental
    portfolio, ``out_of_goal`` back to it. Never both."""

    into_goal: float = 0.0
    out_of_goal: float = 0.0

    def __post_init__(self):
        if self.into_goal < 0 or self.out_of_goal < 0:
            raise ValueError("transfer amounts must be nonnegative")
        if self.into_goal > 0 and self.out_of_goal > 0:
            raise ValueError("paying both transfer penalties at once is dominated")


def supersolution_bound(ladder: GoalLadder, k: int, t, discount: float = 0.0):
    """Value of doing nothing from zero wealth: sum_{i>=k} w_i exp(-beta (T_i - t)) G_i.

    ``k`` is a zero-based goal index; ``t`` may be an array.
    """
    t = np.asarray(t, dtype=float)
    total = np.zeros_like(t)
    for g in ladder.goals[k:]:
        total = total + g.weight * np.exp(-discount * (g.deadline - t)) * g.target_amount
    return total if total.ndim else float(total)


BENCHMARK_MARKET = MarketParams(
    risk_free=0.0, discount=0.0, drifts=(0.2, 0.3), vol_1=0.3, vol_2=0.4, correlation=0.5
)


def benchmark_ladder(weight: float = 1.0, penalty_in: float = 0.3, penalty_out: float = 0.1) -> GoalLadder:
    return GoalLadder(
        (
            GoalSpec(5.0, 1.0, weight, penalty_in, penalty_out),
            GoalSpec(4.0, 2.0),
        )
    )
