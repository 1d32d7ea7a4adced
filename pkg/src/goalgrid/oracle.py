"""Brute-force discrete-time dynamic program on a coarse grid.

Each wealth portfolio evolves by one Euler step per time step, driven by a
two-point noise per Brownian component (``+-sqrt(dt)`` with probability
1/2 each, so four joint outcomes); this matches the mean and covariance of
the Euler increment. Off-grid successors are read by (bi)linear
interpolation, clamped to the domain. While both goals are active the
investor first chooses a transfer along the ray, then an allocation pair.
Nothing here shares code with the finite-difference solver.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import AxisGrid, make_axis, make_timeline
from .model import GoalLadder, MarketParams

BUDGET = 10**8
NOISE = np.array([(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)])


class BudgetExceeded(ValueError):
    pass


def _lattice(step):
    m = round(1 / step)
    return np.array([(i / m, j / m) for i in range(m + 1) for j in range(m + 1 - i)])


def _interp1(v, pos, h):
    """Linear interpolation of the 1-D table ``v`` at wealth ``pos``."""
    n = len(v)
    u = np.clip(pos / h, 0.0, n - 1.0)
    k = np.minimum(np.floor(u).astype(int), n - 2)
    f = u - k
    return (1 - f) * v[k] + f * v[k + 1]


def _interp2(v, p1, p2, h):
    n = v.shape[0]
    u = np.clip(p1 / h, 0.0, n - 1.0)
    w = np.clip(p2 / h, 0.0, n - 1.0)
    i = np.minimum(np.floor(u).astype(int), n - 2)
    j = np.minimum(np.floor(w).astype(int), n - 2)
    a = u - i
    b = w - j
    return ((1 - a) * (1 - b) * v[i, j] + a * (1 - b) * v[i + 1, j]
            + (1 - a) * b * v[i, j + 1] + a * b * v[i + 1, j + 1])


def _growth(allocs, market: MarketParams, dt):
    """Per-unit-wealth factor ``1 + drift dt + (alpha^T sigma) xi sqrt(dt)``
    for every allocation and noise outcome: shape (P, 4)."""
    drift = market.risk_free + allocs @ market.excess_drift
    load = allocs @ market.vol_matrix  # (P, 2)
    return 1.0 + drift[:, None] * dt + (load @ NOISE.T) * np.sqrt(dt)


@dataclass
class OracleTable:
    axis: AxisGrid
    last_times: np.ndarray
    last_values: np.ndarray  # (n_last, N): fundamental goal only, [T1, T]
    two_times: np.ndarray
    two_values: np.ndarray  # (n_two, N, N) on [0, T1]; last slice is the coupled one

    @property
    def at_start(self) -> np.ndarray:
        return self.two_values[0]

    @property
    def after_deadline(self) -> np.ndarray:
        return self.last_values[0]

    @property
    def before_deadline(self) -> np.ndarray:
        return self.two_values[-1]

    def to_csv(self, path) -> None:
        """Two-wealth table in the surface CSV layout ``t,x1,x2,value``."""
        x = self.axis.points
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x1", "x2", "value"])
            for t, sl in zip(self.two_times, self.two_values):
                for i, x1 in enumerate(x):
                    for j, x2 in enumerate(x):
                        w.writerow([f"{t:.6f}", f"{x1:.6f}", f"{x2:.6f}", f"{sl[i, j]:.6f}"])


def _couple(v2, goal, x, h):
    """Cheapest single transfer at the deadline, by explicit enumeration."""
    n = len(x)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            best = goal.weight * max(goal.target_amount - x[i], 0.0) + v2[j]
            for s in range(-i, j + 1):
                if s == 0 or i + s >= n or j - s >= n:
                    continue
                fee = goal.penalty_in * s * h if s > 0 else goal.penalty_out * (-s) * h
                c = fee + goal.weight * max(goal.target_amount - x[i + s], 0.0) + v2[j - s]
                best = min(best, c)
            out[i, j] = best
    return out


def _transfer_min(c, goal, h):
    """Min over ray shifts of fee + c(shifted cell)."""
    n = c.shape[0]
    best = c.copy()
    for i in range(n):
        for j in range(n):
            for s in range(-i, j + 1):
                if s == 0 or i + s >= n or j - s >= n:
                    continue
                fee = goal.penalty_in * s * h if s > 0 else goal.penalty_out * (-s) * h
                v = fee + c[i + s, j - s]
                if v < best[i, j]:
                    best[i, j] = v
    return best


def dp_last_period(market: MarketParams, target: float, axis: AxisGrid, steps: int, dt: float,
                   allocation_step: float = 0.25) -> np.ndarray:
    """One-wealth backward induction from ``(target - x)^+`` over ``steps``
    steps; row ``k`` is the value ``steps - k`` steps before the end."""
    x = axis.points
    g = _growth(_lattice(allocation_step), market, dt)
    disc = np.exp(-market.discount * dt)
    out = np.empty((steps + 1, axis.count))
    out[-1] = np.maximum(target - x, 0.0)
    for k in range(steps - 1, -1, -1):
        nxt = _interp1(out[k + 1], x[None, None, :] * g[:, :, None], axis.step)  # (P, 4, N)
        out[k] = disc * nxt.mean(axis=1).min(axis=0)
    return out


def dp_value(
    market: MarketParams,
    ladder: GoalLadder,
    x_max: float = 10.0,
    dx: float = 0.5,
    dt: float = 0.25,
    allocation_step: float = 0.25,
) -> OracleTable:
    if len(ladder) != 2:
        raise ValueError("the oracle covers one goal plus the fundamental goal")
    axis = make_axis(x_max, dx)
    goal, fund = ladder[0], ladder.fundamental
    t1, tn = goal.deadline, ladder.horizon
    last_tl = make_timeline(t1, tn, dt)
    two_tl = make_timeline(0.0, t1, dt)
    allocs = _lattice(allocation_step)
    n, p = axis.count, len(allocs)
    layer = n * n * (p * p + n) * len(NOISE)
    if layer > BUDGET:
        raise BudgetExceeded(f"{layer} state-control-outcome triples per layer exceed {BUDGET}")

    x = axis.points
    h = axis.step
    disc = np.exp(-market.discount * dt)
    g = _growth(allocs, market, dt)  # (P, 4)

    last = dp_last_period(market, fund.target_amount, axis, last_tl.count - 1, dt, allocation_step)

    two = np.empty((two_tl.count, n, n))
    two[-1] = _couple(last[0], goal, x, h)
    x1 = x[:, None] * np.ones((1, n))
    x2 = x[None, :] * np.ones((n, 1))
    for k in range(two_tl.count - 2, -1, -1):
        cont = np.full((n, n), np.inf)
        for a in range(p):
            p1 = x1[None] * g[a][:, None, None]  # (4, N, N)
            for b in range(p):
                p2 = x2[None] * g[b][:, None, None]
                e = _interp2(two[k + 1], p1, p2, h).mean(axis=0)
                np.minimum(cont, e, out=cont)
        two[k] = _transfer_min(disc * cont, goal, h)
    return OracleTable(axis, last_tl.points, last, two_tl.points, two)
