"""Deadline coupling: the shorter-term goal's value at its deadline.

At the deadline the investor may shift money along the transfer ray
``(x1 + s h, x2 - s h)`` once, paying ``penalty_in`` per unit moved into the
goal portfolio (s > 0) or ``penalty_out`` per unit moved back (s < 0), then
settles the shortfall of the expiring goal. Transfers are quantized to the
wealth step, so the minimization is an exact search over the ray.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import AxisGrid
from .model import GoalSpec, TransferDecision

# two costs closer than this are treated as equal (smaller transfer wins)
COST_TIE = 1e-12


@dataclass
class CoupledSlice:
    """Value of the two-wealth problem at the shorter deadline.

    ``shift[i, j]`` is the optimal number of grid steps moved along the ray
    (positive: into the goal portfolio). ``obstacle`` is the zero-transfer
    cost ``w (G - x1)^+ + V_next(x2)``.
    """

    axis: AxisGrid
    values: np.ndarray
    shift: np.ndarray
    obstacle: np.ndarray

    @property
    def transfer_in(self) -> np.ndarray:
        return np.maximum(self.shift, 0) * self.axis.step

    @property
    def transfer_out(self) -> np.ndarray:
        return np.maximum(-self.shift, 0) * self.axis.step

    def plan(self, i: int, j: int) -> TransferDecision:
        return TransferDecision(float(self.transfer_in[i, j]), float(self.transfer_out[i, j]))

    def post_transfer(self) -> tuple[np.ndarray, np.ndarray]:
        """Wealth coordinates after the optimal transfer, per cell."""
        n = self.axis.count
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        return self.axis.coord(i + self.shift), self.axis.coord(j - self.shift)

    def to_csv(self, path) -> None:
        x = self.axis.points
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x1", "x2", "value", "transfer_l", "transfer_m"])
            tin, tout = self.transfer_in, self.transfer_out
            for i, x1 in enumerate(x):
                for j, x2 in enumerate(x):
                    w.writerow([f"{x1:.6f}", f"{x2:.6f}", f"{self.values[i, j]:.6f}",
                                f"{tin[i, j]:.6f}", f"{tout[i, j]:.6f}"])


def ray_minimize(obstacle: np.ndarray, h: float, penalty_in: float, penalty_out: float):
    """Minimize ``cost(s) + obstacle(i+s, j-s)`` over all feasible shifts s.

    Shifts are scanned in order of increasing ``|s|`` (positive first) and
    replaced only on a strict improvement, so ties keep the smallest move.
    Returns ``(values, shift)``.
    """
    n = obstacle.shape[0]
    best = obstacle.copy()
    shift = np.zeros(obstacle.shape, dtype=int)
    order = [s for k in range(1, n) for s in (k, -k)]
    for s in order:
        cost = penalty_in * s * h if s > 0 else -penalty_out * s * h
        cand = np.full(obstacle.shape, np.inf)
        # target cell (i+s, j-s) must stay inside [0, n-1]^2
        if s > 0:
            cand[: n - s, s:] = cost + obstacle[s:, : n - s]
        else:
            k = -s
            cand[k:, : n - k] = cost + obstacle[: n - k, k:]
        better = cand < best - COST_TIE
        best = np.where(better, cand, best)
        shift = np.where(better, s, shift)
    return best, shift


def couple_at_deadline(v_next: np.ndarray, goal: GoalSpec, axis: AxisGrid) -> CoupledSlice:
    """Build the coupled deadline slice from the one-wealth value ``v_next``
    (a 1-D slice on ``axis`` at the goal's deadline)."""
    v_next = np.asarray(v_next, dtype=float)
    if v_next.shape != (axis.count,):
        raise ValueError("v_next must be a 1-D slice on the coupling axis")
    x = axis.points
    obstacle = goal.weight * np.maximum(goal.target_amount - x, 0.0)[:, None] + v_next[None, :]
    values, shift = ray_minimize(obstacle, axis.step, goal.penalty_in, goal.penalty_out)
    return CoupledSlice(axis, values, shift, obstacle)


@dataclass(frozen=True)
class Violation:
    i: int
    j: int
    term: str
    amount: float


def verify_coupling_vi(
    cs: CoupledSlice, penalty_in: float, penalty_out: float, tol: float = 1e-9
) -> list[Violation]:
    """Check the discrete deadline variational inequality cell by cell.

    The three terms are the obstacle gap ``V - obstacle`` and the two ray
    differences ``(V(x) - V(x1±h, x2∓h))/h - penalty``. Each must be <= tol
    and at every cell the largest must be >= -tol.
    """
    v = cs.values
    h = cs.axis.step
    gap = v - cs.obstacle
    gin = np.full(v.shape, -np.inf)
    gout = np.full(v.shape, -np.inf)
    gin[:-1, 1:] = (v[:-1, 1:] - v[1:, :-1]) / h - penalty_in
    gout[1:, :-1] = (v[1:, :-1] - v[:-1, 1:]) / h - penalty_out
    out: list[Violation] = []
    for name, term in (("obstacle", gap), ("transfer_in", gin), ("transfer_out", gout)):
        for i, j in zip(*np.nonzero(term > tol)):
            out.append(Violation(int(i), int(j), name, float(term[i, j])))
    top = np.maximum(gap, np.maximum(gin, gout))
    for i, j in zip(*np.nonzero(top < -tol)):
        out.append(Violation(int(i), int(j), "slack", float(top[i, j])))
    return out
