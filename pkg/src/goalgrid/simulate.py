"""Monte Carlo execution of the solved feedback policy.

Paths are simulated in fixed-size blocks; each block draws from its own
generator seeded by ``(seed, block)``, so results do not depend on how many
worker threads process the blocks.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .grid import AxisGrid
from .model import GoalLadder, MarketParams

BLOCK = 4096


class ConfigMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    n_paths: int = 100_000
    initial_wealth: tuple[float, float] = (1.4, 1.4)
    dt_sim: float | None = None  # default: a tenth of each period's solver step
    trace_paths: int = 0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if any(w < 0 for w in self.initial_wealth):
            raise ValueError("initial wealth must be >= 0")
        if self.dt_sim is not None and not self.dt_sim > 0:
            raise ValueError("dt_sim must be > 0")


@dataclass
class SimResult:
    mean_objective: float
    std_error: float
    n_paths: int
    breakdown: dict = field(default_factory=dict)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")


@dataclass
class FeedbackPolicy:
    """Everything the simulator needs, as plain arrays.

    ``alloc_two[n]`` holds the allocation pair used on ``[t_n, t_{n+1})``
    (shape ``(N, N, 2, 2)``: cell, portfolio, stock). ``ray_steps[n]`` is the
    signed number of grid steps to the nearest continuation cell along the
    transfer ray (positive: into the goal portfolio). ``deadline_shift``
    is the coupling plan and ``alloc_last[n]`` the one-wealth allocation.
    """

    axis: AxisGrid
    dt_two: float
    dt_last: float
    alloc_two: np.ndarray
    ray_steps: np.ndarray
    deadline_shift: np.ndarray
    alloc_last: np.ndarray

    @classmethod
    def from_solution(cls, sol) -> "FeedbackPolicy":
        tg, last = sol.two_goal, sol.last
        a = tg.policies.allocations
        c1, c2 = tg.codes
        alloc_two = np.stack([a[c1], a[c2]], axis=-2)
        labels = sol.labels()
        steps = np.stack([ray_projection(lab) for lab in labels])
        alloc_last = last.policies.allocations[last.codes[0]]
        return cls(sol.axis, sol.grid.dt_two_goal, sol.grid.dt_last, alloc_two, steps,
                   sol.coupled.shift.copy(), alloc_last)

    @classmethod
    def idle(cls, axis: AxisGrid, ladder: GoalLadder, dt_two: float, dt_last: float) -> "FeedbackPolicy":
        """Hold cash everywhere and never transfer."""
        n = axis.count
        n2 = round(ladder[0].deadline / dt_two) + 1
        n1 = round((ladder.horizon - ladder[0].deadline) / dt_last) + 1
        return cls(axis, dt_two, dt_last, np.zeros((n2, n, n, 2, 2)), np.zeros((n2, n, n), dtype=int),
                   np.zeros((n, n), dtype=int), np.zeros((n1, n, 2)))


def ray_projection(labels: np.ndarray) -> np.ndarray:
    """Signed steps from each cell to the first continuation cell along its
    transfer ray; zero on continuation cells. If the ray leaves the grid
    before reaching continuation, the last in-grid cell is used."""
    n = labels.shape[0]
    out = np.zeros(labels.shape, dtype=int)
    for i in range(n):
        for j in range(n):
            lab = labels[i, j]
            if lab == "C":
                continue
            d = 1 if lab == "L" else -1
            k = 0
            while 0 <= i + d * (k + 1) < n and 0 <= j - d * (k + 1) < n:
                k += 1
                if labels[i + d * k, j - d * k] == "C":
                    break
            out[i, j] = d * k
    return out


def _substeps(dt_solver: float, dt_sim: float | None) -> int:
    if dt_sim is None:
        return 10
    k = dt_solver / dt_sim
    if round(k) < 1 or abs(k - round(k)) > 1e-9:
        raise ConfigMismatch(f"dt_sim={dt_sim} does not divide the solver step {dt_solver}")
    return round(k)


def _transfer(x1, x2, steps, h):
    """Move ``steps * h`` along the ray, clipped so no wealth goes negative.
    Returns amounts moved into and out of the goal portfolio."""
    amt = steps * h
    amt = np.where(amt > 0, np.minimum(amt, x2), np.maximum(amt, -x1))
    x1 += amt
    x2 -= amt
    return np.maximum(amt, 0.0), np.maximum(-amt, 0.0)


def _simulate_block(policy: FeedbackPolicy, market: MarketParams, ladder: GoalLadder,
                    sim: SimConfig, block: int, size: int, trace: list | None):
    rng = np.random.default_rng(np.random.SeedSequence([sim.seed, block]))
    ax = policy.axis
    h = ax.step
    goal, fund = ladder[0], ladder.fundamental
    beta = market.discount
    vol = market.vol_matrix
    exc = market.excess_drift
    r = market.risk_free
    x1 = np.full(size, float(sim.initial_wealth[0]))
    x2 = np.full(size, float(sim.initial_wealth[1]))
    cost_in = np.zeros(size)
    cost_out = np.zeros(size)
    path0 = block * BLOCK

    def log(t, event, mask=None):
        if trace is None:
            return
        k = min(size, max(0, sim.trace_paths - path0))
        for p in range(k):
            if mask is None or mask[p]:
                trace.append((path0 + p, t, x1[p], x2[p], event))

    def euler(x, alloc, dw, dt):
        drift = r + alloc @ exc
        shock = np.einsum("pi,ij,pj->p", alloc, vol, dw)
        x += x * (drift * dt + shock)
        np.maximum(x, 0.0, out=x)

    # two-wealth period
    sub = _substeps(policy.dt_two, sim.dt_sim)
    dt = policy.dt_two / sub
    n_two = policy.alloc_two.shape[0] - 1
    t = 0.0
    log(t, "start")
    for n in range(n_two):
        for k in range(sub):
            t = (n + k / sub) * policy.dt_two
            i, j = ax.index_of(x1), ax.index_of(x2)
            steps = policy.ray_steps[n][i, j]
            if steps.any():
                l, m = _transfer(x1, x2, steps, h)
                cost_in += goal.penalty_in * np.exp(-beta * t) * l
                cost_out += goal.penalty_out * np.exp(-beta * t) * m
                log(t, "transfer", steps != 0)
                i, j = ax.index_of(x1), ax.index_of(x2)
            a = policy.alloc_two[n][i, j]
            dw = rng.standard_normal((size, 2)) * np.sqrt(dt)
            euler(x1, a[:, 0], dw, dt)
            euler(x2, a[:, 1], dw, dt)
    t1 = goal.deadline
    i, j = ax.index_of(x1), ax.index_of(x2)
    l, m = _transfer(x1, x2, policy.deadline_shift[i, j], h)
    cost_in += goal.penalty_in * np.exp(-beta * t1) * l
    cost_out += goal.penalty_out * np.exp(-beta * t1) * m
    short1 = goal.weight * np.exp(-beta * t1) * np.maximum(goal.target_amount - x1, 0.0)
    log(t1, "deadline")

    # one-wealth period
    sub = _substeps(policy.dt_last, sim.dt_sim)
    dt = policy.dt_last / sub
    for n in range(policy.alloc_last.shape[0] - 1):
        for k in range(sub):
            a = policy.alloc_last[n][ax.index_of(x2)]
            dw = rng.standard_normal((size, 2)) * np.sqrt(dt)
            euler(x2, a, dw, dt)
    short2 = fund.weight * np.exp(-beta * fund.deadline) * np.maximum(fund.target_amount - x2, 0.0)
    log(fund.deadline, "terminal")
    return short1, short2, cost_in, cost_out


def _threads() -> int:
    env = os.environ.get("GOALGRID_THREADS", "0").strip() or "0"
    k = int(env)
    return k if k > 0 else (os.cpu_count() or 1)


def run_policy(policy, market: MarketParams, ladder: GoalLadder, sim: SimConfig,
               threads: int | None = None, trace_path=None) -> SimResult:
    """Estimate the objective of ``policy`` (a FeedbackPolicy or a full
    solution) started from ``sim.initial_wealth`` at time 0."""
    if not isinstance(policy, FeedbackPolicy):
        policy = FeedbackPolicy.from_solution(policy)
    if max(sim.initial_wealth) > policy.axis.max + 1e-12:
        raise ConfigMismatch("initial wealth lies outside the solver grid")
    _substeps(policy.dt_two, sim.dt_sim)
    _substeps(policy.dt_last, sim.dt_sim)
    nblocks = -(-sim.n_paths // BLOCK)
    sizes = [min(BLOCK, sim.n_paths - b * BLOCK) for b in range(nblocks)]
    traces = [[] if sim.trace_paths > b * BLOCK else None for b in range(nblocks)]
    workers = threads or _threads()

    def job(b):
        return _simulate_block(policy, market, ladder, sim, b, sizes[b], traces[b])

    if workers == 1 or nblocks == 1:
        parts = [job(b) for b in range(nblocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(nblocks)))
    comps = [np.concatenate([p[c] for p in parts]) for c in range(4)]
    total = comps[0] + comps[1] + comps[2] + comps[3]
    names = ("shortfall_goal", "shortfall_fundamental", "penalty_in", "penalty_out")
    breakdown = {k: float(v.mean()) for k, v in zip(names, comps)}
    se = float(total.std(ddof=1) / np.sqrt(len(total))) if len(total) > 1 else 0.0
    if trace_path is not None:
        with Path(trace_path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "t", "x1", "x2", "event"])
            for tr in traces:
                for p, t, a, b, e in tr or []:
                    w.writerow([p, f"{t:.6f}", f"{a:.6f}", f"{b:.6f}", e])
    return SimResult(float(sum(breakdown.values())), se, sim.n_paths, breakdown)
