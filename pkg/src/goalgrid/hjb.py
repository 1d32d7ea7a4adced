"""Discrete Hamiltonian, penalized gradient-constrained operator and the
implicit policy-iteration stepper.

The wealth state has one axis (only the fundamental goal is active) or two
axes ``(x1, x2)`` = (shorter-term goal, fundamental goal). First-order terms
are upwinded on the sign of the drift coefficient of each candidate
allocation, second-order terms are central, and the cross term uses the
four-point central stencil. Each time step is backward Euler; the nonlinear
system is solved by policy iteration with a sparse direct solve per sweep.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import AxisGrid, Differences, Stencil, TimeLine, ValueSurface, differences
from .model import Allocation, GoalLadder, MarketParams, supersolution_bound

# argmin candidates within this of the minimum count as ties (lowest code wins)
TIE_TOL = 1e-10
CROSS_STENCILS = ("seven_point", "central")


class PolicyIterationDiverged(RuntimeError):
    def __init__(self, t: float, history: list[float]):
        super().__init__(
            f"policy iteration at t={t:g} did not converge in {len(history)} sweeps "
            f"(last change {history[-1]:.3e})"
        )
        self.t = t
        self.history = history


@dataclass(frozen=True)
class PolicyGrid:
    """Simplex lattice of allocations at a fixed proportion step.

    Codes run with the stock-1 proportion as the major key and the stock-2
    proportion as the minor key, so at step 0.25 code 4 is ``(0, 1)`` and
    code 14 is ``(1, 0)``.
    """

    step: float
    allocations: np.ndarray = field(repr=False)

    @classmethod
    def simplex(cls, step: float) -> "PolicyGrid":
        m = round(1.0 / step)
        if m < 1 or abs(m * step - 1.0) > 1e-9:
            raise ValueError(f"allocation step {step} must divide 1")
        pts = [(i / m, j / m) for i in range(m + 1) for j in range(m + 1 - i)]
        return cls(float(step), np.array(pts))

    def __len__(self) -> int:
        return len(self.allocations)

    def allocation(self, code: int) -> Allocation:
        return Allocation(tuple(self.allocations[code]))

    def code_of(self, weights) -> int:
        d = np.abs(self.allocations - np.asarray(weights, dtype=float)).sum(axis=1)
        k = int(np.argmin(d))
        if d[k] > 1e-9:
            raise ValueError(f"{tuple(weights)} is not on the lattice of step {self.step}")
        return k


@dataclass(frozen=True)
class SolverConfig:
    penalty_scale: float = 1e6
    policy_tol: float = 1e-7
    max_policy_iters: int = 200
    allocation_step_fine: float = 0.01
    allocation_step_coarse: float = 0.25
    cross_stencil: str = "seven_point"

    def __post_init__(self):
        if self.cross_stencil not in CROSS_STENCILS:
            raise ValueError(f"cross_stencil must be one of {CROSS_STENCILS}")
        if not self.penalty_scale > 0:
            raise ValueError("penalty_scale must be > 0")
        if not self.policy_tol > 0:
            raise ValueError("policy_tol must be > 0")
        if self.max_policy_iters < 1:
            raise ValueError("max_policy_iters must be >= 1")
        for s in (self.allocation_step_fine, self.allocation_step_coarse):
            PolicyGrid.simplex(s)


@dataclass
class HamiltonianEval:
    value: float
    codes: tuple[int, ...]
    argmin: tuple[Allocation, ...]


def covariance_block(alloc_pair, wealth_pair, market: MarketParams) -> np.ndarray:
    """Entry (i, j) is ``(alpha_i x_i)^T sigma sigma^T (alpha_j x_j)``."""
    c = market.covariance
    ax = [np.asarray(getattr(a, "weights", a), dtype=float) * x for a, x in zip(alloc_pair, wealth_pair)]
    n = len(ax)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = ax[i] @ c @ ax[j]
    return out


# ---------------------------------------------------------------------------
# generator evaluation, shared by the per-cell API and the slice solver


def _axis_terms(x, allocs, fwd, bwd, sec, market: MarketParams):
    """Drift + own-diffusion part for each allocation: shape (P, *cells)."""
    cov = market.covariance
    drift = market.risk_free + allocs @ market.excess_drift  # (P,)
    var = np.einsum("pi,ij,pj->p", allocs, cov, allocs)  # (P,)
    shape = (-1,) + (1,) * np.ndim(x)
    b = x * drift.reshape(shape)
    a = x * x * var.reshape(shape)
    return b * np.where(b >= 0, fwd, bwd) + 0.5 * a * sec


def _generator_table(xs, d: Differences, market: MarketParams, policies: PolicyGrid, cross_stencil="seven_point"):
    """Discrete generator for every allocation (1-D) or allocation pair (2-D).

    Returns an array of shape (P, *cells) or (P*P, *cells); for pairs the
    flat index is ``code1 * P + code2``.
    """
    allocs = policies.allocations
    f = [_axis_terms(x, allocs, d.forward[a], d.backward[a], d.second[a], market) for a, x in enumerate(xs)]
    if len(xs) == 1:
        return f[0]
    k = allocs @ market.covariance @ allocs.T  # (P, P)
    xx = xs[0] * xs[1]
    cells = (1,) * np.ndim(xx)
    if cross_stencil == "central":
        cross = k.reshape(k.shape + cells) * (xx * d.cross)
    else:
        kp = np.maximum(k, 0.0).reshape(k.shape + cells)
        kn = np.minimum(k, 0.0).reshape(k.shape + cells)
        cross = kp * (xx * d.cross_pos) + kn * (xx * d.cross_neg)
    g = f[0][:, None] + f[1][None, :] + cross
    return g.reshape((len(allocs) ** 2,) + xx.shape)


def _first_argmin(g):
    m = g.min(axis=0)
    k = np.argmax(g <= m + TIE_TOL * (1.0 + np.abs(m)), axis=0)
    return m, k


def hamiltonian_min(
    wealth, stencil: Stencil, market: MarketParams, policies: PolicyGrid, cross_stencil: str = "seven_point"
) -> HamiltonianEval:
    """Minimize the discrete generator at one cell over the allocation lattice
    (the product lattice when two portfolios are active)."""
    xs = [np.asarray(float(x)) for x in np.atleast_1d(wealth)]
    if len(xs) != stencil.ndim:
        raise ValueError("wealth and stencil dimensions differ")
    d = Differences(
        tuple(np.asarray(v) for v in stencil.forward),
        tuple(np.asarray(v) for v in stencil.backward),
        tuple(np.asarray(v) for v in stencil.second),
        None if stencil.cross is None else np.asarray(stencil.cross),
        None if stencil.cross_pos is None else np.asarray(stencil.cross_pos),
        None if stencil.cross_neg is None else np.asarray(stencil.cross_neg),
    )
    g = _generator_table(xs, d, market, policies, cross_stencil)
    m, k = _first_argmin(g)
    k = int(k)
    p = len(policies)
    codes = (k,) if len(xs) == 1 else (k // p, k % p)
    return HamiltonianEval(float(m), codes, tuple(policies.allocation(c) for c in codes))


def hamiltonian_slice(v: np.ndarray, axis: AxisGrid, market: MarketParams, policies: PolicyGrid,
                      cross_stencil: str = "seven_point"):
    """Hamiltonian and argmin codes over a whole slice.

    Returns ``(H, codes)`` where ``codes`` is a tuple with one int array per
    active portfolio.
    """
    xs = _coords(v.ndim, axis)
    d = differences(v, axis.step)
    g = _generator_table(xs, d, market, policies, cross_stencil)
    m, k = _first_argmin(g)
    if v.ndim == 1:
        return m, (k,)
    p = len(policies)
    return m, (k // p, k % p)


def _coords(ndim: int, axis: AxisGrid):
    x = axis.points
    if ndim == 1:
        return [x]
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    return [x1, x2]


# ---------------------------------------------------------------------------
# transfer constraints


def transfer_gaps(v: np.ndarray, h: float, penalty_in: float, penalty_out: float):
    """Discrete gradient-constraint terms along the transfer rays.

    ``gap_in = (V(x) - V(x1+h, x2-h))/h - penalty_in`` (fundamental portfolio
    pays the goal portfolio) and ``gap_out = (V(x) - V(x1-h, x2+h))/h -
    penalty_out``. Both are -inf where the move leaves the domain.
    """
    gin = np.full(v.shape, -np.inf)
    gout = np.full(v.shape, -np.inf)
    gin[:-1, 1:] = (v[:-1, 1:] - v[1:, :-1]) / h - penalty_in
    gout[1:, :-1] = (v[1:, :-1] - v[:-1, 1:]) / h - penalty_out
    return gin, gout


@dataclass
class ResidualParts:
    pde_term: np.ndarray
    gap_in: np.ndarray | None
    gap_out: np.ndarray | None
    residual: np.ndarray


def penalized_residual(
    v: np.ndarray,
    v_next: np.ndarray,
    dt: float,
    axis: AxisGrid,
    market: MarketParams,
    policies: PolicyGrid,
    penalty_in: float | None = None,
    penalty_out: float | None = None,
    penalty_scale: float = 1e6,
    cross_stencil: str = "seven_point",
) -> ResidualParts:
    """``beta V - dV/dt - H + scale * (max(gap_in, 0) + max(gap_out, 0))``.

    ``dV/dt`` is the backward difference ``(v_next - v)/dt``. The penalty
    part is only present for two-wealth slices.
    """
    h_val, _ = hamiltonian_slice(v, axis, market, policies, cross_stencil)
    pde = market.discount * v - (v_next - v) / dt - h_val
    if v.ndim == 1:
        return ResidualParts(pde, None, None, pde.copy())
    gin, gout = transfer_gaps(v, axis.step, penalty_in, penalty_out)
    res = pde + penalty_scale * (np.maximum(gin, 0) + np.maximum(gout, 0))
    return ResidualParts(pde, gin, gout, res)


# ---------------------------------------------------------------------------
# linear system for a frozen policy


def _generator_weights(codes, axis: AxisGrid, market: MarketParams, policies: PolicyGrid,
                       cross_stencil: str = "seven_point"):
    """Stencil weights ``{offset: array}`` of the discrete generator for a
    frozen policy; applying them reproduces ``_generator_table`` exactly."""
    n = axis.count
    h = axis.step
    ndim = len(codes)
    xs = _coords(ndim, axis)
    allocs = [policies.allocations[c] for c in codes]
    cov = market.covariance
    shape = xs[0].shape
    w: dict[tuple[int, ...], np.ndarray] = {}

    def add(off, arr):
        if off not in w:
            w[off] = np.zeros(shape)
        w[off] += arr

    def unit(a, s):
        off = [0] * ndim
        off[a] = s
        return tuple(off)

    zero = (0,) * ndim
    for a in range(ndim):
        x = xs[a]
        b = x * (market.risk_free + allocs[a] @ market.excess_drift)
        var = x * x * np.einsum("...i,ij,...j->...", allocs[a], cov, allocs[a])
        at_min = _edge_mask(shape, a, 0)
        at_max = _edge_mask(shape, a, n - 1)
        pos = b >= 0
        # forward difference, dropped at the outflow edge
        fw = np.where(pos & ~at_max, b / h, 0.0)
        add(unit(a, 1), fw)
        add(zero, -fw)
        # backward difference, replaced by the forward one at x = 0
        bw = np.where(~pos, b / h, 0.0)
        add(zero, np.where(at_min, 0.0, bw))
        add(unit(a, -1), np.where(at_min, 0.0, -bw))
        add(unit(a, 1), np.where(at_min, bw, 0.0))
        add(zero, np.where(at_min, -bw, 0.0))
        # central second difference; one-sided at x = 0, zero at x_max
        c2 = 0.5 * var / (h * h)
        interior = ~at_min & ~at_max
        add(unit(a, 1), np.where(interior, c2, 0.0))
        add(unit(a, -1), np.where(interior, c2, 0.0))
        add(zero, np.where(interior, -2 * c2, 0.0))
        add(zero, np.where(at_min, c2, 0.0))
        add(unit(a, 1), np.where(at_min, -2 * c2, 0.0))
        add(unit(a, 2), np.where(at_min, c2, 0.0))
    if ndim == 2:
        a12 = xs[0] * xs[1] * np.einsum("...i,ij,...j->...", allocs[0], cov, allocs[1])
        if cross_stencil == "central":
            c = a12 / (4 * h * h)
            stencil = {(di, dj): di * dj * c for di in (-1, 1) for dj in (-1, 1)}
        else:
            cp = np.maximum(a12, 0.0) / (2 * h * h)
            cn = np.maximum(-a12, 0.0) / (2 * h * h)
            stencil = {(0, 0): 2 * (cp + cn), (1, 1): cp, (-1, -1): cp, (1, -1): cn, (-1, 1): cn}
            for off in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                stencil[off] = -(cp + cn)
        for off, c in stencil.items():
            _add_ghosted(add, off, c, n)
    return w


def _edge_mask(shape, axis, index):
    m = np.zeros(shape, dtype=bool)
    sl = [slice(None)] * len(shape)
    sl[axis] = index
    m[tuple(sl)] = True
    return m


def _add_ghosted(add, off, coef, n):
    """Add a weight at ``off``, folding linear ghost values (ghost = 2*edge -
    inner) wherever the offset leaves the grid, first along x1 then x2."""
    shape = coef.shape
    parts = [(off, coef)]
    for axis in (0, 1):
        nxt = []
        for o, c in parts:
            if o[axis] == 0:
                nxt.append((o, c))
                continue
            edge = _edge_mask(shape, axis, n - 1 if o[axis] > 0 else 0)
            inward = list(o)
            inward[axis] = -o[axis]
            at = list(o)
            at[axis] = 0
            nxt += [(o, np.where(edge, 0.0, c)), (tuple(at), np.where(edge, 2 * c, 0.0)),
                    (tuple(inward), np.where(edge, -c, 0.0))]
        parts = nxt
    for o, c in parts:
        add(o, c)


def _flat_index(shape, idx):
    return np.ravel_multi_index(idx, shape)


def _assemble(weights: dict, shape) -> sp.csr_matrix:
    """Sparse matrix M with (M v)[cell] = sum_off w[off][cell] * v[cell+off]."""
    grids = np.indices(shape)
    size = int(np.prod(shape))
    rows, cols, vals = [], [], []
    for off, w in weights.items():
        nz = w != 0
        if not nz.any():
            continue
        tgt = [g[nz] + o for g, o in zip(grids, off)]
        ok = np.ones(tgt[0].shape, dtype=bool)
        for t, s in zip(tgt, shape):
            ok &= (t >= 0) & (t < s)
        if not ok.all():
            raise AssertionError(f"stencil offset {off} leaves the grid with nonzero weight")
        rows.append(_flat_index(shape, tuple(g[nz] for g in grids)))
        cols.append(_flat_index(shape, tuple(tgt)))
        vals.append(w[nz])
    if not rows:
        return sp.csr_matrix((size, size))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )


def generator_matrix(codes, axis: AxisGrid, market: MarketParams, policies: PolicyGrid,
                     cross_stencil: str = "seven_point") -> sp.csr_matrix:
    shape = codes[0].shape
    return _assemble(_generator_weights(codes, axis, market, policies, cross_stencil), shape)


# ---------------------------------------------------------------------------
# time stepping


@dataclass
class StepResult:
    values: np.ndarray
    codes: tuple[np.ndarray, ...]
    active_in: np.ndarray | None
    active_out: np.ndarray | None
    iterations: int
    history: list[float]
    max_residual: float
    parts: ResidualParts


def step_backward(
    v_next: np.ndarray,
    t: float,
    dt: float,
    axis: AxisGrid,
    market: MarketParams,
    policies: PolicyGrid,
    config: SolverConfig,
    corner_value: float,
    penalty_in: float | None = None,
    penalty_out: float | None = None,
) -> StepResult:
    """One implicit step from ``t + dt`` back to ``t`` by policy iteration.

    The zero-wealth corner is pinned to ``corner_value``. For two-wealth
    slices ``penalty_in``/``penalty_out`` enable the transfer penalties.
    """
    v_next = np.asarray(v_next, dtype=float)
    shape = v_next.shape
    ndim = v_next.ndim
    h = axis.step
    size = v_next.size
    corner = (0,) * ndim
    corner_flat = 0
    scale = config.penalty_scale
    base_diag = 1.0 / dt + market.discount

    v = v_next.copy()
    v[corner] = corner_value
    history: list[float] = []
    for _ in range(config.max_policy_iters):
        _, codes = hamiltonian_slice(v, axis, market, policies, config.cross_stencil)
        lmat = generator_matrix(codes, axis, market, policies, config.cross_stencil)
        a = sp.identity(size, format="csr") * base_diag - lmat
        rhs = v_next.ravel() / dt
        if ndim == 2:
            gin, gout = transfer_gaps(v, h, penalty_in, penalty_out)
            a = a + _penalty_matrix(gin > 0, gout > 0, shape, scale / h)
            rhs = rhs + scale * (penalty_in * (gin > 0) + penalty_out * (gout > 0)).ravel()
        a = a.tolil()
        a.rows[corner_flat] = [corner_flat]
        a.data[corner_flat] = [1.0]
        rhs[corner_flat] = corner_value
        v_new = spla.spsolve(a.tocsc(), rhs).reshape(shape)
        change = float(np.max(np.abs(v_new - v)))
        history.append(change)
        v = v_new
        if change < config.policy_tol:
            break
    else:
        raise PolicyIterationDiverged(t, history)

    parts = penalized_residual(v, v_next, dt, axis, market, policies, penalty_in, penalty_out, scale,
                               config.cross_stencil)
    _, codes = hamiltonian_slice(v, axis, market, policies, config.cross_stencil)
    res = parts.residual.copy()
    res[corner] = 0.0
    active_in = active_out = None
    if ndim == 2:
        active_in = parts.gap_in > 0
        active_out = parts.gap_out > 0
    return StepResult(v, codes, active_in, active_out, len(history), history, float(np.max(np.abs(res))), parts)


def _penalty_matrix(act_in, act_out, shape, coef) -> sp.csr_matrix:
    w = {
        (0, 0): coef * (act_in.astype(float) + act_out.astype(float)),
        (1, -1): -coef * act_in,
        (-1, 1): -coef * act_out,
    }
    return _assemble(w, shape)


# ---------------------------------------------------------------------------
# period solvers


@dataclass
class PeriodSolution:
    """Backward sweep over one period.

    ``codes[a][n]`` holds the argmin strategy codes of portfolio ``a`` at
    time index ``n``. Two-wealth periods also carry the residual parts used
    for region labels.
    """

    surface: ValueSurface
    policies: PolicyGrid
    codes: tuple[np.ndarray, ...]
    iterations: list[int]
    max_residuals: list[float]
    pde_term: np.ndarray | None = None
    gap_in: np.ndarray | None = None
    gap_out: np.ndarray | None = None

    @property
    def times(self) -> np.ndarray:
        return self.surface.times.points


def solve_last_period(
    market: MarketParams,
    ladder: GoalLadder,
    axis: AxisGrid,
    timeline: TimeLine,
    config: SolverConfig,
) -> PeriodSolution:
    """Sweep the one-wealth equation from the horizon back to ``timeline.start``
    with terminal value ``(G - x)^+``."""
    goal = ladder.fundamental
    if abs(timeline.end - goal.deadline) > 1e-12:
        raise ValueError("time line must end at the fundamental deadline")
    policies = PolicyGrid.simplex(config.allocation_step_fine)
    x = axis.points
    nt = timeline.count
    vals = np.empty((nt, axis.count))
    codes = np.zeros((nt, axis.count), dtype=int)
    vals[-1] = np.maximum(goal.target_amount - x, 0.0)
    codes[-1] = hamiltonian_slice(vals[-1], axis, market, policies)[1][0]
    iters, resid = [], []
    ts = timeline.points
    k = len(ladder) - 1
    for n in range(nt - 2, -1, -1):
        corner = supersolution_bound(ladder, k, ts[n], market.discount)
        r = step_backward(vals[n + 1], ts[n], timeline.step, axis, market, policies, config, corner)
        vals[n] = r.values
        codes[n] = r.codes[0]
        iters.append(r.iterations)
        resid.append(r.max_residual)
    surface = ValueSurface(k, timeline, (axis,), vals)
    return PeriodSolution(surface, policies, (codes,), iters[::-1], resid[::-1])


def solve_two_goal_period(
    v_at_deadline: np.ndarray,
    market: MarketParams,
    ladder: GoalLadder,
    axis: AxisGrid,
    timeline: TimeLine,
    config: SolverConfig,
) -> PeriodSolution:
    """Sweep the penalized two-wealth equation from the shorter deadline back
    to ``timeline.start``, starting from the coupled deadline slice."""
    if len(ladder) != 2:
        raise ValueError("the two-wealth solver handles exactly one goal besides the fundamental one")
    goal = ladder[0]
    policies = PolicyGrid.simplex(config.allocation_step_coarse)
    nt = timeline.count
    n = axis.count
    vals = np.empty((nt, n, n))
    c1 = np.zeros((nt, n, n), dtype=int)
    c2 = np.zeros((nt, n, n), dtype=int)
    pde = np.zeros((nt, n, n))
    gin = np.full((nt, n, n), -np.inf)
    gout = np.full((nt, n, n), -np.inf)
    vals[-1] = v_at_deadline
    _, (c1[-1], c2[-1]) = hamiltonian_slice(vals[-1], axis, market, policies, config.cross_stencil)
    gin[-1], gout[-1] = transfer_gaps(vals[-1], axis.step, goal.penalty_in, goal.penalty_out)
    iters, resid = [], []
    ts = timeline.points
    for m in range(nt - 2, -1, -1):
        corner = supersolution_bound(ladder, 0, ts[m], market.discount)
        r = step_backward(
            vals[m + 1], ts[m], timeline.step, axis, market, policies, config, corner,
            goal.penalty_in, goal.penalty_out,
        )
        vals[m] = r.values
        c1[m], c2[m] = r.codes
        pde[m] = r.parts.pde_term
        gin[m], gout[m] = r.parts.gap_in, r.parts.gap_out
        iters.append(r.iterations)
        resid.append(r.max_residual)
    surface = ValueSurface(0, timeline, (axis, axis), vals)
    return PeriodSolution(surface, policies, (c1, c2), iters[::-1], resid[::-1], pde, gin, gout)

