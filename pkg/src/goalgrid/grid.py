"""Uniform wealth axes, time lines and finite-difference stencils."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class NonconformingGrid(ValueError):
    pass


def _count(span: float, step: float, what: str) -> int:
    if step <= 0:
        raise NonconformingGrid(f"{what} step must be > 0, got {step}")
    n = span / step
    k = round(n)
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, abs(n)):
        raise NonconformingGrid(f"{what} span {span} is not a multiple of step {step}")
    return k + 1


@dataclass(frozen=True)
class AxisGrid:
    """Wealth axis ``0, step, ..., (count-1)*step``."""

    step: float
    count: int

    @property
    def min(self) -> float:
        return 0.0

    @property
    def max(self) -> float:
        return (self.count - 1) * self.step

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.count) * self.step

    def coord(self, index):
        return np.asarray(index) * self.step

    def index_of(self, x):
        """Nearest cell index, clipped to the axis."""
        i = np.rint(np.asarray(x, dtype=float) / self.step).astype(int)
        return np.clip(i, 0, self.count - 1)


@dataclass(frozen=True)
class TimeLine:
    start: float
    end: float
    step: float
    count: int

    @property
    def points(self) -> np.ndarray:
        pts = self.start + np.arange(self.count) * self.step
        pts[-1] = self.end
        return pts

    def index_of(self, t: float) -> int:
        return int(round((t - self.start) / self.step))


def make_axis(x_max: float, dx: float) -> AxisGrid:
    return AxisGrid(float(dx), _count(x_max, dx, "wealth"))


def make_timeline(t_start: float, t_end: float, dt: float) -> TimeLine:
    return TimeLine(float(t_start), float(t_end), float(dt), _count(t_end - t_start, dt, "time"))


def build_grid(x_max: float, dx: float, t_start: float, t_end: float, dt: float) -> tuple[AxisGrid, TimeLine]:
    """Wealth axis on [0, x_max] and time line on [t_start, t_end], both inclusive."""
    return make_axis(x_max, dx), make_timeline(t_start, t_end, dt)


@dataclass
class ValueSurface:
    """Value samples for one inter-deadline period.

    ``values`` has shape ``(times.count, *[a.count for a in axes])``.
    ``period_index`` is the zero-based index of the first active goal.
    """

    period_index: int
    times: TimeLine
    axes: tuple[AxisGrid, ...]
    values: np.ndarray

    def slice_at(self, t: float) -> np.ndarray:
        return self.values[self.times.index_of(t)]

    def to_csv(self, path) -> None:
        write_surface_csv(path, self.times.points, self.axes, self.values)


def write_surface_csv(path, times, axes, values) -> None:
    """Rows ``t,x,value`` (1-D) or ``t,x1,x2,value`` (2-D), time-major then x1-major."""
    values = np.asarray(values)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if len(axes) == 1:
            w.writerow(["t", "x", "value"])
            xs = axes[0].points
            for n, t in enumerate(times):
                for i, x in enumerate(xs):
                    w.writerow([f"{t:.6f}", f"{x:.6f}", f"{values[n, i]:.6f}"])
        else:
            w.writerow(["t", "x1", "x2", "value"])
            x1s, x2s = axes[0].points, axes[1].points
            for n, t in enumerate(times):
                for i, x1 in enumerate(x1s):
                    for j, x2 in enumerate(x2s):
                        w.writerow([f"{t:.6f}", f"{x1:.6f}", f"{x2:.6f}", f"{values[n, i, j]:.6f}"])


@dataclass
class Differences:
    """Finite differences of a slice, one array per axis, same shape as the slice.

    Interior cells: one-sided first differences and central second/cross
    differences. At x = 0 the backward difference falls back to the
    forward one and the second difference to the one-sided
    ``(v0 - 2 v1 + v2) / h^2``. At x = x_max the second difference is zero
    (linear ghost), the forward difference is zero (outflow ghost) and
    the cross difference uses the linear ghost.
    """

    forward: tuple[np.ndarray, ...]
    backward: tuple[np.ndarray, ...]
    second: tuple[np.ndarray, ...]
    cross: np.ndarray | None
    cross_pos: np.ndarray | None = None
    cross_neg: np.ndarray | None = None


def differences(v: np.ndarray, h: float) -> Differences:
    v = np.asarray(v, dtype=float)
    fwd, bwd, sec = [], [], []
    for ax in range(v.ndim):
        vm = np.moveaxis(v, ax, 0)
        f = np.zeros_like(vm)
        b = np.zeros_like(vm)
        s = np.zeros_like(vm)
        d = (vm[1:] - vm[:-1]) / h
        f[:-1] = d
        b[1:] = d
        b[0] = d[0]
        if vm.shape[0] >= 3:
            s[1:-1] = (vm[2:] - 2 * vm[1:-1] + vm[:-2]) / (h * h)
            s[0] = s[1]
        fwd.append(np.moveaxis(f, 0, ax))
        bwd.append(np.moveaxis(b, 0, ax))
        sec.append(np.moveaxis(s, 0, ax))
    cross = cross_pos = cross_neg = None
    if v.ndim == 2:
        g = _ghost_pad(v)
        cross = (g[2:, 2:] - g[2:, :-2] - g[:-2, 2:] + g[:-2, :-2]) / (4 * h * h)
        # seven-point variants: the diagonal pair follows the sign of the
        # cross coefficient so that its weights stay nonnegative
        c = g[1:-1, 1:-1]
        axial = g[2:, 1:-1] + g[:-2, 1:-1] + g[1:-1, 2:] + g[1:-1, :-2]
        cross_pos = (2 * c + g[2:, 2:] + g[:-2, :-2] - axial) / (2 * h * h)
        cross_neg = -(2 * c + g[2:, :-2] + g[:-2, 2:] - axial) / (2 * h * h)
    return Differences(tuple(fwd), tuple(bwd), tuple(sec), cross, cross_pos, cross_neg)


def _ghost_pad(v: np.ndarray) -> np.ndarray:
    g = np.zeros((v.shape[0] + 2, v.shape[1] + 2))
    g[1:-1, 1:-1] = v
    g[0, :] = 2 * g[1, :] - g[2, :]
    g[-1, :] = 2 * g[-2, :] - g[-3, :]
    g[:, 0] = 2 * g[:, 1] - g[:, 2]
    g[:, -1] = 2 * g[:, -2] - g[:, -3]
    return g


@dataclass(frozen=True)
class Stencil:
    """Differences at a single cell; tuples are indexed by axis.

    ``cross`` is the four-point central cross difference; ``cross_pos`` and
    ``cross_neg`` are the seven-point forms used for positive and negative
    cross coefficients.
    """

    center: float
    forward: tuple[float, ...]
    backward: tuple[float, ...]
    second: tuple[float, ...]
    cross: float | None = None
    cross_pos: float | None = None
    cross_neg: float | None = None

    @property
    def ndim(self) -> int:
        return len(self.forward)


def stencil_at(surface: ValueSurface | np.ndarray, time_index: int | None, cell_index, h: float | None = None) -> Stencil:
    """Stencil of one cell of a surface (or of a bare slice when ``h`` is given)."""
    if isinstance(surface, ValueSurface):
        v = surface.values[time_index]
        h = surface.axes[0].step
    else:
        v = np.asarray(surface, dtype=float)
        if time_index is not None:
            v = v[time_index]
    idx = tuple(np.atleast_1d(cell_index).tolist())
    d = differences(v, h)
    return Stencil(
        center=float(v[idx]),
        forward=tuple(float(a[idx]) for a in d.forward),
        backward=tuple(float(a[idx]) for a in d.backward),
        second=tuple(float(a[idx]) for a in d.second),
        cross=None if d.cross is None else float(d.cross[idx]),
        cross_pos=None if d.cross_pos is None else float(d.cross_pos[idx]),
        cross_neg=None if d.cross_neg is None else float(d.cross_neg[idx]),
    )


__all__ = [
    "AxisGrid",
    "TimeLine",
    "ValueSurface",
    "Stencil",
    "Differences",
    "NonconformingGrid",
    "build_grid",
    "make_axis",
    "make_timeline",
    "differences",
    "stencil_at",
    "write_surface_csv",
]
