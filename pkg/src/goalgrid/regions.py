"""Region labels, free-boundary thresholds and geometric features.

Labels are single characters so that label grids are plain numpy string
arrays: ``L`` (transfer into the goal portfolio), ``M`` (transfer out of
it) and ``C`` (continuation).
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import ndimage

from .coupling import CoupledSlice
from .grid import AxisGrid
from .model import GoalSpec

# a constraint counts as binding only when the PDE term is below -LABEL_TOL
LABEL_TOL = 1e-6


class RegionLabel(str, Enum):
    TransferIntoGoal = "L"
    TransferOutOfGoal = "M"
    Continue = "C"


class EmptyRegion(ValueError):
    def __init__(self, which: str):
        super().__init__(f"no cells in the {which} region")
        self.which = which


def classify(pde_term, gap_in, gap_out, tol: float = LABEL_TOL) -> np.ndarray:
    """Label cells of a converged penalized slice.

    A transfer constraint binds where its gap is positive and the PDE term
    is strictly negative (beyond ``tol``). When both the PDE term and a
    constraint vanish the cell stays in continuation.
    """
    pde_term = np.asarray(pde_term)
    lab = np.full(pde_term.shape, "C", dtype="<U1")
    live = pde_term < -tol
    into = live & (gap_in > 0) & (gap_in >= gap_out)
    out = live & (gap_out > 0) & ~into
    lab[into] = "L"
    lab[out] = "M"
    return lab


def classify_deadline(cs: CoupledSlice) -> np.ndarray:
    """Labels at the deadline, read from the coupling transfer plan."""
    lab = np.full(cs.values.shape, "C", dtype="<U1")
    lab[cs.shift > 0] = "L"
    lab[cs.shift < 0] = "M"
    return lab


@dataclass
class ThresholdReport:
    """Post-transfer levels of the deadline transfer regions.

    ``split_abscissa`` is the smallest x1 on the x2 = 0 row whose transfer
    out leaves the goal portfolio at its target rather than below it.
    Fields are ``None`` when extracted with ``allow_missing``.
    """

    sellback_target: float | None
    transferin_floor: float | None
    surplus_cap: float | None
    split_abscissa: float | None = None

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")


def extract_thresholds(cs: CoupledSlice, goal: GoalSpec, allow_missing: bool = False) -> ThresholdReport:
    h = cs.axis.step
    px1, px2 = cs.post_transfer()
    x1 = cs.axis.points[:, None] * np.ones_like(px1)
    lab = classify_deadline(cs)
    m = lab == "M"
    below = m & (px1 < goal.target_amount - h / 2)
    at_goal = m & (px1 >= goal.target_amount - h / 2)
    into = lab == "L"

    def need(mask, which):
        if mask.any():
            return True
        if allow_missing:
            return False
        raise EmptyRegion(which)

    sellback = None
    if need(below, "transfer-out (below target)"):
        vals, counts = np.unique(np.round(px2[below] / h).astype(int), return_counts=True)
        sellback = float(vals[np.argmax(counts)] * h)
    floor = float(px2[into].min()) if need(into, "transfer-in") else None
    cap = float(px2[at_goal].max()) if need(at_goal, "transfer-out (surplus)") else None
    split = None
    row = at_goal[:, 0]
    if row.any():
        split = float(x1[row, 0].min())
    elif not allow_missing:
        raise EmptyRegion("surplus transfer on the zero row")
    return ThresholdReport(sellback, floor, cap, split)


# ---------------------------------------------------------------------------
# features


@dataclass(frozen=True)
class Feature:
    kind: str  # "bulge" or "notch"
    region: str  # "L" or "M"
    box: tuple[float, float, float, float]  # x1_lo, x1_hi, x2_lo, x2_hi
    cells: int

    def overlaps(self, box) -> bool:
        a = self.box
        return a[0] <= box[1] and box[0] <= a[1] and a[2] <= box[3] and box[2] <= a[3]


def fill_gaps(labels: np.ndarray, width: int = 2) -> np.ndarray:
    """Close short continuation runs (at most ``width`` cells) that are
    bounded on both ends by the same transfer label, along either axis."""
    out = labels.copy()
    n1, n2 = labels.shape
    for axis in (0, 1):
        lab = labels if axis == 0 else labels.T
        res = out if axis == 0 else out.T
        for line in range(lab.shape[1]):
            col = lab[:, line]
            k = 0
            while k < len(col):
                if col[k] != "C":
                    k += 1
                    continue
                e = k
                while e < len(col) and col[e] == "C":
                    e += 1
                if 0 < k and e < len(col) and e - k <= width and col[k - 1] == col[e]:
                    res[k:e, line] = col[e]
                k = e
    return out


def _suffix_min(a):
    """Running minimum from the end, ignoring -1 (empty lines)."""
    out = np.full(a.shape, -1)
    cur = None
    for k in range(len(a) - 1, -1, -1):
        if a[k] >= 0:
            cur = a[k] if cur is None else min(cur, a[k])
        if cur is not None:
            out[k] = cur
    return out


def _extent(mask, axis):
    """Largest index along ``axis`` of True cells, per line; -1 when empty."""
    n = mask.shape[axis]
    idx = np.arange(n).reshape((-1, 1) if axis == 0 else (1, -1))
    return np.where(mask, idx, -1).max(axis=axis)


def _components(mask, kind, region, axis: AxisGrid, min_cells):
    lab, k = ndimage.label(mask)
    h = axis.step
    found = []
    for c in range(1, k + 1):
        ii, jj = np.nonzero(lab == c)
        if len(ii) < min_cells:
            continue
        box = (ii.min() * h - h / 2, ii.max() * h + h / 2, jj.min() * h - h / 2, jj.max() * h + h / 2)
        found.append(Feature(kind, region, tuple(float(round(b, 10)) for b in box), int(len(ii))))
    return found


def detect_features(labels: np.ndarray, axis: AxisGrid, min_cells: int = 3) -> list[Feature]:
    """Bulges and notches of a two-wealth label grid.

    The transfer-in region sits at small x1 and large x2, so its right edge
    should not retreat as x2 grows; cells beyond the running minimum of the
    right edge over higher rows form bulges. The transfer-out region is
    treated the same way with the roles of the axes swapped. Continuation
    cells lying below a transfer-out cell in the same column (or left of a
    transfer-in cell in the same row) form notches. Short continuation gaps
    are closed first and components with fewer than ``min_cells`` cells are
    dropped.
    """
    lab = fill_gaps(labels)
    n = lab.shape[0]
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    feats: list[Feature] = []

    into = lab == "L"
    right = _extent(into, axis=0)  # per row j: rightmost L index
    env = _suffix_min(right)
    feats += _components(into & (env[None, :] >= 0) & (ii > env[None, :]), "bulge", "L", axis, min_cells)

    out = lab == "M"
    top = _extent(out, axis=1)  # per column i: top M index
    env = _suffix_min(top)
    feats += _components(out & (env[:, None] >= 0) & (jj > env[:, None]), "bulge", "M", axis, min_cells)

    cont = lab == "C"
    feats += _components(cont & (jj < top[:, None]), "notch", "M", axis, min_cells)
    feats += _components(cont & (ii < right[None, :]), "notch", "L", axis, min_cells)
    return feats


def features_to_json(features, path) -> None:
    Path(path).write_text(json.dumps([asdict(f) for f in features], indent=2) + "\n")


def write_regions_csv(path, times, axis: AxisGrid, labels) -> None:
    """Rows ``t,x1,x2,label``; ``labels`` has shape (len(times), n, n)."""
    x = axis.points
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x1", "x2", "label"])
        for t, lab in zip(times, labels):
            for i, x1 in enumerate(x):
                for j, x2 in enumerate(x):
                    w.writerow([f"{t:.6f}", f"{x1:.6f}", f"{x2:.6f}", lab[i, j]])
