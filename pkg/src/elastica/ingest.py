"""Loading sampled functions, regridding, and chromatogram-style preprocessing.

CSV input is one function per file (columns t, v1[, v2]); JSON holds a whole
dataset and round-trips values exactly.  Time axes are rescaled affinely onto
[0, 1] with the original range kept in the metadata so warps can be reported
in the source units.  Baseline removal uses an asymmetric penalized-roughness
fit (second-difference penalty, the discrete analogue of a cubic smoothing
spline) and the tail region can be smoothed with the symmetric version of the
same penalty.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .geometry import SampledFunction

__all__ = [
    "DatasetItem",
    "Dataset",
    "load_functions",
    "save_functions",
    "resample",
    "baseline_and_smooth",
    "whittaker_smooth",
]


@dataclass
class DatasetItem:
    id: str
    f: SampledFunction
    label: str | None = None
    t_range: tuple = (0.0, 1.0)

    def to_original_time(self, t01):
        lo, hi = self.t_range
        return lo + np.asarray(t01) * (hi - lo)

    def from_original_time(self, t):
        lo, hi = self.t_range
        return (np.asarray(t) - lo) / (hi - lo)


@dataclass
class Dataset:
    items: list[DatasetItem] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [it.id for it in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("item identifiers must be unique")
        dims = {it.f.dim for it in self.items}
        if len(dims) > 1:
            raise ValueError("all items must share the same dimension")

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


def _parse_rows(rows, source):
    if not rows:
        raise ValueError(f"{source}: empty file")
    start = 0
    try:
        float(rows[0][0])
    except (ValueError, IndexError):
        start = 1
    width = len(rows[start])
    if width not in (2, 3):
        raise ValueError(f"{source}: expected columns t,v1[,v2], got {width} columns")
    t, vals = [], []
    for i, row in enumerate(rows[start:], start=start + 1):
        if not row:
            continue
        if len(row) != width:
            raise ValueError(f"{source}: ragged row {i} has {len(row)} fields")
        t.append(float(row[0]))
        vals.append([float(v) for v in row[1:]])
    t = np.asarray(t)
    vals = np.asarray(vals)
    order = np.argsort(t, kind="stable")
    t, vals = t[order], vals[order]
    dup = np.flatnonzero(np.diff(t) == 0)
    if dup.size:
        raise ValueError(
            f"{source}: duplicate time value {t[dup[0]]!r} at sorted row {dup[0] + 2}"
        )
    return t, vals


def _rescaled_item(item_id, t, vals, label=None) -> DatasetItem:
    lo, hi = float(t[0]), float(t[-1])
    if hi <= lo:
        raise ValueError(f"{item_id}: degenerate time range")
    grid = (t - lo) / (hi - lo)
    grid[0], grid[-1] = 0.0, 1.0
    return DatasetItem(
        id=item_id, f=SampledFunction(grid, vals), label=label, t_range=(lo, hi)
    )


def load_functions(path, format: str | None = None) -> Dataset:
    """Load a dataset from a CSV file, a directory of CSVs, or a JSON file.

    CSV columns are t,v1[,v2]; rows are sorted by t and the time axis is
    rescaled to [0, 1] (original range recorded per item).  JSON datasets
    round-trip exactly.
    """
    path = Path(path)
    if format is None:
        format = "json" if path.suffix == ".json" else "csv"
    if format == "json":
        with open(path) as fh:
            payload = json.load(fh)
        items = [
            DatasetItem(
                id=entry["id"],
                f=SampledFunction(np.asarray(entry["grid"]), np.asarray(entry["values"])),
                label=entry.get("label"),
                t_range=tuple(entry.get("t_range", (0.0, 1.0))),
            )
            for entry in payload["items"]
        ]
        return Dataset(items=items, meta=payload.get("meta", {}))
    if format != "csv":
        raise ValueError(f"unknown format {format!r}")
    if path.is_dir():
        files = sorted(path.glob("*.csv"))
        if not files:
            raise ValueError(f"{path}: no CSV files found")
    else:
        files = [path]
    items = []
    for f in files:
        with open(f, newline="") as fh:
            rows = list(csv.reader(fh))
        t, vals = _parse_rows(rows, str(f))
        items.append(_rescaled_item(f.stem, t, vals))
    return Dataset(items=items, meta={"source": str(path)})


def save_functions(dataset: Dataset, path):
    """JSON export; float values are serialized exactly."""
    payload = {
        "meta": dataset.meta,
        "items": [
            {
                "id": it.id,
                "label": it.label,
                "t_range": list(it.t_range),
                "grid": it.f.grid.tolist(),
                "values": it.f.values.tolist(),
            }
            for it in dataset.items
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def resample(f: SampledFunction, k: int) -> SampledFunction:
    """Linear interpolation onto the uniform grid with k+1 points."""
    if k < 2:
        raise ValueError("need k >= 2")
    grid = np.linspace(0.0, 1.0, k + 1)
    vals = np.empty((k + 1, f.dim))
    for d in range(f.dim):
        vals[:, d] = np.interp(grid, f.grid, f.values[:, d])
    return SampledFunction(grid, vals)


def whittaker_smooth(y: np.ndarray, lam: float, weights: np.ndarray | None = None) -> np.ndarray:
    """Penalized-roughness smoother: minimize ||W(z-y)||^2 + lam*||D2 z||^2."""
    n = len(y)
    d2 = sparse.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(n - 2, n))
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    a = sparse.diags(w) + lam * (d2.T @ d2)
    return spsolve(a.tocsc(), w * y)


def _asymmetric_baseline(y: np.ndarray, lam: float, p: float = 0.01, n_iter: int = 10) -> np.ndarray:
    """Asymmetric least-squares baseline: points above the fit get weight p."""
    w = np.ones(len(y))
    z = y
    for _ in range(n_iter):
        z = whittaker_smooth(y, lam, w)
        w = np.where(y > z, p, 1.0 - p)
    return z


def baseline_and_smooth(
    f: SampledFunction,
    lambda_base: float = 1e5,
    lambda_smooth: float = 10.0,
    tail_start: float = 0.75,
) -> SampledFunction:
    """Baseline-remove a 1-d signal, clip at zero, and smooth the noisy tail.

    The baseline is an asymmetric penalized-roughness fit with weight
    ``lambda_base``; the region from ``tail_start`` onward is smoothed with a
    symmetric fit of weight ``lambda_smooth``.
    """
    if f.dim != 1:
        raise ValueError("baseline correction applies to scalar signals")
    if lambda_base <= 0 or lambda_smooth <= 0:
        raise ValueError("penalty weights must be positive")
    y = f.values[:, 0]
    corrected = np.clip(y - _asymmetric_baseline(y, lambda_base), 0.0, None)
    out = corrected.copy()
    tail = f.grid >= tail_start
    if tail.sum() >= 5:
        out[tail] = np.clip(whittaker_smooth(corrected[tail], lambda_smooth), 0.0, None)
    return SampledFunction(f.grid, out)
