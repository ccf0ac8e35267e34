"""Landmark pre-shapes, Procrustes distances, GPA means, nearest-mean classifiers.

A configuration of k landmarks in m dimensions becomes a pre-shape by
Helmertizing (removing translation) and scaling to unit Frobenius norm; the
Procrustes distance between pre-shapes minimizes over rotations in closed form
via the SVD of the cross-covariance.  Generalized Procrustes analysis
iterates alignment to the running mean.  The nearest-mean classifier works
with either the Procrustes metric on pre-shapes or the elastic metric on
SRVFs, which covers the two distance-based classification routes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dp import DpConfig, elastic_distance
from .geometry import Srvf, _best_rotation

__all__ = [
    "PreShape",
    "GpaResult",
    "helmert_submatrix",
    "preshape",
    "procrustes_distance",
    "procrustes_align",
    "gpa_mean",
    "classify_nearest_mean",
    "save_landmarks",
    "load_landmarks",
    "load_landmark_dataset",
    "save_landmark_dataset",
]


def _as_config(coords) -> np.ndarray:
    x = np.asarray(coords, dtype=float)
    if x.ndim != 2:
        raise ValueError("landmark configuration must be a k x m matrix")
    k, m = x.shape
    if k <= m:
        raise ValueError(f"need more landmarks than dimensions, got {k} x {m}")
    if not np.all(np.isfinite(x)):
        raise ValueError("landmark coordinates must be finite")
    if np.allclose(x, x[0], atol=1e-300):
        raise ValueError("configuration has zero size (all landmarks identical)")
    return x


@dataclass(frozen=True)
class PreShape:
    """Helmertized, unit-norm landmark coordinates: (k-1) x m with ||Z|| = 1."""

    coords: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.coords, dtype=float)
        if z.ndim != 2:
            raise ValueError("pre-shape coordinates must be 2-d")
        if abs(np.linalg.norm(z) - 1.0) > 1e-12:
            raise ValueError("pre-shape must have unit Frobenius norm")
        object.__setattr__(self, "coords", z)

    @property
    def dim(self) -> int:
        return self.coords.shape[1]


@dataclass
class GpaResult:
    mean: PreShape
    rotations: list[np.ndarray]
    aligned: list[np.ndarray]
    objective_trace: np.ndarray


def helmert_submatrix(k: int) -> np.ndarray:
    """(k-1) x k Helmert sub-matrix: orthonormal rows orthogonal to ones.

    Row j has j entries -1/sqrt(j(j+1)) followed by j/sqrt(j(j+1)), then zeros.
    """
    if k < 2:
        raise ValueError("need at least 2 landmarks")
    h = np.zeros((k - 1, k))
    for j in range(1, k):
        scale = 1.0 / np.sqrt(j * (j + 1))
        h[j - 1, :j] = -scale
        h[j - 1, j] = j * scale
    return h


def preshape(coords) -> PreShape:
    """Pre-shape Z = HX/||HX||: invariant to translation and positive scaling."""
    x = _as_config(coords)
    hx = helmert_submatrix(x.shape[0]) @ x
    norm = np.linalg.norm(hx)
    if norm == 0.0:
        raise ValueError("configuration has zero size after centering")
    return PreShape(hx / norm)


def _optimal_rotation(z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    """Rotation R in SO(m) minimizing ||z1 - z2 @ R||."""
    return _best_rotation(z1.T @ z2).matrix


def procrustes_distance(z1: PreShape, z2: PreShape) -> float:
    """min over SO(m) of ||Z1 - Z2 R||, closed form with determinant correction."""
    if z1.coords.shape != z2.coords.shape:
        raise ValueError("pre-shapes must have matching dimensions")
    rot = _optimal_rotation(z1.coords, z2.coords)
    return float(np.linalg.norm(z1.coords - z2.coords @ rot))


def procrustes_align(z: PreShape, target: PreShape) -> np.ndarray:
    """Coordinates of z rotated onto the target pre-shape."""
    return z.coords @ _optimal_rotation(target.coords, z.coords)


def gpa_mean(configs: list, max_iter: int = 100, tol: float = 1e-8) -> GpaResult:
    """Generalized Procrustes mean of landmark configurations.

    Configurations may be raw k x m arrays or PreShape objects; all are
    reduced to pre-shapes, iteratively rotated onto the running average, and
    re-averaged (renormalized) until the summed squared distances stop
    decreasing.
    """
    if not configs:
        raise ValueError("need at least one configuration")
    shapes = [c if isinstance(c, PreShape) else preshape(c) for c in configs]
    dims = {z.coords.shape for z in shapes}
    if len(dims) > 1:
        raise ValueError("configurations must share landmark count and dimension")
    mean = shapes[0].coords
    rotations = [np.eye(mean.shape[1]) for _ in shapes]
    trace = []
    for _ in range(max_iter):
        rotations = [_optimal_rotation(mean, z.coords) for z in shapes]
        aligned = [z.coords @ rot for z, rot in zip(shapes, rotations)]
        obj = sum(float(np.sum((mean - a) ** 2)) for a in aligned)
        trace.append(obj)
        if len(trace) > 1 and trace[-2] - obj <= tol * max(trace[-2], 1e-30):
            break
        avg = np.mean(aligned, axis=0)
        mean = avg / np.linalg.norm(avg)
    aligned = [z.coords @ rot for z, rot in zip(shapes, rotations)]
    return GpaResult(
        mean=PreShape(mean / np.linalg.norm(mean)),
        rotations=rotations,
        aligned=aligned,
        objective_trace=np.asarray(trace),
    )


def classify_nearest_mean(test, means: list, metric: str, dp_config: DpConfig | None = None) -> int:
    """Index of the nearest group mean under the chosen metric.

    ``metric`` is "procrustes" (test and means are pre-shapes or landmark
    arrays) or "elastic" (SRVFs, optionally with a DP configuration).  Ties
    break toward the lowest index.
    """
    if not means:
        raise ValueError("need at least one group mean")
    if metric == "procrustes":
        z = test if isinstance(test, PreShape) else preshape(test)
        ds = [
            procrustes_distance(z, m if isinstance(m, PreShape) else preshape(m))
            for m in means
        ]
    elif metric == "elastic":
        if not isinstance(test, Srvf):
            raise ValueError("elastic metric requires SRVF inputs")
        cfg = dp_config if dp_config is not None else DpConfig()
        ds = [elastic_distance(test, m, cfg) for m in means]
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return int(np.argmin(ds))


# ---------------------------------------------------------------------------
# Landmark file formats
# ---------------------------------------------------------------------------

def save_landmarks(coords, path):
    """One row per landmark, columns x[,y]."""
    x = np.asarray(coords, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z"][: x.shape[1]])
        for row in x:
            writer.writerow([repr(float(v)) for v in row])


def load_landmarks(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty landmark file")
    start = 1 if rows[0] and not _is_number(rows[0][0]) else 0
    data = [[float(v) for v in row] for row in rows[start:] if row]
    return np.asarray(data)


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def save_landmark_dataset(configs, labels, directory, manifest_name="manifest.json"):
    """Write one CSV per configuration plus a manifest mapping files to labels."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    items = []
    for i, (coords, label) in enumerate(zip(configs, labels)):
        fname = f"config_{i:04d}.csv"
        save_landmarks(coords, directory / fname)
        items.append({"file": fname, "label": label})
    with open(directory / manifest_name, "w") as fh:
        json.dump({"items": items}, fh, indent=2)


def load_landmark_dataset(manifest_path):
    """Read a manifest plus its landmark CSVs; returns (configs, labels)."""
    manifest_path = Path(manifest_path)
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    configs, labels = [], []
    for item in manifest["items"]:
        configs.append(load_landmarks(manifest_path.parent / item["file"]))
        labels.append(item.get("label"))
    return configs, labels
