"""Square-root velocity geometry: SRVF transforms, warps, rotations, norms.

Functions and curves are sampled on a grid over [0, 1] and carried around as
plain numpy arrays inside small frozen dataclasses.  All quadrature is
trapezoidal, matching the piecewise-linear data model.  Warping functions are
piecewise linear with M equal knot spacings and strictly positive increments,
so they double as strictly increasing cumulative distribution functions on
[0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SampledFunction",
    "Srvf",
    "WarpFunction",
    "Rotation",
    "identity_warp",
    "srvf_transform",
    "srvf_inverse",
    "warp_action",
    "warp_compose",
    "warp_inverse",
    "l2_distance",
    "l2_norm",
    "rotation_align",
    "karcher_mean_of_warps",
]

_KNOT_TOL = 1e-12


def _as_2d(values) -> np.ndarray:
    """Coerce values to shape (n_points, dim), promoting 1-d input to dim 1."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"values must be 1-d or 2-d, got shape {arr.shape}")
    return arr


def _check_grid(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must be a 1-d sequence of at least 2 points")
    if abs(grid[0]) > _KNOT_TOL or abs(grid[-1] - 1.0) > _KNOT_TOL:
        raise ValueError("grid must start at 0 and end at 1")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    return grid


@dataclass(frozen=True)
class SampledFunction:
    """A function f: [0,1] -> R^m sampled at grid points.

    ``values`` has shape (len(grid), dim); 1-d input is accepted for dim=1.
    """

    grid: np.ndarray
    values: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        grid = _check_grid(self.grid)
        values = _as_2d(self.values)
        if len(values) != len(grid):
            raise ValueError(
                f"values length {len(values)} != grid length {len(grid)}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dim", values.shape[1])

    @property
    def n_points(self) -> int:
        return len(self.grid)


@dataclass(frozen=True)
class Srvf:
    """A square-root velocity function q sampled at grid points.

    ``unit_norm`` declares that the trapezoidal L2 norm of q equals 1; it is
    validated at construction (tolerance 1e-8).
    """

    grid: np.ndarray
    values: np.ndarray
    unit_norm: bool = False
    dim: int = field(init=False)

    def __post_init__(self):
        grid = _check_grid(self.grid)
        values = _as_2d(self.values)
        if len(values) != len(grid):
            raise ValueError(
                f"values length {len(values)} != grid length {len(grid)}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dim", values.shape[1])
        if self.unit_norm:
            norm = l2_norm(self)
            if abs(norm - 1.0) > 1e-8:
                raise ValueError(
                    f"unit_norm set but L2 norm is {norm:.3e}, not 1"
                )

    @property
    def n_points(self) -> int:
        return len(self.grid)

    def normalized(self) -> "Srvf":
        """Rescale to unit L2 norm."""
        norm = l2_norm(self)
        if norm == 0.0:
            raise ValueError("cannot normalize a zero SRVF")
        return Srvf(self.grid, self.values / norm, unit_norm=True)

    def rotated(self, rotation: "Rotation") -> "Srvf":
        """Apply a rotation to the values (rows act on the right)."""
        return Srvf(self.grid, self.values @ rotation.matrix, unit_norm=self.unit_norm)


@dataclass(frozen=True)
class WarpFunction:
    """A piecewise-linear increasing bijection of [0,1] on M uniform knots.

    ``knots[i]`` is the value at i/M; increments are the successive
    differences, strictly positive and summing to 1.
    """

    knots: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        if knots.ndim != 1 or knots.size < 2:
            raise ValueError("knots must be a 1-d sequence of at least 2 points")
        if abs(knots[0]) > _KNOT_TOL or abs(knots[-1] - 1.0) > _KNOT_TOL:
            raise ValueError("warp must fix 0 and 1")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("warp increments must be strictly positive")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def from_increments(cls, increments) -> "WarpFunction":
        p = np.asarray(increments, dtype=float)
        if np.any(p <= 0):
            raise ValueError("warp increments must be strictly positive")
        total = p.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"increments must sum to 1, got {total!r}")
        knots = np.concatenate([[0.0], np.cumsum(p / total)])
        knots[-1] = 1.0
        return cls(knots)

    @property
    def n_segments(self) -> int:
        return len(self.knots) - 1

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.knots)

    @property
    def positions(self) -> np.ndarray:
        """The uniform knot positions i/M."""
        return np.linspace(0.0, 1.0, len(self.knots))

    def __call__(self, t) -> np.ndarray:
        """Evaluate the warp by linear interpolation between knots."""
        return np.interp(np.asarray(t, dtype=float), self.positions, self.knots)

    def derivative(self, t) -> np.ndarray:
        """Piecewise-constant derivative M*p_i, right-continuous at knots."""
        t = np.asarray(t, dtype=float)
        M = self.n_segments
        seg = np.clip(np.floor(t * M).astype(int), 0, M - 1)
        return M * self.increments[seg]

    def resampled(self, M: int) -> "WarpFunction":
        """Project onto an M-knot representation by evaluation at i/M."""
        if M < 1:
            raise ValueError("M must be >= 1")
        return WarpFunction(self(np.linspace(0.0, 1.0, M + 1)))


def identity_warp(M: int) -> WarpFunction:
    return WarpFunction(np.linspace(0.0, 1.0, M + 1))


@dataclass(frozen=True)
class Rotation:
    """A rotation in SO(m), acting on row vectors from the right: x -> x @ matrix.

    ``degenerate`` flags an alignment whose cross-covariance was (numerically)
    zero, in which case the identity is returned.
    """

    matrix: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("rotation matrix must be square")
        if not np.allclose(mat.T @ mat, np.eye(mat.shape[0]), atol=1e-12):
            raise ValueError("matrix is not orthogonal")
        if abs(np.linalg.det(mat) - 1.0) > 1e-12:
            raise ValueError("matrix has determinant != 1")
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def identity(cls, m: int) -> "Rotation":
        return cls(np.eye(m))

    @classmethod
    def from_angle(cls, theta: float) -> "Rotation":
        """Planar rotation by theta (counterclockwise on row vectors)."""
        c, s = np.cos(theta), np.sin(theta)
        return cls(np.array([[c, s], [-s, c]]))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def angle(self) -> float:
        """Rotation angle in [0, 2*pi) for m=2."""
        if self.dim != 2:
            raise ValueError("angle is only defined for planar rotations")
        return float(np.arctan2(self.matrix[0, 1], self.matrix[0, 0]) % (2 * np.pi))


# ---------------------------------------------------------------------------
# SRVF transform and inverse
# ---------------------------------------------------------------------------

def srvf_transform(f: SampledFunction) -> Srvf:
    """Map f to its square-root velocity function q = f' / sqrt(||f'||).

    The derivative is estimated by second-order finite differences (central
    in the interior, one-sided at the endpoints).  Where the estimate is
    exactly zero, q is set to zero.
    """
    if f.n_points < 3:
        raise ValueError("need at least 3 grid points to estimate a derivative")
    deriv = np.gradient(f.values, f.grid, axis=0, edge_order=2)
    speed = np.linalg.norm(deriv, axis=1)
    # Clamp float noise so constant stretches map to q = 0, not sqrt(noise).
    tol = 1e-12 * max(speed.max(), float(np.abs(f.values).max()), 1.0)
    q = np.zeros_like(deriv)
    nz = speed > tol
    q[nz] = deriv[nz] / np.sqrt(speed[nz])[:, None]
    return Srvf(f.grid, q)


def srvf_inverse(q: Srvf, start) -> SampledFunction:
    """Reconstruct f(t) = start + integral of q*||q|| (trapezoidal cumulative)."""
    start = np.atleast_1d(np.asarray(start, dtype=float))
    if start.shape != (q.dim,):
        raise ValueError(f"start must have shape ({q.dim},)")
    speed = np.linalg.norm(q.values, axis=1)
    integrand = q.values * speed[:, None]
    dt = np.diff(q.grid)[:, None]
    steps = 0.5 * (integrand[:-1] + integrand[1:]) * dt
    values = start[None, :] + np.concatenate(
        [np.zeros((1, q.dim)), np.cumsum(steps, axis=0)]
    )
    return SampledFunction(q.grid, values)


# ---------------------------------------------------------------------------
# Warp group and its action
# ---------------------------------------------------------------------------

def warp_action(q: Srvf, g: WarpFunction) -> Srvf:
    """Apply a warp to an SRVF: (q, g) -> sqrt(g') * q(g).

    q(g(t)) is evaluated by linear interpolation of q's samples; g' is the
    piecewise-constant slope of the warp.  The action preserves the L2 norm
    up to discretization error.
    """
    if np.array_equal(g.knots, g.positions):
        return Srvf(q.grid, q.values, unit_norm=q.unit_norm)
    gamma = g(q.grid)
    sqrt_slope = np.sqrt(g.derivative(q.grid))
    warped = np.empty_like(q.values)
    for d in range(q.dim):
        warped[:, d] = np.interp(gamma, q.grid, q.values[:, d])
    return Srvf(q.grid, sqrt_slope[:, None] * warped)


def warp_compose(g1: WarpFunction, g2: WarpFunction) -> WarpFunction:
    """Group composition (g1 o g2)(t) = g1(g2(t)), on g2's knot resolution."""
    return WarpFunction(g1(g2.knots))


def warp_inverse(g: WarpFunction) -> WarpFunction:
    """Inverse bijection, represented on the same uniform knot grid."""
    pos = g.positions
    return WarpFunction(np.interp(pos, g.knots, pos))


# ---------------------------------------------------------------------------
# Norms and alignment
# ---------------------------------------------------------------------------

def _trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    w = np.zeros_like(grid)
    d = np.diff(grid)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def l2_norm(q: Srvf) -> float:
    """Trapezoidal L2 norm of q over [0,1]."""
    sq = np.sum(q.values**2, axis=1)
    return float(np.sqrt(np.trapezoid(sq, q.grid)))


def l2_distance(q1: Srvf, q2: Srvf) -> float:
    """Trapezoidal L2 distance between two SRVFs on a common grid."""
    if q1.n_points != q2.n_points or not np.allclose(
        q1.grid, q2.grid, atol=1e-12
    ):
        raise ValueError("SRVFs must share a common grid")
    diff = np.sum((q1.values - q2.values) ** 2, axis=1)
    return float(np.sqrt(np.trapezoid(diff, q1.grid)))


def rotation_align(q1: Srvf, q2: Srvf) -> Rotation:
    """Best rotation of q2 onto q1: argmin over SO(m) of ||q1 - q2 @ R||.

    Closed form via SVD of the trapezoid-weighted cross-covariance, with the
    usual determinant correction.  A zero cross-covariance yields the identity
    with ``degenerate=True``.
    """
    if q1.dim < 2:
        raise ValueError("rotation alignment requires dim >= 2")
    if q1.n_points != q2.n_points or not np.allclose(
        q1.grid, q2.grid, atol=1e-12
    ):
        raise ValueError("SRVFs must share a common grid")
    w = _trapezoid_weights(q1.grid)
    cross = q1.values.T @ (w[:, None] * q2.values)
    return _best_rotation(cross)


def _best_rotation(cross: np.ndarray) -> Rotation:
    """Rotation R maximizing trace(R @ cross) over SO(m)."""
    m = cross.shape[0]
    if not np.any(np.abs(cross) > 1e-14):
        return Rotation(np.eye(m), degenerate=True)
    u, _, vt = np.linalg.svd(cross)
    d = np.sign(np.linalg.det(u @ vt))
    corr = np.eye(m)
    corr[-1, -1] = d
    # trace(R C) with C = U S V^T is maximized at R = V U^T (det-corrected).
    return Rotation(vt.T @ corr @ u.T)


# ---------------------------------------------------------------------------
# Mean of warps
# ---------------------------------------------------------------------------

def karcher_mean_of_warps(warps: list[WarpFunction]) -> WarpFunction:
    """Mean warp under the square-root-density geometry.

    The square roots of the warp derivatives live on the unit sphere; they
    are averaged there, renormalized, and squared back into increments.
    """
    if not warps:
        raise ValueError("need at least one warp")
    M = warps[0].n_segments
    if any(g.n_segments != M for g in warps):
        raise ValueError("all warps must share the same number of knots")
    psi = np.sqrt(np.stack([g.increments for g in warps]))
    mean_psi = psi.mean(axis=0)
    p = mean_psi**2
    return WarpFunction.from_increments(p / p.sum())
