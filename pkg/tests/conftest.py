"""Shared generators for test data: smooth SRVFs and warps of various kinds."""

import numpy as np

from elastica.geometry import Srvf, WarpFunction, warp_action


def uniform_grid(k: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, k + 1)


def smooth_srvf(k, rng, dim=1, n_modes=4, unit=True, amp=1.0) -> Srvf:
    """Random band-limited SRVF: a few Fourier modes plus a constant offset."""
    t = uniform_grid(k)
    vals = np.zeros((k + 1, dim))
    for d in range(dim):
        coef = amp * rng.normal(size=n_modes) / np.arange(1, n_modes + 1)
        vals[:, d] = 1.0 + sum(
            c * np.sin((j + 1) * np.pi * t) for j, c in enumerate(coef)
        )
    q = Srvf(t, vals)
    return q.normalized() if unit else q


def perturbed_family_srvf(k, rng) -> Srvf:
    """Warped and perturbed copies of one template.

    All draws share the template's coarse sign structure, so optimal warps
    between any two of them stay moderate; this is the regime in which
    slope-constrained DP approximates the elastic metric well.
    """
    t = uniform_grid(k)
    template = Srvf(t, np.sin(2 * np.pi * t) + 0.5 * np.sin(np.pi * t))
    q = warp_action(template, dirichlet_warp(10, rng, a=12.0))
    pert = 0.15 * sum(rng.normal() / j * np.sin(j * np.pi * t) for j in (1, 2, 3))
    return Srvf(t, q.values[:, 0] + pert).normalized()


def dirichlet_warp(M: int, rng, a: float = 10.0) -> WarpFunction:
    """Random warp with Dirichlet(a) increments; larger a is closer to identity."""
    p = rng.dirichlet(np.full(M, a))
    p = np.clip(p, 1e-9, None)
    return WarpFunction.from_increments(p / p.sum())


def lattice_path_warp(n_segments, rng, n_pairs=None, up=(1, 2), dn=(2, 1)) -> WarpFunction:
    """Random warp exactly representable as a monotone lattice path.

    Built by shuffling ``n_pairs`` matched (up, dn) steps into a run of
    diagonal steps, so the path ends on the diagonal; knots lie on the
    1/n_segments grid.  Gentler steps (e.g. (10, 9)/(9, 10)) keep the
    sqrt-slope jumps small, which is what bounds the reachable DP distance
    for pointwise-sampled data.
    """
    span = up[0] + dn[0]
    max_pairs = (n_segments - 1) // span
    if n_pairs is None:
        n_pairs = max(1, n_segments // 12)
    a = int(min(max(1, n_pairs), max_pairs))
    steps = [up] * a + [dn] * a + [(1, 1)] * (n_segments - span * a)
    rng.shuffle(steps)
    knots_t = [0]
    knots_g = [0]
    for dt, dg in steps:
        knots_t.append(knots_t[-1] + dt)
        knots_g.append(knots_g[-1] + dg)
    t = np.asarray(knots_t, dtype=float) / n_segments
    g = np.asarray(knots_g, dtype=float) / n_segments
    pos = np.linspace(0.0, 1.0, n_segments + 1)
    return WarpFunction(np.interp(pos, t, g))


def gentle_path_warp(n_segments, rng, n_pairs=1) -> WarpFunction:
    """Lattice-path warp with slopes 10/9 and 9/10 only."""
    return lattice_path_warp(n_segments, rng, n_pairs, up=(10, 9), dn=(9, 10))


# Slope set extending the default with the gentle 9/10 and 10/9 steps, needed
# to represent gentle_path_warp exactly.
GENTLE_SLOPES = ("1/3", "1/2", "2/3", "9/10", "1", "10/9", "3/2", "2", "3")
