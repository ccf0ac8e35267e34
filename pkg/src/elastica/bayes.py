"""Bayesian registration in the ambient SRVF space.

The likelihood for a registered pair is a Gaussian process on the pointwise
difference of SRVFs with covariance I/(2*kappa); warps carry a symmetric
Dirichlet prior on their increments, kappa a Gamma prior (shape alpha, scale
beta), and planar rotations a uniform prior on the angle.  Sampling is
Metropolis-within-Gibbs: bracketed uniform shifts of interior warp knots, a
conjugate Gamma draw for kappa, random-walk angle proposals, and (for multiple
functions) a pointwise normal Gibbs draw for the ambient mean followed by the
standardization that re-centers the warps around the identity.

All update kernels accept an inverse temperature so a simulated-tempering
driver can reuse them unchanged; at ``inv_temp=1`` they target the posterior
itself.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from math import lgamma, log

import numpy as np

from .geometry import Srvf, WarpFunction, warp_action

__all__ = [
    "ModelConfig",
    "McmcChain",
    "PosteriorSummary",
    "PairwiseState",
    "log_prior_warp",
    "log_prior_kappa",
    "log_posterior_pairwise",
    "gibbs_kappa",
    "mh_update_warp",
    "mh_update_rotation",
    "register_pair",
    "register_multiple",
    "summarize",
    "chain_to_csv",
    "summary_to_json",
]


@dataclass(frozen=True)
class ModelConfig:
    """Priors and chain controls for the ambient-space model.

    ``p_dof`` is the likelihood degrees of freedom; left as None it is
    derived from the data as k*m (one less under the unit-norm constraint),
    where k+1 is the number of sample points.
    """

    a: float = 1.0
    alpha: float = 1.0
    beta: float = 1000.0
    M: int = 20
    p_dof: int | None = None
    unit_norm: bool = False
    n_iter: int = 50_000
    burn_in: int = 25_000
    thin: int = 10
    proposal_scale: float = 0.5
    rotation_scale: float = 0.5
    mu_prior_var: float = 1e6
    adapt: bool = True
    seed: int | None = None

    def __post_init__(self):
        if self.a <= 0 or self.alpha <= 0 or self.beta <= 0:
            raise ValueError("a, alpha, beta must be positive")
        if self.M < 2:
            raise ValueError("M must be at least 2")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("burn_in must be smaller than n_iter")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if not 0 < self.proposal_scale <= 1:
            raise ValueError("proposal_scale must be in (0, 1]")

    def dof(self, n_points: int, dim: int) -> int:
        if self.p_dof is not None:
            return self.p_dof
        p = (n_points - 1) * dim
        return p - 1 if self.unit_norm else p


@dataclass
class McmcChain:
    """Thinned post-burn-in samples plus the full log-posterior trace."""

    warps: np.ndarray                 # (S, M+1) or (S, n, M+1) knot values
    kappas: np.ndarray                # (S,)
    thetas: np.ndarray | None         # (S,) or (S, n) rotation angles
    means: np.ndarray | None          # (S, k+1, m) ambient mean samples
    log_post: np.ndarray              # (S,) log posterior at stored samples
    log_post_trace: np.ndarray        # (n_iter,) per-sweep log posterior
    accept_rates: dict
    grid: np.ndarray
    levels: np.ndarray | None = None  # per-sweep tempering level (0 = cold)
    untuned_ladder: bool = False

    @property
    def n_samples(self) -> int:
        return len(self.kappas)

    def warp_functions(self, index: int | None = None):
        """Stored warp samples as WarpFunction objects."""
        if self.warps.ndim == 2:
            return [WarpFunction(k) for k in self.warps]
        if index is None:
            raise ValueError("multiple-function chain: pass the curve index")
        return [WarpFunction(k) for k in self.warps[:, index]]


@dataclass
class PosteriorSummary:
    """Pointwise posterior summaries of the warp(s) and the ambient mean."""

    mean_warp: np.ndarray             # (M+1,) or (n, M+1) knots
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    map_sample: dict
    mean_function: Srvf | None = None
    kappa_mean: float = float("nan")
    accept_rates: dict = field(default_factory=dict)

    def mean_warp_function(self, index: int | None = None) -> WarpFunction:
        knots = self.mean_warp if self.mean_warp.ndim == 1 else self.mean_warp[index]
        return WarpFunction(knots)


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

def log_prior_warp(g: WarpFunction | np.ndarray, a: float) -> float:
    """Symmetric Dirichlet(a) log density of the warp increments."""
    p = g.increments if isinstance(g, WarpFunction) else np.diff(np.asarray(g))
    if np.any(p <= 0):
        return -np.inf
    M = len(p)
    return float((a - 1.0) * np.sum(np.log(p)) + lgamma(M * a) - M * lgamma(a))


def log_prior_kappa(kappa: float, alpha: float, beta: float) -> float:
    """Gamma log density with shape alpha and scale beta (mean alpha*beta)."""
    if kappa <= 0:
        return -np.inf
    return (alpha - 1.0) * log(kappa) - kappa / beta - lgamma(alpha) - alpha * log(beta)


def _residual_ss(q1: Srvf, q2: Srvf, g: WarpFunction, theta: float | None = None) -> float:
    """Pointwise sum of squared differences q1 - action(q2, g) [rotated]."""
    warped = warp_action(q2, g)
    vals = warped.values
    if theta is not None:
        from .geometry import Rotation

        vals = vals @ Rotation.from_angle(theta).matrix
    return float(np.sum((q1.values - vals) ** 2))


def log_posterior_pairwise(
    g: WarpFunction,
    kappa: float,
    q1: Srvf,
    q2: Srvf,
    cfg: ModelConfig,
    theta: float | None = None,
) -> float:
    """Log posterior of (warp, kappa[, angle]) given a registered pair.

    (p/2) log kappa - kappa * ||q1 - sqrt(g') q2(g) R||^2 plus the warp and
    kappa log priors (the rotation prior is uniform).  Invalid warps give
    -inf.
    """
    lp_warp = log_prior_warp(g, cfg.a)
    if not np.isfinite(lp_warp):
        return -np.inf
    p = cfg.dof(q1.n_points, q1.dim)
    rss = _residual_ss(q1, q2, g, theta)
    return (
        0.5 * p * log(kappa)
        - kappa * rss
        + lp_warp
        + log_prior_kappa(kappa, cfg.alpha, cfg.beta)
    )


def gibbs_kappa(
    residual_ss: float,
    cfg: ModelConfig,
    rng: np.random.Generator,
    dof: int | None = None,
    inv_temp: float = 1.0,
) -> float:
    """Conjugate Gamma draw for kappa given the residual sum of squares.

    At inverse temperature b the tempered conditional is Gamma with shape
    b*(p/2 + alpha) + 1 - b and rate b*(1/beta + residual_ss).
    """
    if residual_ss < 0:
        raise ValueError("residual sum of squares must be nonnegative")
    p = dof if dof is not None else (cfg.p_dof or 0)
    shape = inv_temp * (0.5 * p + cfg.alpha) + 1.0 - inv_temp
    rate = inv_temp * (1.0 / cfg.beta + residual_ss)
    return float(rng.gamma(shape, 1.0 / rate))


# ---------------------------------------------------------------------------
# Pairwise sampler
# ---------------------------------------------------------------------------

def _uniform_positions(M: int) -> np.ndarray:
    return np.arange(M + 1) / M


def _warp_values(grid, pos, knots, qvals, idx=slice(None)):
    """action(q, g) values at grid[idx]: sqrt(slope) * q(gamma), right-continuous slope."""
    t = grid[idx]
    M = len(knots) - 1
    gamma = np.interp(t, pos, knots)
    seg = np.clip(np.floor(t * M).astype(int), 0, M - 1)
    slope = (knots[seg + 1] - knots[seg]) * M
    out = np.empty((len(t), qvals.shape[1]))
    for d in range(qvals.shape[1]):
        out[:, d] = np.interp(gamma, grid, qvals[:, d])
    return np.sqrt(slope)[:, None] * out


def _rot_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


@dataclass
class PairwiseState:
    """Mutable sampler state for one registered pair."""

    knots: np.ndarray
    kappa: float
    theta: float | None
    warped: np.ndarray            # action(q2, g) values, unrotated
    rss: float
    warp_scale: float
    rot_scale: float
    accept_warp: int = 0
    propose_warp: int = 0
    accept_rot: int = 0
    propose_rot: int = 0

    @classmethod
    def initial(cls, q1: Srvf, q2: Srvf, cfg: ModelConfig) -> "PairwiseState":
        knots = _uniform_positions(cfg.M).copy()
        pos = _uniform_positions(cfg.M)
        warped = _warp_values(q1.grid, pos, knots, q2.values)
        theta = 0.0 if q1.dim >= 2 else None
        rss = float(np.sum((q1.values - warped) ** 2))
        return cls(
            knots=knots,
            kappa=cfg.alpha * cfg.beta,
            theta=theta,
            warped=warped,
            rss=rss,
            warp_scale=cfg.proposal_scale,
            rot_scale=cfg.rotation_scale,
        )

    def rotated_warped(self) -> np.ndarray:
        if self.theta is None:
            return self.warped
        return self.warped @ _rot_matrix(self.theta)

    def resync(self, q1: Srvf, q2: Srvf, pos: np.ndarray):
        """Full recompute of the cached warped values and residual."""
        self.warped = _warp_values(q1.grid, pos, self.knots, q2.values)
        self.rss = float(np.sum((q1.values - self.rotated_warped()) ** 2))


def _knot_windows(grid: np.ndarray, M: int) -> list[slice]:
    """Grid-index window affected by each interior knot: segments i-1 and i."""
    seg = np.clip(np.floor(grid * M).astype(int), 0, M - 1)
    windows = []
    for i in range(1, M):
        lo = int(np.searchsorted(seg, i - 1, side="left"))
        hi = int(np.searchsorted(seg, i, side="right"))
        windows.append(slice(lo, hi))
    return windows


def mh_update_warp(
    state: PairwiseState,
    q1: Srvf,
    q2: Srvf,
    cfg: ModelConfig,
    rng: np.random.Generator,
    inv_temp: float = 1.0,
    windows: list[slice] | None = None,
) -> PairwiseState:
    """One Metropolis sweep over the interior warp knots.

    Each knot is proposed uniformly inside its neighbor bracket (shrunk by the
    proposal scale), so monotonicity holds by construction; the Hastings
    ratio carries the forward/backward window widths.
    """
    M = cfg.M
    pos = _uniform_positions(M)
    if windows is None:
        windows = _knot_windows(q1.grid, M)
    rot = None if state.theta is None else _rot_matrix(state.theta)
    for i in range(1, M):
        lo_b, hi_b = state.knots[i - 1], state.knots[i + 1]
        x = state.knots[i]
        delta = state.warp_scale * (hi_b - lo_b)
        lo = max(lo_b, x - delta)
        hi = min(hi_b, x + delta)
        x_new = rng.uniform(lo, hi)
        lo2 = max(lo_b, x_new - delta)
        hi2 = min(hi_b, x_new + delta)
        state.propose_warp += 1
        win = windows[i - 1]
        new_knots = state.knots.copy()
        new_knots[i] = x_new
        new_win = _warp_values(q1.grid, pos, new_knots, q2.values, win)
        t1 = q1.values[win]
        old_vals = state.warped[win] if rot is None else state.warped[win] @ rot
        new_vals = new_win if rot is None else new_win @ rot
        d_rss = float(np.sum((t1 - new_vals) ** 2) - np.sum((t1 - old_vals) ** 2))
        d_prior = (cfg.a - 1.0) * (
            log(x_new - lo_b) + log(hi_b - x_new) - log(x - lo_b) - log(hi_b - x)
        )
        log_ratio = inv_temp * (-state.kappa * d_rss + d_prior) + log(hi - lo) - log(hi2 - lo2)
        if log(rng.uniform()) < log_ratio:
            state.knots[i] = x_new
            state.warped[win] = new_win
            state.rss += d_rss
            state.accept_warp += 1
    return state


def mh_update_rotation(
    state: PairwiseState,
    q1: Srvf,
    q2: Srvf,
    cfg: ModelConfig,
    rng: np.random.Generator,
    inv_temp: float = 1.0,
) -> PairwiseState:
    """Random-walk Metropolis update of the rotation angle (Haar prior)."""
    if state.theta is None:
        raise ValueError("rotation update requires dim >= 2")
    theta_new = (state.theta + rng.uniform(-state.rot_scale, state.rot_scale)) % (2 * np.pi)
    state.propose_rot += 1
    new_vals = state.warped @ _rot_matrix(theta_new)
    rss_new = float(np.sum((q1.values - new_vals) ** 2))
    log_ratio = inv_temp * (-state.kappa * (rss_new - state.rss))
    if log(rng.uniform()) < log_ratio:
        state.theta = theta_new
        state.rss = rss_new
        state.accept_rot += 1
    return state


def _log_post_from_state(state: PairwiseState, cfg: ModelConfig, p: int) -> float:
    return (
        0.5 * p * log(state.kappa)
        - state.kappa * state.rss
        + log_prior_warp(state.knots, cfg.a)
        + log_prior_kappa(state.kappa, cfg.alpha, cfg.beta)
    )


def _adapt_scale(scale: float, accepted: int, proposed: int) -> float:
    if proposed == 0:
        return scale
    rate = accepted / proposed
    if rate < 0.2:
        scale *= 0.8
    elif rate > 0.4:
        scale *= 1.25
    return float(np.clip(scale, 1e-3, 1.0))


def _run_pairwise(q1: Srvf, q2: Srvf, cfg: ModelConfig, ladder=None, rng=None):
    """Metropolis-within-Gibbs chain for one pair, optionally tempered.

    ``ladder`` is any object with ``beta()`` returning the current inverse
    temperature, ``swap(log_target, rng)`` performing one level move, and
    ``level`` (0 = cold).  Only cold-level samples are stored.
    """
    if q1.n_points != q2.n_points or not np.allclose(q1.grid, q2.grid, atol=1e-12):
        raise ValueError("SRVFs must share a common grid")
    if cfg.M >= q1.n_points:
        raise ValueError("M must be smaller than the number of sample points")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    p = cfg.dof(q1.n_points, q1.dim)
    pos = _uniform_positions(cfg.M)
    windows = _knot_windows(q1.grid, cfg.M)
    state = PairwiseState.initial(q1, q2, cfg)
    use_rot = q1.dim >= 2

    kept_w, kept_k, kept_t, kept_lp = [], [], [], []
    trace = np.empty(cfg.n_iter)
    levels = np.zeros(cfg.n_iter, dtype=int) if ladder is not None else None
    swap_acc = swap_prop = 0
    adapt_window = max(50, cfg.M * 10)
    last_adapt = (0, 0, 0, 0)

    for sweep in range(cfg.n_iter):
        beta = 1.0 if ladder is None else ladder.beta()
        mh_update_warp(state, q1, q2, cfg, rng, inv_temp=beta, windows=windows)
        state.kappa = gibbs_kappa(state.rss, cfg, rng, dof=p, inv_temp=beta)
        if use_rot:
            mh_update_rotation(state, q1, q2, cfg, rng, inv_temp=beta)
        state.resync(q1, q2, pos)
        lp = _log_post_from_state(state, cfg, p)
        trace[sweep] = lp
        if ladder is not None:
            swap_prop += 1
            swap_acc += ladder.swap(lp, rng)
            levels[sweep] = ladder.level
        if cfg.adapt and sweep < cfg.burn_in and (sweep + 1) % adapt_window == 0:
            aw, pw, ar, pr = last_adapt
            state.warp_scale = _adapt_scale(
                state.warp_scale, state.accept_warp - aw, state.propose_warp - pw
            )
            if use_rot:
                state.rot_scale = _adapt_scale(
                    state.rot_scale, state.accept_rot - ar, state.propose_rot - pr
                )
            last_adapt = (state.accept_warp, state.propose_warp, state.accept_rot, state.propose_rot)
        at_cold = ladder is None or ladder.level == 0
        if sweep >= cfg.burn_in and (sweep - cfg.burn_in) % cfg.thin == 0 and at_cold:
            kept_w.append(state.knots.copy())
            kept_k.append(state.kappa)
            kept_lp.append(lp)
            if use_rot:
                kept_t.append(state.theta)

    accept = {
        "warp": state.accept_warp / max(state.propose_warp, 1),
        "rotation": state.accept_rot / max(state.propose_rot, 1) if use_rot else None,
        "swap": swap_acc / max(swap_prop, 1) if ladder is not None else None,
    }
    chain = McmcChain(
        warps=np.asarray(kept_w),
        kappas=np.asarray(kept_k),
        thetas=np.asarray(kept_t) if use_rot else None,
        means=None,
        log_post=np.asarray(kept_lp),
        log_post_trace=trace,
        accept_rates=accept,
        grid=q1.grid,
        levels=levels,
        untuned_ladder=bool(getattr(ladder, "untuned", False)),
    )
    return chain


def register_pair(q1: Srvf, q2: Srvf, cfg: ModelConfig) -> tuple[McmcChain, PosteriorSummary]:
    """Pairwise Bayesian registration of q2 onto q1.

    Runs the Metropolis-within-Gibbs chain and returns the thinned chain plus
    pointwise posterior summaries of the warp.
    """
    chain = _run_pairwise(q1, q2, cfg)
    return chain, summarize(chain)


# ---------------------------------------------------------------------------
# Multiple functions
# ---------------------------------------------------------------------------

def _warp_values_multi(grid, pos, knots_all, qvals_all, win=slice(None)):
    """Vectorized action values for n curves on a window: (n, w, m)."""
    t = grid[win]
    M = knots_all.shape[1] - 1
    n = knots_all.shape[0]
    seg = np.minimum((t * M).astype(int), M - 1)                   # (w,)
    lo = knots_all[:, seg]                                          # (n, w)
    hi = knots_all[:, seg + 1]
    frac = (t[None, :] - pos[seg][None, :]) * M
    gamma = lo + (hi - lo) * frac
    slope = (hi - lo) * M
    k = len(grid) - 1
    pos_idx = np.minimum((gamma * k).astype(int), k - 1)            # (n, w)
    g_frac = gamma * k - pos_idx
    flat = qvals_all.reshape(-1, qvals_all.shape[2])
    rows = (np.arange(n) * (k + 1))[:, None]
    q_lo = flat[pos_idx + rows]
    q_hi = flat[pos_idx + rows + 1]
    vals = q_lo + (q_hi - q_lo) * g_frac[:, :, None]
    return np.sqrt(slope)[:, :, None] * vals


def _rot_matrices(thetas: np.ndarray) -> np.ndarray:
    c, s = np.cos(thetas), np.sin(thetas)
    return np.stack([np.stack([c, s], -1), np.stack([-s, c], -1)], axis=-2)


def register_multiple(
    qs: list[Srvf], cfg: ModelConfig, ladder=None
) -> tuple[McmcChain, PosteriorSummary]:
    """Joint registration of n >= 2 functions or curves to a sampled ambient mean.

    Each sweep updates every warp (and rotation) against the current mean by
    Metropolis steps, Gibbs-draws the mean pointwise from its normal
    conditional, Gibbs-draws kappa from the pooled residual, and then
    standardizes so the Karcher mean of the warps is the identity.  With a
    tempering ladder the sweep runs at the current level's inverse temperature
    and a level move follows; only cold-level samples are stored.
    """
    if len(qs) < 2:
        raise ValueError("register_multiple needs at least two functions")
    grid = qs[0].grid
    for q in qs[1:]:
        if q.n_points != qs[0].n_points or not np.allclose(q.grid, grid, atol=1e-12):
            raise ValueError("SRVFs must share a common grid")
        if q.dim != qs[0].dim:
            raise ValueError("SRVFs must share the same dimension")
    if cfg.M >= qs[0].n_points:
        raise ValueError("M must be smaller than the number of sample points")
    rng = np.random.default_rng(cfg.seed)
    n = len(qs)
    dim = qs[0].dim
    npts = qs[0].n_points
    use_rot = dim >= 2
    p = cfg.dof(npts, dim)
    M = cfg.M
    pos = _uniform_positions(M)
    windows = _knot_windows(grid, M)
    k = npts - 1
    qvals = np.stack([q.values for q in qs])                        # (n, k+1, m)

    knots_all = np.tile(pos, (n, 1))
    thetas = np.zeros(n) if use_rot else None
    warped = _warp_values_multi(grid, pos, knots_all, qvals)        # unrotated
    mu = warped.mean(axis=0)
    kappa = cfg.alpha * cfg.beta
    warp_scale = cfg.proposal_scale
    rot_scale = cfg.rotation_scale
    acc_w = prop_w = acc_r = prop_r = 0
    v0 = cfg.mu_prior_var

    def rotated(w):
        if not use_rot:
            return w
        return np.einsum("nwm,nmr->nwr", w, _rot_matrices(thetas))

    def rss_per_curve():
        return np.sum((rotated(warped) - mu[None]) ** 2, axis=(1, 2))

    rss = rss_per_curve()

    kept_w, kept_k, kept_t, kept_mu, kept_lp = [], [], [], [], []
    trace = np.empty(cfg.n_iter)
    levels = np.zeros(cfg.n_iter, dtype=int) if ladder is not None else None
    swap_acc = swap_prop = 0
    adapt_window = max(50, M * 10)
    last = (0, 0, 0, 0)

    for sweep in range(cfg.n_iter):
        beta = 1.0 if ladder is None else ladder.beta()
        # Warp knots, vectorized across curves.
        rmats = _rot_matrices(thetas) if use_rot else None
        for i in range(1, M):
            win = windows[i - 1]
            lo_b = knots_all[:, i - 1]
            hi_b = knots_all[:, i + 1]
            x = knots_all[:, i]
            delta = warp_scale * (hi_b - lo_b)
            lo = np.maximum(lo_b, x - delta)
            hi = np.minimum(hi_b, x + delta)
            x_new = lo + rng.uniform(size=n) * (hi - lo)
            lo2 = np.maximum(lo_b, x_new - delta)
            hi2 = np.minimum(hi_b, x_new + delta)
            prop_w += n
            cand = knots_all.copy()
            cand[:, i] = x_new
            new_win = _warp_values_multi(grid, pos, cand, qvals, win)
            old_rot = rotated(warped[:, win])
            new_rot = new_win if not use_rot else np.einsum("nwm,nmr->nwr", new_win, rmats)
            target = mu[None, win]
            d_rss = np.sum((new_rot - target) ** 2, (1, 2)) - np.sum((old_rot - target) ** 2, (1, 2))
            d_prior = (cfg.a - 1.0) * (
                np.log(x_new - lo_b) + np.log(hi_b - x_new) - np.log(x - lo_b) - np.log(hi_b - x)
            )
            log_ratio = beta * (-kappa * d_rss + d_prior) + np.log(hi - lo) - np.log(hi2 - lo2)
            acc = np.log(rng.uniform(size=n)) < log_ratio
            knots_all[acc, i] = x_new[acc]
            warped[acc, win.start : win.stop] = new_win[acc]
            rss[acc] += d_rss[acc]
            acc_w += int(acc.sum())
        # Rotations.
        if use_rot:
            prop_r += n
            t_new = (thetas + rng.uniform(-rot_scale, rot_scale, size=n)) % (2 * np.pi)
            new_rot = np.einsum("nwm,nmr->nwr", warped, _rot_matrices(t_new))
            rss_new = np.sum((new_rot - mu[None]) ** 2, (1, 2))
            acc = np.log(rng.uniform(size=n)) < beta * (-kappa * (rss_new - rss))
            thetas[acc] = t_new[acc]
            rss[acc] = rss_new[acc]
            acc_r += int(acc.sum())
        # Gibbs draw of the ambient mean, pointwise normal conditional.
        qbar = rotated(warped).mean(axis=0)
        denom = n * kappa + 1.0 / v0
        mu = (n * kappa * qbar) / denom + rng.normal(size=mu.shape) * np.sqrt(
            1.0 / (2.0 * beta * denom)
        )
        rss = rss_per_curve()
        # Pooled kappa.
        kappa = gibbs_kappa(float(rss.sum()), cfg, rng, dof=n * p, inv_temp=beta)
        # Standardize: Karcher mean of warps -> identity.
        knots_all, mu, moved = _standardize(knots_all, mu, grid, pos)
        if moved or sweep % 25 == 0:
            warped = _warp_values_multi(grid, pos, knots_all, qvals)
        rss = rss_per_curve()

        if cfg.a == 1.0:
            lp_warps = n * lgamma(M)  # uniform prior: constant over valid warps
        else:
            lp_warps = float(
                (cfg.a - 1.0) * np.sum(np.log(np.diff(knots_all, axis=1)))
            ) + n * (lgamma(M * cfg.a) - M * lgamma(cfg.a))
        lp = (
            0.5 * n * p * log(kappa)
            - kappa * float(rss.sum())
            + lp_warps
            + log_prior_kappa(kappa, cfg.alpha, cfg.beta)
            - float(np.sum(mu**2)) / v0
        )
        trace[sweep] = lp
        if ladder is not None:
            swap_prop += 1
            swap_acc += ladder.swap(lp, rng)
            levels[sweep] = ladder.level
        if cfg.adapt and sweep < cfg.burn_in and (sweep + 1) % adapt_window == 0:
            aw, pw, ar, pr = last
            warp_scale = _adapt_scale(warp_scale, acc_w - aw, prop_w - pw)
            if use_rot:
                rot_scale = _adapt_scale(rot_scale, acc_r - ar, prop_r - pr)
            last = (acc_w, prop_w, acc_r, prop_r)
        at_cold = ladder is None or ladder.level == 0
        if sweep >= cfg.burn_in and (sweep - cfg.burn_in) % cfg.thin == 0 and at_cold:
            kept_w.append(knots_all.copy())
            kept_k.append(kappa)
            kept_mu.append(mu.copy())
            kept_lp.append(lp)
            if use_rot:
                kept_t.append(thetas.copy())

    accept = {
        "warp": acc_w / max(prop_w, 1),
        "rotation": acc_r / max(prop_r, 1) if use_rot else None,
        "swap": swap_acc / max(swap_prop, 1) if ladder is not None else None,
    }
    chain = McmcChain(
        warps=np.asarray(kept_w),
        kappas=np.asarray(kept_k),
        thetas=np.asarray(kept_t) if use_rot else None,
        means=np.asarray(kept_mu),
        log_post=np.asarray(kept_lp),
        log_post_trace=trace,
        accept_rates=accept,
        grid=grid,
        levels=levels,
        untuned_ladder=bool(getattr(ladder, "untuned", False)),
    )
    return chain, summarize(chain)


def _standardize(knots_all: np.ndarray, mu: np.ndarray, grid, pos):
    """Compose all warps with the inverse of their Karcher mean.

    Iterated until the mean warp is the identity to within 1e-9 in the knot
    sup norm; the ambient mean is transported by the same inverse warp.
    Pure array arithmetic: this runs once per sweep.
    """
    M = knots_all.shape[1] - 1
    changed = False
    for _ in range(50):
        # Karcher mean of the warps: average sqrt-increments, renormalize.
        psi = np.sqrt(np.diff(knots_all, axis=1)).mean(axis=0)
        p = psi**2
        p /= p.sum()
        gbar = np.concatenate([[0.0], np.cumsum(p)])
        gbar[-1] = 1.0
        if np.max(np.abs(gbar - pos)) < 1e-9:
            break
        changed = True
        inv = np.interp(pos, gbar, pos)
        # Compose every warp with the inverse: evaluate at inv's knot values.
        seg = np.clip((inv * M).astype(int), 0, M - 1)
        frac = inv * M - seg
        lo = knots_all[:, seg]
        knots_all = lo + (knots_all[:, seg + 1] - lo) * frac
        knots_all[:, 0] = 0.0
        knots_all[:, -1] = 1.0
        # Transport the ambient mean by the same inverse warp.
        gamma = np.interp(grid, pos, inv)
        gseg = np.clip(np.floor(grid * M).astype(int), 0, M - 1)
        slope = (inv[gseg + 1] - inv[gseg]) * M
        warped = np.empty_like(mu)
        for d in range(mu.shape[1]):
            warped[:, d] = np.interp(gamma, grid, mu[:, d])
        mu = np.sqrt(slope)[:, None] * warped
    return knots_all, mu, changed


# ---------------------------------------------------------------------------
# Summaries and export
# ---------------------------------------------------------------------------

def _project_warp_knots(knots: np.ndarray) -> np.ndarray:
    """Nearest valid warp: sort, pin endpoints, floor increments."""
    k = np.sort(knots)
    k[0], k[-1] = 0.0, 1.0
    p = np.clip(np.diff(k), 1e-12, None)
    p /= p.sum()
    out = np.concatenate([[0.0], np.cumsum(p)])
    out[-1] = 1.0
    return out


def summarize(chain: McmcChain) -> PosteriorSummary:
    """Pointwise posterior mean and 95% band of the warp knots, plus the MAP draw.

    The knotwise mean is projected back onto the warp simplex (a near no-op:
    pointwise means of increasing sequences are increasing).
    """
    if chain.n_samples == 0:
        raise ValueError("chain has no stored samples")
    mean_knots = chain.warps.mean(axis=0)
    ci_lo = np.quantile(chain.warps, 0.025, axis=0)
    ci_hi = np.quantile(chain.warps, 0.975, axis=0)
    if mean_knots.ndim == 1:
        mean_knots = _project_warp_knots(mean_knots)
    else:
        mean_knots = np.stack([_project_warp_knots(kk) for kk in mean_knots])
    map_idx = int(np.argmax(chain.log_post))
    map_sample = {
        "index": map_idx,
        "log_post": float(chain.log_post[map_idx]),
        "warp": chain.warps[map_idx],
        "kappa": float(chain.kappas[map_idx]),
    }
    if chain.thetas is not None:
        map_sample["theta"] = chain.thetas[map_idx]
    mean_function = None
    if chain.means is not None:
        mean_function = Srvf(chain.grid, chain.means.mean(axis=0))
        map_sample["mean"] = chain.means[map_idx]
    return PosteriorSummary(
        mean_warp=mean_knots,
        ci_lower=ci_lo,
        ci_upper=ci_hi,
        map_sample=map_sample,
        mean_function=mean_function,
        kappa_mean=float(chain.kappas.mean()),
        accept_rates=chain.accept_rates,
    )


def chain_to_csv(chain: McmcChain, path):
    """One row per stored sample: index, kappa, warp knots, [theta], log posterior."""
    multi = chain.warps.ndim == 3
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if multi:
            n, mk = chain.warps.shape[1], chain.warps.shape[2]
            header = ["sample", "kappa"]
            for j in range(n):
                header += [f"warp{j}_knot{i}" for i in range(mk)]
                if chain.thetas is not None:
                    header.append(f"theta{j}")
            header.append("log_post")
            writer.writerow(header)
            for s in range(chain.n_samples):
                row = [s, repr(float(chain.kappas[s]))]
                for j in range(n):
                    row += [repr(float(v)) for v in chain.warps[s, j]]
                    if chain.thetas is not None:
                        row.append(repr(float(chain.thetas[s, j])))
                row.append(repr(float(chain.log_post[s])))
                writer.writerow(row)
        else:
            mk = chain.warps.shape[1]
            header = ["sample", "kappa"] + [f"knot{i}" for i in range(mk)]
            if chain.thetas is not None:
                header.append("theta")
            header.append("log_post")
            writer.writerow(header)
            for s in range(chain.n_samples):
                row = [s, repr(float(chain.kappas[s]))]
                row += [repr(float(v)) for v in chain.warps[s]]
                if chain.thetas is not None:
                    row.append(repr(float(chain.thetas[s])))
                row.append(repr(float(chain.log_post[s])))
                writer.writerow(row)


def summary_to_json(summary: PosteriorSummary, path):
    """Summary export: mean warp, bands, MAP sample, acceptance rates."""
    payload = {
        "mean_warp": summary.mean_warp.tolist(),
        "ci_lower": summary.ci_lower.tolist(),
        "ci_upper": summary.ci_upper.tolist(),
        "kappa_mean": summary.kappa_mean,
        "map_sample": {
            key: (val.tolist() if isinstance(val, np.ndarray) else val)
            for key, val in summary.map_sample.items()
        },
        "accept_rates": summary.accept_rates,
    }
    if summary.mean_function is not None:
        payload["mean_function"] = summary.mean_function.values.tolist()
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
