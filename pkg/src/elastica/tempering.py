"""Simulated tempering for multimodal registration posteriors.

A single chain moves along a geometric ladder of inverse temperatures
beta_i = (1+delta)^(1-i); within a level the registration kernels run on the
posterior raised to beta, and after each sweep a level move is proposed and
accepted with the usual weighted ratio.  Level weights are tuned in a
pre-run (thermodynamic-integration seeding polished by occupancy
reweighting) so the chain spends comparable time at every level; only
cold-level (beta = 1) samples enter posterior summaries.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from math import log

import numpy as np

from . import bayes
from .bayes import McmcChain, ModelConfig, PosteriorSummary, summarize
from .geometry import Srvf

__all__ = [
    "TemperingLadder",
    "TuningReport",
    "TemperingError",
    "build_ladder",
    "swap_log_ratio",
    "swap_step",
    "tune",
    "PairwiseTarget",
    "tempered_register",
    "report_to_json",
]


class TemperingError(RuntimeError):
    """Raised when ladder tuning cannot populate every level."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class TemperingLadder:
    """Geometric ladder of inverse temperatures with level weights.

    ``level`` indexes the current state (0 is the cold level, beta = 1).
    ``log_weights`` are the level weights up to an additive constant.
    """

    betas: np.ndarray
    log_weights: np.ndarray
    delta: float
    level: int = 0
    untuned: bool = True

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float)
        if betas[0] != 1.0:
            raise ValueError("the cold level must have beta = 1")
        if len(betas) > 1 and (np.any(np.diff(betas) >= 0) or np.any(betas <= 0)):
            raise ValueError("betas must be strictly decreasing in (0, 1]")
        self.betas = betas
        self.log_weights = np.asarray(self.log_weights, dtype=float)

    @property
    def n_levels(self) -> int:
        return len(self.betas)

    def beta(self) -> float:
        return float(self.betas[self.level])

    def q_move(self, i: int, j: int) -> float:
        """Proposal probability of moving from level i to level j."""
        if abs(i - j) != 1 or not (0 <= j < self.n_levels):
            return 0.0
        if i == 0 or i == self.n_levels - 1:
            return 1.0
        return 0.5

    def swap(self, log_target: float, rng: np.random.Generator) -> bool:
        """One level move given the current untempered log target density.

        Consumes no randomness for a single-level ladder, so a T=1 tempered
        run is stream-identical to the plain sampler.
        """
        if self.n_levels == 1:
            return False
        i = self.level
        if i == 0:
            j = 1
        elif i == self.n_levels - 1:
            j = i - 1
        else:
            j = i + 1 if rng.uniform() < 0.5 else i - 1
        log_r = swap_log_ratio(self, log_target, j)
        if log(rng.uniform()) < log_r:
            self.level = j
            return True
        return False


def swap_log_ratio(ladder: TemperingLadder, log_target: float, j: int) -> float:
    """log of the swap acceptance ratio from the current level to level j."""
    i = ladder.level
    return (
        (ladder.betas[j] - ladder.betas[i]) * log_target
        + ladder.log_weights[j]
        - ladder.log_weights[i]
        + log(ladder.q_move(j, i))
        - log(ladder.q_move(i, j))
    )


def swap_step(ladder: TemperingLadder, log_target: float, rng: np.random.Generator) -> TemperingLadder:
    """Propose and maybe accept one level move; returns the (mutated) ladder."""
    ladder.swap(log_target, rng)
    return ladder


def build_ladder(T: int, delta: float) -> TemperingLadder:
    """Geometric ladder beta_i = (1+delta)^(1-i), i = 1..T, uniform weights."""
    if T < 1:
        raise ValueError("T must be at least 1")
    if T > 1 and delta <= 0:
        raise ValueError("delta must be positive")
    betas = (1.0 + delta) ** (-np.arange(T, dtype=float))
    betas[0] = 1.0
    return TemperingLadder(betas=betas, log_weights=np.zeros(T), delta=delta)


@dataclass
class TuningReport:
    """Diagnostics from the equal-weight tuning pre-run."""

    counts: np.ndarray
    swap_accept_rate: float
    K: int
    pre_run_iters: int
    n_t: float
    delta: float
    betas: np.ndarray = field(default_factory=lambda: np.array([]))
    weights: np.ndarray = field(default_factory=lambda: np.array([]))


def _run_levels(ladder: TemperingLadder, target, iters: int, rng, state=None):
    """Run the tempered chain, recording level occupancy and swap acceptance."""
    if state is None:
        ladder.level = 0
        state = target.init_state(rng)
    counts = np.zeros(ladder.n_levels, dtype=int)
    accepted = 0
    for _ in range(iters):
        state = target.step(state, ladder.beta(), rng)
        accepted += ladder.swap(target.log_density(state), rng)
        counts[ladder.level] += 1
    return counts, accepted / max(iters, 1), state


def _thermo_init_weights(ladder: TemperingLadder, target, budget: int, rng):
    """Seed the level weights by thermodynamic integration.

    d log Z / d beta = E_beta[log pi], so an annealing pass that measures the
    mean log density at each level gives the log normalizers by the trapezoid
    rule; weights proportional to 1/Z_i make the level walk near-uniform,
    which no amount of equal-weight occupancy counting could achieve when the
    offsets are tens of log units.
    """
    T = ladder.n_levels
    per = max(budget // T, 20)
    mean_lp = np.zeros(T)
    state = target.init_state(rng)
    # Cool hot-to-cold: the hottest level equilibrates quickly from any
    # starting state, and each colder level inherits a nearly equilibrated one.
    for i in reversed(range(T)):
        beta = float(ladder.betas[i])
        lps = np.empty(per)
        for it in range(per):
            state = target.step(state, beta, rng)
            lps[it] = target.log_density(state)
        mean_lp[i] = lps[per // 2 :].mean()
    betas = ladder.betas
    # Scale-family shape E[log pi | beta] = A - B/beta integrates exactly to
    # log Z = A*beta - B*log(beta); fit (A, B) by least squares and keep the
    # trapezoid rule only as a residual correction on the fit errors.
    design = np.stack([np.ones(T), -1.0 / betas], axis=1)
    coef, *_ = np.linalg.lstsq(design, mean_lp, rcond=None)
    fit = design @ coef
    log_z_fit = coef[0] * betas + coef[1] * np.log(betas)
    log_z_fit -= log_z_fit[0]
    resid = mean_lp - fit
    log_z = log_z_fit.copy()
    for i in range(1, T):
        db = betas[i] - betas[i - 1]
        log_z[i] = log_z[i - 1] + (log_z_fit[i] - log_z_fit[i - 1]) + 0.5 * db * (
            resid[i] + resid[i - 1]
        )
    logw = -log_z
    ladder.log_weights = logw - logw.max()


def _weighted_tuning_run(ladder: TemperingLadder, target, iters: int, rng, rounds: int):
    """Estimate level weights: thermodynamic seeding plus reweighting rounds.

    The occupancy rounds polish the seeded weights with Robbins-Monro style
    decaying corrections (full-strength while some level is still unvisited).
    Returns the final round's counts and swap acceptance.
    """
    init_budget = max(iters // 4, ladder.n_levels * 20)
    _thermo_init_weights(ladder, target, init_budget, rng)
    per = max((iters - init_budget) // rounds, 1)
    state = None
    counts = np.zeros(ladder.n_levels, dtype=int)
    acc = 0.0
    polish = 0
    for _ in range(rounds):
        counts, acc, state = _run_levels(ladder, target, per, rng, state)
        if np.all(counts > 0):
            polish += 1
        # Full-strength corrections while any level is unvisited, then a
        # constant half step: strong enough to remove systematic residuals of
        # the thermodynamic seed, small enough not to chase occupancy noise.
        step = 1.0 if polish <= 1 else 0.5
        logw = ladder.log_weights - step * np.log(np.maximum(counts, 0.5) / per)
        ladder.log_weights = logw - logw.max()
    return counts, acc


def tune(
    ladder: TemperingLadder,
    target,
    pre_iters: int,
    rng: np.random.Generator,
    target_overlap: float = 1.1,
) -> tuple[TemperingLadder, TuningReport]:
    """Tune the ladder spacing and level weights on a target sampler.

    ``target`` must provide ``init_state(rng)``, ``step(state, beta, rng)``
    (one tempered within-level sweep) and ``log_density(state)`` (untempered).

    The spacing starts at delta = 1/sqrt(N_T) with N_T doubled (or halved)
    until the measured swap acceptance sits in the 20-40% band; level weights
    come from the occupancy of a reweighted pre-run, and delta shrinks by
    successive integers K whenever some level was never visited.  Fails with
    ``TemperingError`` if K exceeds 16.
    """
    T = ladder.n_levels
    if T == 1:
        ladder.untuned = False
        report = TuningReport(
            counts=np.array([pre_iters]),
            swap_accept_rate=0.0,
            K=1,
            pre_run_iters=pre_iters,
            n_t=1.0,
            delta=0.0,
            betas=ladder.betas.copy(),
            weights=np.ones(1),
        )
        return ladder, report

    # Choose N_T from the cold chain's log-posterior spread: adjacent-level
    # swap odds scale like exp(-delta_beta * spread), so aiming the cold-pair
    # energy overlap at ~e^-1.6 lands the run-averaged acceptance in the
    # 20-40% band without any search loop.
    probe_iters = max(200, min(pre_iters // 4, 2000))
    state = target.init_state(rng)
    cold_lp = np.empty(probe_iters)
    for it in range(probe_iters):
        state = target.step(state, 1.0, rng)
        cold_lp[it] = target.log_density(state)
    spread = float(np.std(cold_lp[probe_iters // 4 :]))
    delta_beta = target_overlap / max(spread, 1e-6)
    if delta_beta >= 1.0:
        delta = 3.0
    else:
        delta = float(np.clip(delta_beta / (1.0 - delta_beta), 0.01, 3.0))
    n_t = 1.0 / delta**2

    result = _final_tuning(T, n_t, target, pre_iters, rng)
    if result is None:
        raise TemperingError(
            "tuning failed: some levels were never visited even at K = 16"
        )
    return result


def _final_tuning(T, n_t, target, pre_iters, rng):
    """K-escalation tuning at a given N_T; None if no ladder reaches all levels."""
    for K in range(1, 17):
        delta = 1.0 / (K * np.sqrt(n_t))
        lad = build_ladder(T, delta)
        counts, acc = _weighted_tuning_run(lad, target, pre_iters, rng, rounds=10)
        if np.all(counts > 0):
            lad.untuned = False
            lad.level = 0
            report = TuningReport(
                counts=counts,
                swap_accept_rate=acc,
                K=K,
                pre_run_iters=pre_iters,
                n_t=n_t,
                delta=delta,
                betas=lad.betas.copy(),
                weights=np.exp(lad.log_weights),
            )
            return lad, report
    return None


class PairwiseTarget:
    """Adapter exposing the pairwise registration posterior to ``tune``.

    With ``kappa`` fixed the target is the conditional warp posterior given
    the concentration (a scale family, for which geometric ladders have
    near-constant per-pair swap rates); left as None, kappa is Gibbs-sampled
    alongside the warp.
    """

    def __init__(self, q1: Srvf, q2: Srvf, cfg: ModelConfig, kappa: float | None = None):
        self.q1, self.q2, self.cfg = q1, q2, cfg
        self.kappa = kappa
        self._p = cfg.dof(q1.n_points, q1.dim)
        self._pos = bayes._uniform_positions(cfg.M)
        self._windows = bayes._knot_windows(q1.grid, cfg.M)

    def init_state(self, rng) -> bayes.PairwiseState:
        state = bayes.PairwiseState.initial(self.q1, self.q2, self.cfg)
        if self.kappa is not None:
            state.kappa = self.kappa
        return state

    def step(self, state, beta, rng):
        bayes.mh_update_warp(
            state, self.q1, self.q2, self.cfg, rng, inv_temp=beta, windows=self._windows
        )
        if self.kappa is None:
            state.kappa = bayes.gibbs_kappa(state.rss, self.cfg, rng, dof=self._p, inv_temp=beta)
        if state.theta is not None:
            bayes.mh_update_rotation(state, self.q1, self.q2, self.cfg, rng, inv_temp=beta)
        state.resync(self.q1, self.q2, self._pos)
        return state

    def log_density(self, state) -> float:
        return bayes._log_post_from_state(state, self.cfg, self._p)


def tempered_register(
    q1,
    q2=None,
    *,
    cfg: ModelConfig,
    ladder: TemperingLadder,
) -> tuple[McmcChain, PosteriorSummary]:
    """Simulated-tempering registration; pairwise or (with a list) multiple.

    Within-level updates target the posterior raised to the level's inverse
    temperature; one level move follows each sweep, and only cold-level
    samples feed the summaries.  An untuned multi-level ladder triggers a
    warning and flags the chain.
    """
    if ladder.n_levels > 1 and ladder.untuned:
        warnings.warn("tempering with an untuned ladder; tune() it first")
    ladder.level = 0
    if q2 is None:
        if not isinstance(q1, (list, tuple)):
            raise ValueError("pass two SRVFs or a list of SRVFs")
        chain, _ = bayes.register_multiple(list(q1), cfg, ladder=ladder)
    else:
        chain = bayes._run_pairwise(q1, q2, cfg, ladder=ladder)
    if chain.n_samples == 0:
        raise TemperingError("no cold-level samples were recorded; run longer")
    return chain, summarize(chain)


def report_to_json(report: TuningReport, path):
    payload = {
        "betas": report.betas.tolist(),
        "weights": report.weights.tolist(),
        "counts": report.counts.tolist(),
        "swap_accept_rate": report.swap_accept_rate,
        "K": report.K,
        "pre_run_iters": report.pre_run_iters,
        "N_T": report.n_t,
        "delta": report.delta,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
