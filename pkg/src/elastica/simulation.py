"""Monte Carlo comparison of quotient-space and ambient-space mean estimators.

Samples are generated as Dirichlet-warped copies of a template SRVF plus iid
Gaussian noise on the grid.  Each repetition estimates the template two ways
(iterative elastic Karcher mean; posterior mean of the Bayesian multi-function
model) and records the squared elastic distance of each estimate to the truth,
aggregated per sample size and noise level.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .bayes import ModelConfig, register_multiple
from .dp import DpConfig, elastic_distance, karcher_mean
from .geometry import Srvf, WarpFunction, identity_warp, warp_action

__all__ = [
    "StudyConfig",
    "StudyResult",
    "example_mean",
    "sample_warp",
    "simulate_sample",
    "run_study",
]

# Per-example sample counts and warp knots (template id -> (k, M)).
EXAMPLE_DISCRETIZATION = {"I": (51, 10), "II": (51, 10), "III": (101, 20), "IV": (51, 10)}


def example_mean(example_id: str, k: int | None = None) -> Srvf:
    """One of the four template mean SRVFs, scaled to unit norm on [0, 1].

    I: triangular single peak; II: mixture of three normal densities
    (symmetric); III: biphasic shape from the canonical double-gamma
    haemodynamic response; IV: asymmetric double-peak piecewise linear.
    """
    if example_id not in EXAMPLE_DISCRETIZATION:
        raise ValueError(f"unknown example {example_id!r}; use I, II, III or IV")
    if k is None:
        k = EXAMPLE_DISCRETIZATION[example_id][0] - 1
    t = np.linspace(0.0, 1.0, k + 1)
    if example_id == "I":
        vals = np.interp(t, [0.0, 0.5, 1.0], [0.0, 1.0, 0.0])
    elif example_id == "II":
        vals = np.zeros_like(t)
        for c in (0.25, 0.5, 0.75):
            vals += np.exp(-0.5 * ((t - c) / 0.07) ** 2) / (0.07 * np.sqrt(2 * np.pi))
        vals /= 3.0
    elif example_id == "III":
        # Canonical double-gamma HRF on a 32-unit window mapped to [0, 1];
        # the template is its SRVF, so reconstruction returns near its start.
        tau = 32.0 * t
        hrf = stats.gamma(6.0).pdf(tau) - stats.gamma(16.0).pdf(tau) / 6.0
        from .geometry import SampledFunction, srvf_transform

        q = srvf_transform(SampledFunction(t, hrf / hrf.max()))
        return q.normalized()
    else:
        vals = np.interp(
            t, [0.0, 0.2, 0.45, 0.7, 1.0], [0.0, 1.0, 0.25, 0.85, 0.0]
        )
    return Srvf(t, vals).normalized()


def sample_warp(a: float, M: int, rng: np.random.Generator) -> WarpFunction:
    """Random warp with symmetric Dirichlet(a) increments; a = inf is the identity."""
    if a <= 0:
        raise ValueError("concentration must be positive")
    if math.isinf(a):
        return identity_warp(M)
    p = rng.dirichlet(np.full(M, a))
    p = np.clip(p, 1e-12, None)
    return WarpFunction.from_increments(p / p.sum())


def simulate_sample(
    mu: Srvf, n: int, sigma: float, a: float, rng: np.random.Generator, M: int = 10
) -> list[Srvf]:
    """n noisy Dirichlet-warped copies of the template SRVF."""
    out = []
    for _ in range(n):
        g = sample_warp(a, M, rng)
        vals = warp_action(mu, g).values + sigma * rng.normal(size=(mu.n_points, mu.dim))
        out.append(Srvf(mu.grid, vals))
    return out


@dataclass(frozen=True)
class StudyConfig:
    """Monte Carlo study layout and estimator settings."""

    example_id: str = "I"
    n_values: tuple = (5, 10, 20)
    sigma_values: tuple = (0.1, 0.5)
    reps: int = 20
    k: int | None = None
    M: int | None = None
    a: float = 1.0
    n_iter: int = 10_000
    burn_in: int = 5_000
    thin: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if any(s <= 0 for s in self.sigma_values):
            raise ValueError("sigma values must be positive")
        if self.example_id not in EXAMPLE_DISCRETIZATION:
            raise ValueError(f"unknown example {self.example_id!r}")

    def resolved(self) -> tuple[int, int]:
        k_def, m_def = EXAMPLE_DISCRETIZATION[self.example_id]
        return (self.k if self.k is not None else k_def - 1,
                self.M if self.M is not None else m_def)


@dataclass
class StudyResult:
    """Aggregated squared-distance table plus the per-repetition values."""

    rows: list = field(default_factory=list)          # aggregated cells
    per_rep: list = field(default_factory=list)       # one record per (cell, rep)

    def cell(self, n: int, sigma: float, estimator: str) -> dict:
        for row in self.rows:
            if row["n"] == n and row["sigma"] == sigma and row["estimator"] == estimator:
                return row
        raise KeyError((n, sigma, estimator))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["example", "n", "sigma", "estimator", "mean_sq_dist", "se", "reps"]
            )
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)

    def to_long_csv(self, path):
        """Plot-ready long format: log mean squared distance against log n."""
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["example", "sigma", "estimator", "log_n", "log_mean_sq_dist"]
            )
            writer.writeheader()
            for row in self.rows:
                writer.writerow(
                    {
                        "example": row["example"],
                        "sigma": row["sigma"],
                        "estimator": row["estimator"],
                        "log_n": math.log(row["n"]),
                        "log_mean_sq_dist": math.log(max(row["mean_sq_dist"], 1e-300)),
                    }
                )


def _run_rep(args):
    """One Monte Carlo repetition: returns squared distances of both estimators."""
    example_id, k, M, a, n, sigma, n_iter, burn_in, thin, seed = args
    rng = np.random.default_rng(seed)
    mu = example_mean(example_id, k)
    qs = simulate_sample(mu, n, sigma, a, rng, M=M)
    dp_cfg = DpConfig(warp_knots=M, rotation_enabled=False)
    quotient = karcher_mean(qs, dp_cfg).mean
    model_cfg = ModelConfig(
        a=a, M=M, n_iter=n_iter, burn_in=burn_in, thin=thin,
        seed=int(rng.integers(2**32)),
    )
    _, summary = register_multiple(qs, model_cfg)
    ambient = summary.mean_function
    d_q = elastic_distance(quotient, mu, dp_cfg) ** 2
    d_a = elastic_distance(ambient, mu, dp_cfg) ** 2
    return d_q, d_a


def run_study(cfg: StudyConfig, workers: int = 1) -> StudyResult:
    """Run the full (n, sigma, rep) grid; deterministic for a fixed seed.

    Repetitions are independent (seeded from spawned substreams) and can run
    in parallel; results are reduced in a fixed order either way.
    """
    k, M = cfg.resolved()
    root = np.random.SeedSequence(cfg.seed)
    tasks = []
    for sigma in cfg.sigma_values:
        for n in cfg.n_values:
            for rep, child in enumerate(root.spawn(cfg.reps)):
                seed = int(np.random.default_rng(child).integers(2**32))
                tasks.append(
                    (
                        (cfg.example_id, k, M, cfg.a, n, sigma,
                         cfg.n_iter, cfg.burn_in, cfg.thin, seed),
                        (n, sigma, rep),
                    )
                )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_rep, [t[0] for t in tasks]))
    else:
        outputs = [_run_rep(t[0]) for t in tasks]

    result = StudyResult()
    for (args, (n, sigma, rep)), (d_q, d_a) in zip(tasks, outputs):
        result.per_rep.append(
            {"example": cfg.example_id, "n": n, "sigma": sigma, "rep": rep,
             "quotient_sq_dist": d_q, "ambient_sq_dist": d_a}
        )
    for sigma in cfg.sigma_values:
        for n in cfg.n_values:
            cell = [
                r for r in result.per_rep if r["n"] == n and r["sigma"] == sigma
            ]
            for estimator, key in (("quotient", "quotient_sq_dist"), ("ambient", "ambient_sq_dist")):
                vals = np.array([r[key] for r in cell])
                result.rows.append(
                    {
                        "example": cfg.example_id,
                        "n": n,
                        "sigma": sigma,
                        "estimator": estimator,
                        "mean_sq_dist": float(vals.mean()),
                        "se": float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0,
                        "reps": len(vals),
                    }
                )
    return result
