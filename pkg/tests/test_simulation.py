import numpy as np
import pytest

from elastica.geometry import identity_warp, srvf_inverse
from elastica.simulation import (
    StudyConfig,
    example_mean,
    run_study,
    sample_warp,
    simulate_sample,
)


class TestExampleMeans:
    def test_all_templates_unit_norm(self):
        for ex in ("I", "II", "III", "IV"):
            q = example_mean(ex)
            sq = np.sum(q.values**2, axis=1)
            assert abs(np.trapezoid(sq, q.grid) - 1.0) < 1e-8

    def test_default_grid_sizes(self):
        assert example_mean("I").n_points == 51
        assert example_mean("III").n_points == 101

    def test_symmetric_mixture_is_symmetric(self):
        q = example_mean("II", k=100)
        vals = q.values[:, 0]
        assert np.allclose(vals, vals[::-1], atol=1e-10)

    def test_hrf_template_reconstructs_to_closed_loop(self):
        # Reconstruction oracle: integrating q|q| recovers the underlying
        # function, whose tails decay, so f(1) is near f(0).
        q = example_mean("III")
        f = srvf_inverse(q, start=[0.0])
        assert abs(f.values[-1, 0] - f.values[0, 0]) < 0.1

    def test_unknown_id_rejected(self):
        with pytest.raises(ValueError):
            example_mean("V")


class TestSampleWarp:
    def test_concentration_limit(self):
        rng = np.random.default_rng(0)
        g = sample_warp(1e6, 10, rng)
        assert np.max(np.abs(g.increments - 0.1)) < 1e-2
        g_inf = sample_warp(np.inf, 10, rng)
        assert np.array_equal(g_inf.knots, identity_warp(10).knots)

    def test_uniform_dirichlet_moments(self):
        rng = np.random.default_rng(1)
        draws = np.stack([sample_warp(1.0, 10, rng).increments for _ in range(10_000)])
        se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
        assert np.all(np.abs(draws.mean(axis=0) - 0.1) < 3 * se)

    def test_all_draws_valid(self):
        rng = np.random.default_rng(2)
        for a in (0.5, 1.0, 100.0):
            for _ in range(50):
                g = sample_warp(a, 8, rng)
                assert np.all(g.increments > 0)
                assert abs(g.increments.sum() - 1.0) < 1e-12

    def test_nonpositive_concentration_rejected(self):
        with pytest.raises(ValueError):
            sample_warp(0.0, 5, np.random.default_rng(3))


class TestSimulateSample:
    def test_noiseless_identity_copies(self):
        rng = np.random.default_rng(4)
        mu = example_mean("I")
        qs = simulate_sample(mu, 4, sigma=1e-300, a=np.inf, rng=rng)
        for q in qs:
            assert np.allclose(q.values, mu.values, atol=1e-12)

    def test_noise_calibration(self):
        rng = np.random.default_rng(5)
        mu = example_mean("I")
        sigma = 0.3
        qs = simulate_sample(mu, 1000, sigma=sigma, a=np.inf, rng=rng)
        resid = np.stack([q.values - mu.values for q in qs])
        assert abs(resid.std() - sigma) / sigma < 0.05

    def test_warped_copies_differ(self):
        rng = np.random.default_rng(6)
        mu = example_mean("I")
        qs = simulate_sample(mu, 5, sigma=1e-300, a=1.0, rng=rng)
        for i in range(5):
            for j in range(i + 1, 5):
                assert np.max(np.abs(qs[i].values - qs[j].values)) > 1e-3


class TestRunStudy:
    TINY = dict(
        example_id="I", n_values=(4,), sigma_values=(0.3,), reps=2,
        n_iter=300, burn_in=100, thin=10, seed=11,
    )

    def test_schema_and_nonnegative(self):
        result = run_study(StudyConfig(**self.TINY))
        assert len(result.rows) == 2
        assert {r["estimator"] for r in result.rows} == {"quotient", "ambient"}
        for r in result.rows:
            assert r["mean_sq_dist"] >= 0.0
            assert r["reps"] == 2
        assert len(result.per_rep) == 2

    def test_reproducible_and_parallel_equivalent(self):
        r1 = run_study(StudyConfig(**self.TINY), workers=1)
        r2 = run_study(StudyConfig(**self.TINY), workers=2)
        for a, b in zip(r1.rows, r2.rows):
            assert a == b

    def test_csv_exports(self, tmp_path):
        result = run_study(StudyConfig(**self.TINY))
        result.to_csv(tmp_path / "study.csv")
        result.to_long_csv(tmp_path / "long.csv")
        import csv as _csv

        with open(tmp_path / "study.csv", newline="") as fh:
            rows = list(_csv.DictReader(fh))
        assert len(rows) == 2
        assert float(rows[0]["mean_sq_dist"]) == pytest.approx(
            result.rows[0]["mean_sq_dist"]
        )

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            StudyConfig(example_id="X")
        with pytest.raises(ValueError):
            StudyConfig(reps=0)
        with pytest.raises(ValueError):
            StudyConfig(sigma_values=(0.0,))
