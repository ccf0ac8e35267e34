import numpy as np
import pytest
from scipy import stats

from elastica.bayes import (
    McmcChain,
    ModelConfig,
    PairwiseState,
    chain_to_csv,
    gibbs_kappa,
    log_posterior_pairwise,
    log_prior_kappa,
    log_prior_warp,
    mh_update_rotation,
    mh_update_warp,
    register_multiple,
    register_pair,
    summarize,
    summary_to_json,
)
from elastica.geometry import (
    Rotation,
    Srvf,
    WarpFunction,
    identity_warp,
    karcher_mean_of_warps,
    warp_action,
)

from conftest import dirichlet_warp, smooth_srvf, uniform_grid


def batch_se(x, n_batches=20):
    """Batch-means standard error for correlated MCMC output."""
    x = np.asarray(x)
    n = len(x) // n_batches * n_batches
    means = x[:n].reshape(n_batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


def zero_srvf(k):
    return Srvf(uniform_grid(k), np.zeros(k + 1))


class TestPriors:
    def test_uniform_prior_constant_for_a_one(self):
        rng = np.random.default_rng(0)
        g1 = dirichlet_warp(10, rng, a=2.0)
        g2 = dirichlet_warp(10, rng, a=2.0)
        assert log_prior_warp(g1, 1.0) == log_prior_warp(g2, 1.0)

    def test_identity_is_mode_for_concentrated_prior(self):
        rng = np.random.default_rng(1)
        e = identity_warp(10)
        lp_id = log_prior_warp(e, 100.0)
        for _ in range(20):
            g = dirichlet_warp(10, rng, a=1.0)
            assert log_prior_warp(g, 100.0) < lp_id

    def test_matches_scipy_dirichlet(self):
        # Direct Dirichlet formula oracle, M=2, a=2, p=(0.3, 0.7).
        g = WarpFunction(np.array([0.0, 0.3, 1.0]))
        expected = stats.dirichlet.logpdf([0.3, 0.7], [2.0, 2.0])
        assert log_prior_warp(g, 2.0) == pytest.approx(expected, abs=1e-12)

    def test_invalid_increments_give_minus_inf(self):
        assert log_prior_warp(np.array([0.0, 0.5, 0.5, 1.0]), 2.0) == -np.inf

    def test_kappa_prior_matches_scipy_gamma(self):
        for kappa in (0.5, 100.0, 5000.0):
            expected = stats.gamma.logpdf(kappa, a=1.0, scale=1000.0)
            assert log_prior_kappa(kappa, 1.0, 1000.0) == pytest.approx(expected, abs=1e-12)


class TestLogPosterior:
    def test_zero_residual_reduces_to_kappa_terms(self):
        rng = np.random.default_rng(2)
        q = smooth_srvf(50, rng)
        cfg = ModelConfig(M=10)
        g = identity_warp(10)
        p = cfg.dof(q.n_points, q.dim)
        for kappa in (10.0, 1000.0):
            lp = log_posterior_pairwise(g, kappa, q, q, cfg)
            expected = (
                0.5 * p * np.log(kappa)
                + log_prior_warp(g, cfg.a)
                + log_prior_kappa(kappa, cfg.alpha, cfg.beta)
            )
            assert lp == pytest.approx(expected, abs=1e-10)

    def test_likelihood_term_decreases_in_kappa(self):
        rng = np.random.default_rng(3)
        q1 = smooth_srvf(50, rng)
        q2 = smooth_srvf(50, rng)
        cfg = ModelConfig(M=10)
        g = dirichlet_warp(10, rng, a=5.0)
        p = cfg.dof(q1.n_points, q1.dim)
        k_lo, k_hi = 100.0, 400.0
        gap = log_posterior_pairwise(g, k_hi, q1, q2, cfg) - log_posterior_pairwise(
            g, k_lo, q1, q2, cfg
        )
        analytic_non_likelihood = (
            0.5 * p * np.log(k_hi / k_lo)
            + log_prior_kappa(k_hi, cfg.alpha, cfg.beta)
            - log_prior_kappa(k_lo, cfg.alpha, cfg.beta)
        )
        assert gap - analytic_non_likelihood < 0.0

    def test_double_implementation_oracle(self):
        # Independent re-evaluation from scratch with library geometry ops
        # and scipy densities.
        rng = np.random.default_rng(4)
        cfg = ModelConfig(M=8)
        for _ in range(10):
            q1 = smooth_srvf(40, rng, dim=2)
            q2 = smooth_srvf(40, rng, dim=2)
            g = dirichlet_warp(8, rng, a=4.0)
            kappa = float(rng.gamma(2.0, 500.0))
            theta = float(rng.uniform(0, 2 * np.pi))
            lp = log_posterior_pairwise(g, kappa, q1, q2, cfg, theta=theta)
            vals = warp_action(q2, g).values @ Rotation.from_angle(theta).matrix
            rss = float(np.sum((q1.values - vals) ** 2))
            p = cfg.dof(q1.n_points, q1.dim)
            oracle = (
                0.5 * p * np.log(kappa)
                - kappa * rss
                + stats.dirichlet.logpdf(g.increments, np.full(8, cfg.a))
                + stats.gamma.logpdf(kappa, a=cfg.alpha, scale=cfg.beta)
            )
            assert lp == pytest.approx(oracle, abs=1e-10)

    def test_invalid_warp_gives_minus_inf(self):
        rng = np.random.default_rng(5)
        q = smooth_srvf(20, rng)
        cfg = ModelConfig(M=4)
        lp = log_posterior_pairwise(
            np.array([0.0, 0.6, 0.4, 0.8, 1.0]), 10.0, q, q, cfg
        )
        assert lp == -np.inf

    def test_dense_covariance_quadratic_form(self):
        # With Sigma = I/(2 kappa) the MVN exponent equals kappa * rss exactly.
        rng = np.random.default_rng(6)
        for k in (4, 7, 10):
            kappa = float(rng.gamma(2.0, 300.0))
            diff = rng.normal(size=k)
            sigma = np.eye(k) / (2.0 * kappa)
            quad = 0.5 * diff @ np.linalg.inv(sigma) @ diff
            assert quad == pytest.approx(kappa * np.sum(diff**2), rel=1e-12)


class TestGibbsKappa:
    def test_mean_matches_gamma_oracle(self):
        # shape = p/2 + alpha = 26, rate = 1/beta, mean = 26 * 1000.
        cfg = ModelConfig(p_dof=50, alpha=1.0, beta=1000.0)
        rng = np.random.default_rng(7)
        draws = np.array([gibbs_kappa(0.0, cfg, rng) for _ in range(100_000)])
        se = draws.std(ddof=1) / np.sqrt(len(draws))
        assert abs(draws.mean() - 26_000.0) < 3 * se

    def test_prior_only_mean(self):
        cfg = ModelConfig(p_dof=0, alpha=1.0, beta=1000.0)
        rng = np.random.default_rng(8)
        draws = np.array([gibbs_kappa(0.0, cfg, rng) for _ in range(10_000)])
        se = draws.std(ddof=1) / np.sqrt(len(draws))
        assert abs(draws.mean() - 1000.0) < 3 * se

    def test_ks_against_analytic_conditional(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            p = int(rng.integers(0, 200))
            alpha = float(rng.uniform(0.5, 5.0))
            beta = float(rng.uniform(100.0, 5000.0))
            rss = float(rng.uniform(0.0, 50.0))
            cfg = ModelConfig(p_dof=p, alpha=alpha, beta=beta)
            draws = rng.gamma(
                0.5 * p + alpha, 1.0 / (1.0 / beta + rss), size=0
            )  # placeholder for clarity
            draws = np.array([gibbs_kappa(rss, cfg, rng) for _ in range(10_000)])
            shape = 0.5 * p + alpha
            rate = 1.0 / beta + rss
            ks = stats.kstest(draws, stats.gamma(a=shape, scale=1.0 / rate).cdf)
            assert ks.pvalue > 0.01

    def test_tempered_conditional(self):
        cfg = ModelConfig(p_dof=40, alpha=1.5, beta=800.0)
        rng = np.random.default_rng(10)
        b, rss = 0.35, 3.0
        draws = np.array(
            [gibbs_kappa(rss, cfg, rng, inv_temp=b) for _ in range(10_000)]
        )
        shape = b * (0.5 * 40 + 1.5) + 1.0 - b
        rate = b * (1.0 / 800.0 + rss)
        ks = stats.kstest(draws, stats.gamma(a=shape, scale=1.0 / rate).cdf)
        assert ks.pvalue > 0.01

    def test_negative_residual_rejected(self):
        cfg = ModelConfig(p_dof=10)
        with pytest.raises(ValueError):
            gibbs_kappa(-1.0, cfg, np.random.default_rng(0))


class TestWarpUpdate:
    def test_states_remain_valid_warps(self):
        rng = np.random.default_rng(11)
        q1 = smooth_srvf(60, rng)
        q2 = smooth_srvf(60, rng)
        cfg = ModelConfig(M=10, n_iter=10, burn_in=0)
        state = PairwiseState.initial(q1, q2, cfg)
        for _ in range(300):
            mh_update_warp(state, q1, q2, cfg, rng)
            WarpFunction(state.knots)  # raises if any invariant is broken

    def test_flat_likelihood_recovers_dirichlet_order_statistics(self):
        # With zero data the posterior is the Dirichlet(1) prior; knot means
        # must approach i/M (uniform order statistics).
        k, M = 20, 10
        q0 = zero_srvf(k)
        cfg = ModelConfig(M=M, a=1.0, proposal_scale=1.0)
        rng = np.random.default_rng(12)
        state = PairwiseState.initial(q0, q0, cfg)
        kept = []
        for sweep in range(24_000):
            mh_update_warp(state, q0, q0, cfg, rng)
            if sweep >= 2000 and sweep % 4 == 0:
                kept.append(state.knots.copy())
        kept = np.asarray(kept)
        for i in range(1, M):
            se = batch_se(kept[:, i])
            assert abs(kept[:, i].mean() - i / M) < 3 * se + 1e-4

    def test_acceptance_rate_reasonable_on_real_data(self):
        rng = np.random.default_rng(13)
        q1 = smooth_srvf(60, rng)
        q2 = warp_action(q1, dirichlet_warp(10, rng, a=20.0))
        cfg = ModelConfig(M=10, n_iter=10, burn_in=0)
        state = PairwiseState.initial(q1, q2, cfg)
        state.kappa = 500.0
        for _ in range(200):
            mh_update_warp(state, q1, q2, cfg, rng)
        rate = state.accept_warp / state.propose_warp
        assert 0.0 < rate < 1.0


class TestRotationUpdate:
    def run_rotation_chain(self, q1, q2, n_sweeps, seed, kappa=None):
        cfg = ModelConfig(M=8)
        rng = np.random.default_rng(seed)
        state = PairwiseState.initial(q1, q2, cfg)
        if kappa is not None:
            state.kappa = kappa
        thetas = []
        for sweep in range(n_sweeps):
            mh_update_rotation(state, q1, q2, cfg, rng)
            if sweep >= n_sweeps // 4:
                thetas.append(state.theta)
        return np.asarray(thetas)

    def test_recovers_constructed_rotation(self):
        rng = np.random.default_rng(14)
        q1 = smooth_srvf(50, rng, dim=2)
        q2 = q1.rotated(Rotation.from_angle(np.deg2rad(30.0)))
        thetas = self.run_rotation_chain(q1, q2, 4000, seed=15, kappa=2000.0)
        circ_mean = np.angle(np.mean(np.exp(1j * thetas))) % (2 * np.pi)
        # Undoing a +30 degree rotation means concentrating near 330 degrees.
        assert abs(circ_mean - np.deg2rad(330.0)) < np.deg2rad(3.0)
        mean_rot = Rotation.from_angle(circ_mean)
        res_after = np.sum((q1.values - q2.values @ mean_rot.matrix) ** 2)
        res_before = np.sum((q1.values - q2.values) ** 2)
        assert res_after < res_before

    def test_self_pair_concentrates_at_zero(self):
        rng = np.random.default_rng(16)
        q1 = smooth_srvf(50, rng, dim=2)
        thetas = self.run_rotation_chain(q1, q1, 4000, seed=17, kappa=2000.0)
        circ_mean = np.angle(np.mean(np.exp(1j * thetas)))
        assert abs(circ_mean) < np.deg2rad(5.0)

    def test_flat_likelihood_gives_uniform_angles(self):
        k = 20
        q0 = Srvf(uniform_grid(k), np.zeros((k + 1, 2)))
        thetas = self.run_rotation_chain(q0, q0, 40_000, seed=18)
        thinned = thetas[::40]
        n = len(thinned)
        rbar = np.abs(np.mean(np.exp(1j * thinned)))
        z = n * rbar**2
        p_value = np.exp(-z) * (1 + (2 * z - z**2) / (4 * n))
        assert p_value > 0.01

    def test_requires_planar_data(self):
        rng = np.random.default_rng(19)
        q = smooth_srvf(20, rng)
        cfg = ModelConfig(M=5)
        state = PairwiseState.initial(q, q, cfg)
        with pytest.raises(ValueError):
            mh_update_rotation(state, q, q, cfg, rng)


class TestRegisterPair:
    def test_self_registration_mean_warp_near_identity(self):
        rng = np.random.default_rng(20)
        q = smooth_srvf(60, rng)
        cfg = ModelConfig(M=10, n_iter=6000, burn_in=3000, thin=5, seed=21)
        _, summary = register_pair(q, q, cfg)
        gap = np.max(np.abs(summary.mean_warp - identity_warp(10).knots))
        assert gap < 0.03

    def test_alignment_improves_residual(self):
        rng = np.random.default_rng(22)
        q1 = smooth_srvf(60, rng)
        g = dirichlet_warp(10, rng, a=25.0)
        noisy = warp_action(q1, g).values + 0.02 * rng.normal(size=(61, 1))
        q2 = Srvf(q1.grid, noisy)
        cfg = ModelConfig(M=10, n_iter=6000, burn_in=3000, thin=5, seed=23)
        _, summary = register_pair(q1, q2, cfg)
        aligned = warp_action(q2, summary.mean_warp_function())
        res_after = np.sum((q1.values - aligned.values) ** 2)
        res_before = np.sum((q1.values - q2.values) ** 2)
        assert res_after < 0.5 * res_before

    def test_kappa_tracks_noise_level(self):
        rng = np.random.default_rng(24)
        q1 = smooth_srvf(60, rng)
        cfg = ModelConfig(M=10, n_iter=4000, burn_in=2000, thin=5, seed=25)
        kappas = {}
        for sigma in (0.1, 0.5):
            q2 = Srvf(q1.grid, q1.values + sigma * rng.normal(size=(61, 1)))
            _, summary = register_pair(q1, q2, cfg)
            kappas[sigma] = summary.kappa_mean
        assert kappas[0.1] > kappas[0.5]

    def test_stored_warps_all_valid(self):
        rng = np.random.default_rng(26)
        q1 = smooth_srvf(40, rng)
        q2 = smooth_srvf(40, rng)
        cfg = ModelConfig(M=8, n_iter=2000, burn_in=500, thin=3, seed=27)
        chain, _ = register_pair(q1, q2, cfg)
        assert chain.n_samples == len(range(500, 2000, 3))
        for g in chain.warp_functions():
            assert isinstance(g, WarpFunction)

    def test_prior_recovery_with_likelihood_disabled(self):
        # Zero data: increments must reproduce Dirichlet(1) moments.
        k, M = 16, 8
        q0 = zero_srvf(k)
        cfg = ModelConfig(
            M=M, a=1.0, n_iter=30_000, burn_in=2000, thin=4, seed=28,
            proposal_scale=1.0, adapt=False,
        )
        chain, _ = register_pair(q0, q0, cfg)
        increments = np.diff(chain.warps, axis=1)
        target_mean = 1.0 / M
        target_var = (1.0 / M) * (1.0 - 1.0 / M) / (M + 1.0)
        for i in range(M):
            p_i = increments[:, i]
            se_mean = batch_se(p_i)
            assert abs(p_i.mean() - target_mean) < 3 * se_mean + 1e-4
            se_var = batch_se((p_i - p_i.mean()) ** 2)
            assert abs(p_i.var() - target_var) < 3 * se_var + 1e-4

    def test_stronger_prior_tightens_noisy_self_registration(self):
        # With exact duplicates kappa explodes and the prior never matters;
        # a noisy pair (identity truth) keeps kappa finite and exposes the
        # prior pull toward the identity warp.
        rng = np.random.default_rng(29)
        q1 = smooth_srvf(60, rng)
        q2 = Srvf(q1.grid, q1.values + 0.1 * rng.normal(size=(61, 1)))
        gaps = {}
        for a in (1.0, 100.0):
            cfg = ModelConfig(M=10, a=a, n_iter=4000, burn_in=2000, thin=5, seed=30)
            _, summary = register_pair(q1, q2, cfg)
            gaps[a] = np.max(np.abs(summary.mean_warp - identity_warp(10).knots))
        assert gaps[100.0] < gaps[1.0]


class TestRegisterMultiple:
    def test_identical_inputs_recover_common_function(self):
        rng = np.random.default_rng(31)
        q = smooth_srvf(50, rng)
        cfg = ModelConfig(M=10, n_iter=3000, burn_in=1500, thin=5, seed=32)
        chain, summary = register_multiple([q, q, q], cfg)
        assert summary.mean_function is not None
        err = np.max(np.abs(summary.mean_function.values - q.values))
        assert err < 0.05
        for j in range(3):
            gap = np.max(np.abs(summary.mean_warp[j] - identity_warp(10).knots))
            assert gap < 0.05

    def test_alignment_beats_naive_mean(self):
        from elastica.dp import elastic_distance

        rng = np.random.default_rng(33)
        mu = smooth_srvf(50, rng)
        qs = []
        for _ in range(8):
            g = dirichlet_warp(10, rng, a=6.0)
            vals = warp_action(mu, g).values + 0.1 * rng.normal(size=(51, 1))
            qs.append(Srvf(mu.grid, vals))
        cfg = ModelConfig(M=10, n_iter=5000, burn_in=2500, thin=5, seed=34)
        _, summary = register_multiple(qs, cfg)
        naive = Srvf(mu.grid, np.mean([q.values for q in qs], axis=0))
        assert elastic_distance(summary.mean_function, mu) < elastic_distance(naive, mu)

    def test_warp_karcher_mean_is_identity_after_standardization(self):
        rng = np.random.default_rng(35)
        mu = smooth_srvf(40, rng)
        qs = [
            Srvf(mu.grid, warp_action(mu, dirichlet_warp(8, rng, a=8.0)).values)
            for _ in range(4)
        ]
        cfg = ModelConfig(M=8, n_iter=800, burn_in=400, thin=10, seed=36)
        chain, _ = register_multiple(qs, cfg)
        e = identity_warp(8).knots
        for s in range(chain.n_samples):
            gbar = karcher_mean_of_warps([WarpFunction(kk) for kk in chain.warps[s]])
            assert np.max(np.abs(gbar.knots - e)) < 1e-6

    def test_requires_two_functions(self):
        q = smooth_srvf(20, np.random.default_rng(37))
        with pytest.raises(ValueError):
            register_multiple([q], ModelConfig(M=5))


class TestSummaries:
    def make_chain(self, warps, kappas, log_post):
        warps = np.asarray(warps)
        return McmcChain(
            warps=warps,
            kappas=np.asarray(kappas),
            thetas=None,
            means=None,
            log_post=np.asarray(log_post),
            log_post_trace=np.asarray(log_post),
            accept_rates={},
            grid=uniform_grid(10),
        )

    def test_identical_samples_zero_width(self):
        knots = dirichlet_warp(5, np.random.default_rng(38)).knots
        chain = self.make_chain([knots] * 10, np.ones(10), np.zeros(10))
        summary = summarize(chain)
        assert np.allclose(summary.mean_warp, knots, atol=1e-12)
        assert np.allclose(summary.ci_lower, summary.ci_upper)

    def test_band_ordering(self):
        rng = np.random.default_rng(39)
        warps = [dirichlet_warp(6, rng, a=3.0).knots for _ in range(200)]
        chain = self.make_chain(warps, np.ones(200), rng.normal(size=200))
        summary = summarize(chain)
        assert np.all(summary.ci_lower <= summary.mean_warp + 1e-12)
        assert np.all(summary.mean_warp <= summary.ci_upper + 1e-12)

    def test_map_sample_is_argmax(self):
        rng = np.random.default_rng(40)
        warps = [dirichlet_warp(6, rng).knots for _ in range(50)]
        lp = rng.normal(size=50)
        chain = self.make_chain(warps, np.ones(50), lp)
        summary = summarize(chain)
        assert summary.map_sample["index"] == int(np.argmax(lp))

    def test_flat_likelihood_band_matches_beta_quantiles(self):
        # Uniform-Dirichlet order statistics: knot at t=1/2 is Beta(M/2, M/2).
        k, M = 16, 10
        q0 = zero_srvf(k)
        cfg = ModelConfig(
            M=M, a=1.0, n_iter=40_000, burn_in=4000, thin=4, seed=41,
            proposal_scale=1.0, adapt=False,
        )
        chain, summary = register_pair(q0, q0, cfg)
        lo, hi = stats.beta(M / 2, M / 2).ppf([0.025, 0.975])
        mid = M // 2
        assert abs(summary.ci_lower[mid] - lo) < 0.02
        assert abs(summary.ci_upper[mid] - hi) < 0.02

    def test_empty_chain_rejected(self):
        chain = self.make_chain(np.zeros((0, 6)), np.zeros(0), np.zeros(0))
        with pytest.raises(ValueError):
            summarize(chain)


class TestExports:
    def test_chain_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(42)
        q1 = smooth_srvf(30, rng)
        q2 = smooth_srvf(30, rng)
        cfg = ModelConfig(M=6, n_iter=300, burn_in=100, thin=5, seed=43)
        chain, summary = register_pair(q1, q2, cfg)
        path = tmp_path / "chain.csv"
        chain_to_csv(chain, path)
        data = np.genfromtxt(path, delimiter=",", names=True)
        assert len(data) == chain.n_samples
        assert np.array_equal(data["kappa"], chain.kappas)
        assert np.array_equal(data["knot3"], chain.warps[:, 3])

    def test_summary_json(self, tmp_path):
        import json

        rng = np.random.default_rng(44)
        q1 = smooth_srvf(30, rng)
        q2 = smooth_srvf(30, rng)
        cfg = ModelConfig(M=6, n_iter=300, burn_in=100, thin=5, seed=45)
        _, summary = register_pair(q1, q2, cfg)
        path = tmp_path / "summary.json"
        summary_to_json(summary, path)
        payload = json.loads(path.read_text())
        assert payload["mean_warp"] == summary.mean_warp.tolist()
        assert payload["ci_lower"] == summary.ci_lower.tolist()
