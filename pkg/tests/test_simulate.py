import math

import numpy as np
import pytest

from spikedfisher.errors import (
    ConfigError,
    DegenerateTruncationError,
    HarnessError,
    SingularityError,
)
from spikedfisher.phase import SpikeSpec
from spikedfisher.simulate import (
    ModelConfig,
    SampleDistribution,
    TruncationPolicy,
    build_sigma,
    draw_matrix,
    fisher_eigs,
    run_mc,
    truncate_center_scale,
    _HT_SIGMA,
)

GAUSS = SampleDistribution("gaussian")
RADEMACHER = SampleDistribution("rademacher")
HEAVY = SampleDistribution("heavy_tail4")

SPIKES = SpikeSpec(groups=((20.0, 1), (0.2, 2), (0.1, 1)))


def small_config(**kw):
    defaults = dict(
        p=6,
        n1=40,
        n2=20,
        sigma_case="case1",
        spikes=SPIKES,
        dist_x=GAUSS,
        dist_y=GAUSS,
        reps=3,
        seed=1,
    )
    defaults.update(kw)
    return ModelConfig(**defaults)


class TestBuildSigma:
    def test_case1_eigenvalues(self):
        sigma1, sigma2 = build_sigma(small_config())
        assert np.allclose(np.diag(sigma1), [20.0, 1.0, 1.0, 0.2, 0.2, 0.1])
        assert np.array_equal(sigma2, np.eye(6))
        assert np.count_nonzero(sigma1 - np.diag(np.diag(sigma1))) == 0

    def test_case2_same_spectrum(self):
        c1 = small_config(p=30, n1=200, n2=100)
        c2 = small_config(p=30, n1=200, n2=100, sigma_case="case2", rho=0.5)
        s1, _ = build_sigma(c1)
        s2, _ = build_sigma(c2)
        assert np.allclose(np.linalg.eigvalsh(s2), np.sort(np.diag(s1)), atol=1e-10)

    def test_case2_rho_zero_reduces_to_case1(self):
        c1 = small_config(p=12, n1=80, n2=40)
        c2 = small_config(p=12, n1=80, n2=40, sigma_case="case2", rho=0.0)
        s1, _ = build_sigma(c1)
        s2, _ = build_sigma(c2)
        assert np.allclose(s1, s2, atol=1e-12)

    def test_rho_out_of_range(self):
        with pytest.raises(ConfigError):
            small_config(sigma_case="case2", rho=1.0)

    def test_n2_must_exceed_p(self):
        with pytest.raises(ConfigError):
            small_config(p=25, n2=25, n1=100)


class TestDrawMatrix:
    def test_gaussian_moments(self):
        rng = np.random.default_rng(0)
        x = draw_matrix(GAUSS, 1000, 1000, rng)
        n = x.size
        assert abs(x.mean()) < 3.0 / math.sqrt(n)
        assert abs(x.var() - 1.0) < 3.0 * math.sqrt(2.0 / n)

    def test_rademacher_exact_moments(self):
        rng = np.random.default_rng(1)
        x = draw_matrix(RADEMACHER, 500, 500, rng)
        assert set(np.unique(x)) == {-1.0, 1.0}
        assert np.all(x**4 == 1.0)
        # beta = E x^4 - 3 = -2 in the diagonal-ratio regime
        assert float((x**4).mean()) - 3.0 == -2.0

    def test_heavy_tail_variance_and_symmetry(self):
        rng = np.random.default_rng(2)
        x = draw_matrix(HEAVY, 1000, 1000, rng)
        assert abs(x.mean()) < 0.01
        assert x.var() == pytest.approx(1.0, abs=0.03)

    def test_heavy_tail_tail_profile(self):
        # analytic survival of the standardized variable
        def survival(t):
            raw = t * _HT_SIGMA
            assert raw >= math.e
            return raw**-4 / math.log(raw)

        # tau^4 P(|X| > tau) must decrease (tail lighter than exact power 4)
        weighted = [t**4 * survival(t) for t in (10.0, 30.0, 100.0)]
        assert all(a > b for a, b in zip(weighted, weighted[1:]))
        # empirical tail over 1e7 draws matches the analytic survival where
        # counts are informative
        rng = np.random.default_rng(3)
        x = np.abs(draw_matrix(HEAVY, 2000, 5000, rng)).ravel()
        n = x.size
        for t in (2.0, 5.0, 10.0):
            p_hat = float(np.mean(x > t))
            p_exact = survival(t)
            se = math.sqrt(p_exact * (1 - p_exact) / n)
            assert abs(p_hat - p_exact) < 4 * se + 1e-12

    def test_heavy_tail_fourth_moment_heavy(self):
        # sample fourth moment grows with sample size when E X^4 = inf
        rng = np.random.default_rng(4)
        small = np.mean(draw_matrix(HEAVY, 100, 100, rng) ** 4)
        big = np.mean(draw_matrix(HEAVY, 2000, 2000, rng) ** 4)
        assert big > small


class TestTruncation:
    def test_gaussian_passthrough(self):
        rng = np.random.default_rng(5)
        x = draw_matrix(GAUSS, 200, 1000, rng)
        out = truncate_center_scale(x, 1000, TruncationPolicy(), GAUSS)
        # threshold 1000^(3/8) ~ 13.3: no entry is clipped and the analytic
        # rescale is within double precision of the identity
        assert np.max(np.abs(out - x)) < 1e-12

    def test_rademacher_identity(self):
        rng = np.random.default_rng(6)
        x = draw_matrix(RADEMACHER, 100, 400, rng)
        out = truncate_center_scale(x, 400, TruncationPolicy(), RADEMACHER)
        assert np.array_equal(out, x)

    def test_rademacher_degenerate(self):
        rng = np.random.default_rng(7)
        x = draw_matrix(RADEMACHER, 10, 100, rng)
        policy = TruncationPolicy(eta_exponent=0.4, eta_scale=0.01)
        with pytest.raises(DegenerateTruncationError):
            truncate_center_scale(x, 100, policy, RADEMACHER)

    def test_heavy_tail_post_moments(self):
        rng = np.random.default_rng(8)
        x = draw_matrix(HEAVY, 1000, 1000, rng)
        policy = TruncationPolicy()
        out = truncate_center_scale(x, 1000, policy, HEAVY)
        assert abs(out.mean()) < 1e-12
        assert out.var() == pytest.approx(1.0, abs=1e-3)
        assert np.max(np.abs(out)) <= 2.0 * policy.threshold(1000)

    def test_column_count_checked(self):
        with pytest.raises(ConfigError):
            truncate_center_scale(np.zeros((3, 10)), 20, TruncationPolicy())

    def test_policy_bounds(self):
        with pytest.raises(ConfigError):
            TruncationPolicy(eta_exponent=0.5)
        with pytest.raises(ConfigError):
            TruncationPolicy(eta_scale=0.0)


class TestFisherEigs:
    def test_identity_when_samples_equal(self):
        rng = np.random.default_rng(9)
        p, n = 12, 30
        x = rng.standard_normal((p, n))
        w = fisher_eigs(np.eye(p), np.eye(p), x, x, n, n)
        assert np.allclose(w, 1.0, atol=1e-10)

    def test_matches_dense_nonsymmetric_oracle(self):
        rng = np.random.default_rng(10)
        p, n1, n2 = 3, 9, 7
        x = rng.standard_normal((p, n1))
        y = rng.standard_normal((p, n2))
        a = rng.standard_normal((p, p))
        sigma1 = a @ a.T + p * np.eye(p)
        w = fisher_eigs(sigma1, np.eye(p), x, y, n1, n2)
        # brute force: eigenvalues of S1 S2^{-1} from the dense nonsymmetric
        # solve, with the same symmetric square-root factor
        evals, evecs = np.linalg.eigh(sigma1)
        half = (evecs * np.sqrt(evals)[None, :]) @ evecs.T
        s1 = (half @ x) @ (half @ x).T / n1
        s2 = y @ y.T / n2
        ref = np.sort(np.linalg.eigvals(s1 @ np.linalg.inv(s2)).real)[::-1]
        assert np.allclose(w, ref, rtol=1e-8, atol=1e-10)

    def test_singular_s2(self):
        rng = np.random.default_rng(11)
        p, n1, n2 = 10, 20, 5
        x = rng.standard_normal((p, n1))
        y = rng.standard_normal((p, n2))
        with pytest.raises(SingularityError):
            fisher_eigs(np.eye(p), np.eye(p), x, y, n1, n2)

    def test_section4_extremes_near_phase_points(self, fc_case1_gauss):
        cfg = fc_case1_gauss.model
        sigma1, sigma2 = build_sigma(cfg)
        rng = np.random.default_rng(12)
        x = rng.standard_normal((cfg.p, cfg.n1))
        y = rng.standard_normal((cfg.p, cfg.n2))
        w = fisher_eigs(sigma1, sigma2, x, y, cfg.n1, cfg.n2)
        assert len(w) == cfg.p
        assert w[0] == pytest.approx(384.0 / 9.0, rel=0.25)
        assert w[-1] == pytest.approx(7.0 / 95.0, rel=0.25)


@pytest.fixture(scope="module")
def small_run(fc_case1_gauss):
    from spikedfisher.cli import _laws_for

    laws = _laws_for(fc_case1_gauss)
    cfg = ModelConfig(
        p=200, n1=1000, n2=400, sigma_case="case1", spikes=SPIKES,
        dist_x=GAUSS, dist_y=GAUSS, reps=8, seed=123,
    )
    return cfg, laws, run_mc(cfg, laws)


class TestRunMc:
    def test_shapes_and_indices(self, small_run):
        cfg, laws, report = small_run
        assert report.gamma[0].shape == (8, 1)
        assert report.gamma[1].shape == (8, 2)
        assert report.gamma[2].shape == (8, 1)
        assert report.rep_indices == tuple(range(8))
        assert report.groups[1].ranks == (197, 198)

    def test_determinism(self, small_run):
        cfg, laws, report = small_run
        again = run_mc(cfg, laws)
        for k in report.gamma:
            assert np.array_equal(report.gamma[k], again.gamma[k])
        assert report.groups == again.groups

    def test_parallel_matches_serial(self, small_run):
        cfg, laws, report = small_run
        par = run_mc(cfg, laws, jobs=2)
        for k in report.gamma:
            assert np.array_equal(report.gamma[k], par.gamma[k])

    def test_bulk_and_spike_diagnostics(self, small_run):
        _, _, report = small_run
        assert report.bulk_inside_fraction == 1.0
        assert report.spike_separation_fraction == 1.0

    def test_reps_one_flagged(self, fc_case1_gauss):
        from spikedfisher.cli import _laws_for

        laws = _laws_for(fc_case1_gauss)
        cfg = ModelConfig(
            p=200, n1=1000, n2=400, sigma_case="case1", spikes=SPIKES,
            dist_x=GAUSS, dist_y=GAUSS, reps=1, seed=5,
        )
        report = run_mc(cfg, laws)
        assert report.gamma[0].shape == (1, 1)
        for g in report.groups:
            assert not g.var_defined
            assert g.var is None
            assert g.ks_stat is None

    def test_law_per_group_required(self, small_run):
        cfg, laws, _ = small_run
        with pytest.raises(ConfigError):
            run_mc(cfg, laws[:-1])
        with pytest.raises(ConfigError):
            run_mc(cfg, [laws[0], None, laws[2]])

    def test_failed_replication_recorded_then_aborts(self, small_run, monkeypatch):
        import spikedfisher.simulate as sim

        cfg, laws, _ = small_run
        orig = sim._run_rep

        def flaky(ctx, r):
            if r == 3:
                raise RuntimeError("synthetic replication failure")
            return orig(ctx, r)

        monkeypatch.setattr(sim, "_run_rep", flaky)
        # 1 failure out of 8 replications exceeds the 1% budget
        with pytest.raises(HarnessError):
            run_mc(cfg, laws)
        # 1 failure out of 150 is tolerated, recorded, and skipped
        import dataclasses

        report = run_mc(dataclasses.replace(cfg, reps=150), laws)
        assert len(report.failures) == 1
        assert report.failures[0][0] == 3
        assert 3 not in report.rep_indices
        assert report.gamma[0].shape == (149, 1)

    def test_gamma_moments_coarse(self, fc_case1_gauss, theory_case1_gauss):
        from spikedfisher.cli import _laws_for

        laws = _laws_for(fc_case1_gauss)
        cfg = ModelConfig(
            p=200, n1=1000, n2=400, sigma_case="case1", spikes=SPIKES,
            dist_x=GAUSS, dist_y=GAUSS, reps=150, seed=77,
        )
        report = run_mc(cfg, laws, jobs=2)
        # coarse check at 150 reps (relative SE ~ 11.5%); the tight version
        # is an acceptance criterion
        assert report.groups[0].var[0] == pytest.approx(laws[0].sigma2, rel=0.4)
        assert report.groups[2].var[0] == pytest.approx(laws[2].sigma2, rel=0.4)
        assert report.groups[0].mean[0] == pytest.approx(0.0, abs=0.5)
