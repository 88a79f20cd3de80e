import math

import numpy as np
import pytest
from scipy import stats

from spikedfisher.clt import (
    CltLaw,
    MomentProfile,
    build_laws,
    kappa_s,
    limit_law,
    nu_coefficients,
    sample_limit,
    theta_k,
)
from spikedfisher.errors import (
    DegenerateError,
    DomainError,
    MismatchError,
    UnsupportedSpikeError,
)
from spikedfisher.lsd import SpectralModel, StieltjesBundle, stieltjes
from spikedfisher.phase import PhaseResult

# Independent high-precision oracle values (tanh-sinh quadrature at 40 digits)
# for the p=200, n1=1000, n2=400, spikes (20, 0.2x2, 0.1) configuration;
# transforms on the (196/1000, 196/400) model at its own phase points,
# coefficient ratios p/n_i.
FROZEN = {
    20.0: dict(
        lam_star=41.730434782608696,
        kappa=0.50894511408532227,
        theta=0.3043225156369749,
        sigma2=2.3497528338973675,
        nu1=0.046406328733898675,
        nu2=0.11218836565096953,
        vd_bin=0.29145564250421339,
    ),
    0.2: dict(
        lam_star=0.13452115812917595,
        kappa=1.4410720900094251,
        theta=1.1494844498114986,
        sigma2=1.1070358420478541,
        nu1=0.23496200716114842,
        nu2=0.6328125,
        vd_bin=0.56341988530070033,
    ),
    0.1: dict(
        lam_star=0.074183350895679663,
        kappa=1.1590407210800797,
        theta=0.89206589568499162,
        sigma2=1.3280962272383828,
        nu1=0.21519179791440421,
        nu2=0.55709876543209877,
        vd_bin=0.23955066467697728,
    ),
}

# Published reference values for the same configuration.
PAPER_GAUSS = dict(sigma2_1=2.383, sigma2_3=1.343, kappa_2=1.441, var_diag_2=2.326, var_off_2=1.163)
PAPER_BINOM = dict(sigma2_1=1.116, sigma2_3=0.180, var_diag_norm_2=0.264, var_off_2=1.160)


def laws_by_alpha(pairs):
    return {phase.alpha: law for phase, law in pairs}


class TestFrozenPipeline:
    def test_gaussian_parameters(self, theory_case1_gauss):
        _, pairs = theory_case1_gauss
        laws = laws_by_alpha(pairs)
        for alpha, ref in FROZEN.items():
            law = laws[alpha]
            assert law.kappa == pytest.approx(ref["kappa"], rel=1e-8)
            assert law.theta == pytest.approx(ref["theta"], rel=1e-8)
            assert law.nu1 == pytest.approx(ref["nu1"], rel=1e-8)
            assert law.nu2 == pytest.approx(ref["nu2"], rel=1e-8)
            assert law.var_diag == pytest.approx(2 * ref["theta"], rel=1e-12)
            assert law.var_off == pytest.approx(ref["theta"], rel=1e-12)
            assert law.sigma2 == pytest.approx(ref["sigma2"], rel=1e-8)
            assert law.scale_dim == 196

    def test_binomial_parameters(self, theory_case1_binom):
        _, pairs = theory_case1_binom
        laws = laws_by_alpha(pairs)
        for alpha, ref in FROZEN.items():
            law = laws[alpha]
            assert law.var_diag == pytest.approx(ref["vd_bin"], rel=1e-8)
            assert law.var_off == pytest.approx(ref["theta"], rel=1e-8)

    def test_paper_gaussian_targets(self, theory_case1_gauss):
        _, pairs = theory_case1_gauss
        laws = laws_by_alpha(pairs)
        assert laws[20.0].sigma2 == pytest.approx(PAPER_GAUSS["sigma2_1"], rel=0.02)
        assert laws[0.1].sigma2 == pytest.approx(PAPER_GAUSS["sigma2_3"], rel=0.02)
        assert laws[0.2].kappa == pytest.approx(PAPER_GAUSS["kappa_2"], rel=0.02)
        assert laws[0.2].var_diag == pytest.approx(PAPER_GAUSS["var_diag_2"], rel=0.02)
        assert laws[0.2].var_off == pytest.approx(PAPER_GAUSS["var_off_2"], rel=0.02)

    def test_paper_binomial_targets(self, theory_case1_binom):
        _, pairs = theory_case1_binom
        laws = laws_by_alpha(pairs)
        assert laws[20.0].sigma2 == pytest.approx(PAPER_BINOM["sigma2_1"], rel=0.03)
        assert laws[0.1].sigma2 == pytest.approx(PAPER_BINOM["sigma2_3"], rel=0.03)
        # the published table reports the multiplicity-2 diagonal variance on
        # the gamma scale (1/kappa^2 applied), next to the raw off-diagonal
        norm_diag = laws[0.2].var_diag / laws[0.2].kappa ** 2
        assert norm_diag == pytest.approx(PAPER_BINOM["var_diag_norm_2"], rel=0.03)
        assert laws[0.2].var_off == pytest.approx(PAPER_BINOM["var_off_2"], rel=0.03)


@pytest.fixture(scope="module")
def bundle02():
    model = SpectralModel.unit(0.196, 0.49)
    return stieltjes(FROZEN[0.2]["lam_star"], model)


class TestScalarOperations:
    def test_kappa_frozen(self, bundle02):
        got = kappa_s(0.2, FROZEN[0.2]["lam_star"], bundle02, 0.5)
        assert got == pytest.approx(FROZEN[0.2]["kappa"], rel=1e-9)

    def test_theta_frozen(self, bundle02):
        got = theta_k(0.2, FROZEN[0.2]["lam_star"], bundle02, 0.2, 0.5)
        assert got == pytest.approx(FROZEN[0.2]["theta"], rel=1e-9)

    def test_nu_frozen(self, bundle02):
        nu1, nu2 = nu_coefficients(0.2, FROZEN[0.2]["lam_star"], bundle02, 0.2, 0.5)
        assert nu1 == pytest.approx(FROZEN[0.2]["nu1"], rel=1e-9)
        assert nu2 == pytest.approx(FROZEN[0.2]["nu2"], rel=1e-9)

    def test_kappa_trivial_limit(self, bundle02):
        # no second-sample noise and vanishing spike: every correction dies
        got = kappa_s(1e-14, FROZEN[0.2]["lam_star"], bundle02, 0.0)
        assert got == pytest.approx(1.0, abs=1e-10)

    def test_theta_trivial_limit(self, bundle02):
        assert theta_k(0.2, FROZEN[0.2]["lam_star"], bundle02, 0.0, 0.0) == 0.0

    def test_bundle_point_mismatch(self, bundle02):
        with pytest.raises(MismatchError):
            kappa_s(0.2, 0.2, bundle02, 0.5)
        with pytest.raises(MismatchError):
            theta_k(0.2, 0.2, bundle02, 0.2, 0.5)

    def test_nu_degenerate(self):
        lam = 2.0
        bundle = StieltjesBundle.from_transforms(lam, m=-5.0, m2=1.0, y1=0.3)
        with pytest.raises(DegenerateError):
            nu_coefficients(1.5, lam, bundle, c1=0.2, c2=0.5)


class TestLimitLaw:
    def test_regimes_coincide_for_gaussian(self, fc_case1_gauss):
        spec = fc_case1_gauss.model.spikes
        model = fc_case1_gauss.model.base_model()
        gauss = MomentProfile.gaussian()
        a = build_laws(spec, model, 200, 1000, 400, "assumptionD", gauss, gauss)
        b = build_laws(spec, model, 200, 1000, 400, "diagonalBlock", gauss, gauss)
        for (_, la), (_, lb) in zip(a, b):
            assert la.var_diag == pytest.approx(lb.var_diag, rel=1e-14)
            assert la.var_off == pytest.approx(lb.var_off, rel=1e-14)

    def test_nondistant_rejected(self, theory_case1_gauss):
        _, pairs = theory_case1_gauss
        phase = PhaseResult(alpha=1.2, psi_n=2.0, psi_prime=-0.5, distant=False, rho=12.6)
        model = SpectralModel.unit(0.196, 0.49)
        bundle = stieltjes(FROZEN[0.2]["lam_star"], model)
        with pytest.raises(UnsupportedSpikeError):
            limit_law(
                phase, bundle, MomentProfile.gaussian(), MomentProfile.gaussian(),
                "assumptionD", 0.2, 0.5,
            )

    def test_diagonal_regime_needs_finite_fourth_moment(self):
        model = SpectralModel.unit(0.196, 0.49)
        bundle = stieltjes(FROZEN[0.2]["lam_star"], model)
        phase = PhaseResult(
            alpha=0.2, psi_n=2.0 / 15.0, psi_prime=0.5, distant=True, rho=2.0 / 15.0
        )
        with pytest.raises(DomainError):
            limit_law(
                phase, bundle, MomentProfile.heavy_tail(), MomentProfile.gaussian(),
                "diagonalBlock", 0.2, 0.5,
            )

    def test_unknown_regime(self):
        model = SpectralModel.unit(0.196, 0.49)
        bundle = stieltjes(FROZEN[0.2]["lam_star"], model)
        phase = PhaseResult(
            alpha=0.2, psi_n=2.0 / 15.0, psi_prime=0.5, distant=True, rho=2.0 / 15.0
        )
        with pytest.raises(DomainError):
            limit_law(
                phase, bundle, MomentProfile.gaussian(), MomentProfile.gaussian(),
                "remark2", 0.2, 0.5,
            )


class TestMomentProfile:
    def test_kinds(self):
        assert MomentProfile.for_kind("gaussian").beta == 0.0
        assert MomentProfile.for_kind("rademacher").beta == -2.0
        assert MomentProfile.for_kind("rademacher").fourth_moment == 1.0
        assert math.isinf(MomentProfile.for_kind("heavy_tail4").fourth_moment)

    def test_infinite_fourth_requires_zero_beta(self):
        with pytest.raises(DomainError):
            MomentProfile(fourth_moment=math.inf, beta=-2.0)

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            MomentProfile.for_kind("cauchy")


def _law(var_diag=2.0, var_off=1.0, kappa=1.0, mult=2):
    return CltLaw(
        alpha=0.2, psi_n=2.0 / 15.0, kappa=kappa, theta=var_off, nu1=0.1, nu2=0.2,
        var_diag=var_diag, var_off=var_off, mult=mult, scale_dim=196,
    )


class TestSampleLimit:
    def test_mult1_variance(self, theory_case1_gauss):
        _, pairs = theory_case1_gauss
        law = laws_by_alpha(pairs)[20.0]
        draws = sample_limit(law, 100_000, seed=42)
        assert draws.shape == (100_000, 1)
        assert np.var(draws, ddof=1) == pytest.approx(law.sigma2, rel=0.02)
        assert np.mean(draws) == pytest.approx(0.0, abs=3 * math.sqrt(law.sigma2 / 1e5))

    def test_mult2_trace_variance(self):
        # trace of the 2x2 matrix is the sum of two independent diagonal
        # entries: variance 4 at var_diag=2, kappa=1
        draws = sample_limit(_law(), 100_000, seed=1)
        total = draws.sum(axis=1)
        assert np.var(total, ddof=1) == pytest.approx(4.0, rel=0.03)

    def test_sorted_descending(self):
        draws = sample_limit(_law(mult=3, var_diag=2.0), 500, seed=2)
        assert np.all(np.diff(draws, axis=1) <= 0)

    def test_deterministic(self):
        a = sample_limit(_law(), 100, seed=9)
        b = sample_limit(_law(), 100, seed=9)
        assert np.array_equal(a, b)

    def test_exchange_symmetry(self):
        # spectrum of the symmetric Gaussian matrix is symmetric about zero,
        # so the sorted pair satisfies (l1, l2) =d (-l2, -l1)
        draws = sample_limit(_law(), 40_000, seed=11)
        r1 = stats.ks_2samp(draws[:, 0], -draws[:, 1])
        assert r1.pvalue > 0.01

    def test_sigma2_monotone_in_var_diag(self):
        laws = [_law(var_diag=v, mult=1) for v in (0.5, 1.0, 2.0, 4.0)]
        sig = [l.sigma2 for l in laws]
        assert all(x < y for x, y in zip(sig, sig[1:]))

    def test_count_validation(self):
        with pytest.raises(DomainError):
            sample_limit(_law(), 0, seed=1)


class TestCltLawValidation:
    def test_var_off_must_equal_theta(self):
        with pytest.raises(DomainError):
            CltLaw(
                alpha=0.2, psi_n=0.13, kappa=1.0, theta=1.0, nu1=0.0, nu2=0.0,
                var_diag=2.0, var_off=0.5, mult=1, scale_dim=100,
            )

    def test_kappa_nonzero(self):
        with pytest.raises(DegenerateError):
            CltLaw(
                alpha=0.2, psi_n=0.13, kappa=0.0, theta=1.0, nu1=0.0, nu2=0.0,
                var_diag=2.0, var_off=1.0, mult=1, scale_dim=100,
            )

    def test_var_diag_positive(self):
        with pytest.raises(DegenerateError):
            CltLaw(
                alpha=0.2, psi_n=0.13, kappa=1.0, theta=1.0, nu1=0.0, nu2=0.0,
                var_diag=-0.5, var_off=1.0, mult=1, scale_dim=100,
            )
