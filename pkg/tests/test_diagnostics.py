import numpy as np
import pytest

from zmcounts.diagnostics import (
    ProbTable,
    empirical_probs,
    fitted_marginal_probs,
    ljung_box,
    pearson_residuals,
    sample_acf_pacf,
)
from zmcounts.errors import EstimationError, InvalidSpecError
from zmcounts.intensity import simulate_intensity
from zmcounts.observation import CountFamily, ModelSpec, Params, zm_sample

SYPHILIS_FIT = ModelSpec.create("zmp", "gar1", omega=0.2723, rho=0.7492, beta=2.1275, p=9.9184)


class TestPearsonResiduals:
    def test_exact_zero_at_conditional_mean(self):
        pp = Params(omega=0.2, rho=0.5, beta=1.0, p=2.0)
        lam = np.array([1.0, 2.0, 3.0])
        y = np.round((1 - pp.omega) * lam).astype(int)
        # pick intensities whose scaled values are integers
        lam = y / (1 - pp.omega)
        res = pearson_residuals(y, lam, pp, CountFamily.ZMP)
        np.testing.assert_allclose(res, 0.0, atol=1e-14)

    def test_poisson_standardization(self):
        pp = Params(omega=0.0, rho=0.5, beta=1.0, p=2.0)
        res = pearson_residuals([6], [4.0], pp, CountFamily.ZMP)
        assert res[0] == pytest.approx(1.0)

    def test_zmnb_variance_branch(self):
        pp = Params(omega=0.2, rho=0.5, beta=1.0, p=2.0, a=0.5, c=1)
        res = pearson_residuals([3], [2.0], pp, CountFamily.ZMNB)
        expected = (3 - 1.6) / np.sqrt(0.8 * (1 + 0.4 + 1.0) * 2.0)
        assert res[0] == pytest.approx(expected)

    def test_nonpositive_variance_raises_with_index(self):
        pp = Params(omega=-0.3, rho=0.5, beta=1.0, p=2.0)
        with pytest.raises(EstimationError, match="t=1"):
            pearson_residuals([1, 2], [1.0, 5.0], pp, CountFamily.ZMP)


class TestAcfPacf:
    def test_lag0_is_one(self):
        rng = np.random.default_rng(50)
        acf, pacf = sample_acf_pacf(rng.normal(size=500), 10)
        assert acf[0] == 1.0
        assert pacf[0] == 1.0

    def test_white_noise_within_bands(self):
        rng = np.random.default_rng(51)
        x = rng.normal(size=20_000)
        acf, _ = sample_acf_pacf(x, 20)
        band = 2 / np.sqrt(len(x))
        assert np.mean(np.abs(acf[1:]) < band) > 0.8

    def test_ar1_structure(self):
        rng = np.random.default_rng(52)
        n = 200_000
        x = np.empty(n)
        x[0] = 0.0
        eps = rng.normal(size=n)
        for t in range(1, n):
            x[t] = 0.8 * x[t - 1] + eps[t]
        acf, pacf = sample_acf_pacf(x, 6)
        for k in range(1, 6):
            assert acf[k] == pytest.approx(0.8**k, abs=0.02)
        assert pacf[1] == pytest.approx(0.8, abs=0.02)
        assert np.all(np.abs(pacf[2:]) < 0.02)

    def test_constant_series_rejected(self):
        with pytest.raises(EstimationError):
            sample_acf_pacf(np.ones(100), 5)

    def test_short_series_rejected(self):
        with pytest.raises(InvalidSpecError):
            sample_acf_pacf(np.arange(5.0), 10)


class TestLjungBox:
    def test_size_under_null(self):
        rng = np.random.default_rng(53)
        rejections = 0
        reps = 500
        for _ in range(reps):
            x = rng.normal(size=2000)
            _, p = ljung_box(x, 20)
            rejections += p < 0.05
        assert abs(rejections / reps - 0.05) < 0.025

    def test_alternating_sequence(self):
        x = np.tile([1.0, -1.0], 200)
        stat, p = ljung_box(x, 5)
        assert p < 1e-10
        assert stat > 100

    def test_statistic_formula(self):
        rng = np.random.default_rng(54)
        x = rng.normal(size=300)
        stat, p = ljung_box(x, 3)
        acf, _ = sample_acf_pacf(x, 3)
        n = len(x)
        q = n * (n + 2) * sum(acf[k] ** 2 / (n - k) for k in range(1, 4))
        assert stat == pytest.approx(q)
        from scipy.stats import chi2

        assert p == pytest.approx(chi2.sf(q, 3))


class TestMarginalProbs:
    def test_geometric_type_zero_cell(self):
        spec = ModelSpec.create("zmp", "gar1", omega=0.0, rho=0.5, beta=1.5, p=1.0)
        probs = fitted_marginal_probs(spec, 5)
        assert probs[0] == pytest.approx(1.5 / 2.5)

    def test_syphilis_zero_cell(self):
        probs = fitted_marginal_probs(SYPHILIS_FIT, 15)
        assert probs[0] == pytest.approx(0.2882, abs=5e-4)

    def test_closed_form_vs_monte_carlo(self):
        probs = fitted_marginal_probs(SYPHILIS_FIT, 15)
        from zmcounts.diagnostics import _modified_cdf_marginal

        mc = _modified_cdf_marginal(SYPHILIS_FIT, 15, 1_000_000, np.random.default_rng(55))
        assert np.max(np.abs(probs - mc)) < 0.003

    def test_zmnb_marginal_sums_below_one(self):
        spec = ModelSpec.create("zmnb", "gar1", omega=0.1, rho=0.5, beta=1.0, p=2.0, a=0.5, c=1)
        probs = fitted_marginal_probs(spec, 30, mc_draws=200_000, rng=np.random.default_rng(56))
        assert np.all(probs >= 0)
        assert probs.sum() <= 1 + 1e-12


class TestEmpiricalProbs:
    def test_all_zeros(self):
        probs = empirical_probs(np.zeros(10, dtype=int), 3)
        assert probs[0] == 1.0
        assert probs[1:].sum() == 0.0

    def test_sums_to_one_over_support(self):
        rng = np.random.default_rng(57)
        y = rng.poisson(3.0, 1000)
        probs = empirical_probs(y, int(y.max()))
        assert probs.sum() == pytest.approx(1.0)

    def test_syphilis_style_zero_fraction(self):
        y = np.concatenate([np.zeros(59, dtype=int), np.ones(150, dtype=int)])
        assert empirical_probs(y, 2)[0] == pytest.approx(59 / 209)


class TestProbTable:
    def test_coherence(self):
        spec = ModelSpec.create("zmp", "gar1", omega=0.2, rho=0.8, beta=2.0, p=4.0)
        rng = np.random.default_rng(58)
        lam = simulate_intensity(spec.intensity, 2000, rng)
        y = zm_sample(spec.family, lam, spec.params, rng)
        table = ProbTable.build(spec, y)
        assert table.fitted.sum() <= 1 + 1e-12
        assert table.empirical.sum() <= 1 + 1e-12
        assert table.fitted_tail >= 0

    def test_residual_whiteness_on_well_specified_fit(self):
        from zmcounts.estimation import fit

        spec = ModelSpec.create("zmp", "gar1", omega=0.2, rho=0.8, beta=0.5, p=4.0)
        rng = np.random.default_rng(59)
        lam = simulate_intensity(spec.intensity, 1500, rng)
        y = zm_sample(spec.family, lam, spec.params, rng)
        res = fit(y, "zmp", "gar1")
        _, p = ljung_box(res.residuals, 20)
        assert p > 0.01
