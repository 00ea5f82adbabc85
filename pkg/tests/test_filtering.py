import numpy as np
import pytest

from zmcounts.filtering import (
    FilterState,
    gkf_filter,
    gkf_init,
    gkf_step,
    variance_path,
    vbar,
)
from zmcounts.intensity import simulate_intensity
from zmcounts.observation import ModelSpec, zm_sample

SPEC = ModelSpec.create("zmp", "gar1", omega=0.2, rho=0.8, beta=2.0, p=4.0)

# 5-step recursion for SPEC on y=(3,0,5,2,0), evaluated independently in
# exact rational arithmetic (Fractions) and frozen here
GOLDEN = {
    "prediction": [2.0, 2.1226277372262774, 1.8739723250038016,
                   2.4343893379793093, 2.3560340226546161],
    "pred_var": [0.35999999999999999, 0.5702189781021898, 0.67677226417963399,
                 0.72691596881415965, 0.74968752983230336],
    "gain": [0.10948905109489052, 0.16498555426022607, 0.19110206709070818,
             0.20296225512099134, 0.20826099725313679],
    "innovation": [1.3999999999999999, -1.6981021897810218, 3.5008221399969588,
                   0.052488529616552392, -1.8848272181236927],
    "innovation_var": [2.6303999999999998, 2.7649401459854013, 2.8331342490749658,
                       2.8652262200410621, 2.879800019092674],
    "lambda_filtered": [2.1532846715328469, 1.8424654062547519, 2.5429866724741368,
                        2.44504252831827, 1.9634980265583202],
    "error_var": [0.32846715328467152, 0.49495666278067818, 0.5733062012721245,
                  0.60888676536297404, 0.62478299175941043],
}


class TestVbar:
    def test_zmp_omega0(self):
        spec = ModelSpec.create("zmp", "gar1", omega=0.0, rho=0.5, beta=2.0, p=4.0)
        assert vbar(spec) == pytest.approx(2.0)

    def test_zmnb_reduces_to_zmp_as_a_vanishes(self):
        zmp = ModelSpec.create("zmp", "gar1", omega=0.3, rho=0.5, beta=2.0, p=4.0)
        nb = ModelSpec.create("zmnb", "gar1", omega=0.3, rho=0.5, beta=2.0, p=4.0, a=1e-12, c=1)
        assert vbar(nb) == pytest.approx(vbar(zmp), rel=1e-9)

    def test_zmnb_c1_value(self):
        spec = ModelSpec.create("zmnb", "gar1", omega=0.2, rho=0.5, beta=2.0, p=4.0, a=0.5, c=1)
        assert vbar(spec) == pytest.approx(2 + 0.7 * 5)


class TestInit:
    def test_rho_zero(self):
        spec = ModelSpec.create("zmp", "gar1", omega=0.1, rho=0.0, beta=2.0, p=4.0)
        pred, cp = gkf_init(spec)
        assert pred == pytest.approx(2.0)
        assert cp == pytest.approx(1.0)

    def test_pred_var_value(self):
        pred, cp = gkf_init(SPEC)
        assert cp == pytest.approx(0.36)

    def test_stationary_mean_fixed_point(self):
        spec = ModelSpec.create("zmp", "gar1", omega=0.1, rho=0.5, beta=2.0, p=4.0)
        pred, _ = gkf_init(spec, lambda0=2.0)
        assert pred == pytest.approx(2.0)


class TestStep:
    def test_degenerate_prior(self):
        # prediction variance collapses (sigma2 -> 0 at fixed mean): no update
        spec = ModelSpec.create("zmp", "gar1", omega=0.2, rho=0.0, beta=2e10, p=4e10)
        state, step = gkf_step(FilterState(2.0, 0.0), 5, spec)
        assert step.gain == pytest.approx(0.0, abs=1e-9)
        assert state.lambda_filtered == pytest.approx(step.prediction, rel=1e-9)
        assert state.error_var == pytest.approx(0.0, abs=1e-9)

    def test_omega0_reduction(self):
        # with omega=0 the update is lhat + C/(C+mu)*(y - lhat) at rho=0
        spec = ModelSpec.create("zmp", "gar1", omega=0.0, rho=0.0, beta=2.0, p=4.0)
        state, step = gkf_step(FilterState(2.0, 0.5), 4, spec)
        cp = 1.0  # (1-rho^2)*sigma2
        expected = 2.0 + cp / (cp + 2.0) * (4 - 2.0)
        assert state.lambda_filtered == pytest.approx(expected)

    def test_golden_trace(self):
        y = [3, 0, 5, 2, 0]
        state = FilterState(2.0, 0.0)
        for t in range(5):
            state, step = gkf_step(state, y[t], SPEC)
            assert step.prediction == pytest.approx(GOLDEN["prediction"][t], rel=1e-14)
            assert step.pred_var == pytest.approx(GOLDEN["pred_var"][t], rel=1e-14)
            assert step.gain == pytest.approx(GOLDEN["gain"][t], rel=1e-14)
            assert step.innovation == pytest.approx(GOLDEN["innovation"][t], rel=1e-14)
            assert step.innovation_var == pytest.approx(GOLDEN["innovation_var"][t], rel=1e-14)
            assert state.lambda_filtered == pytest.approx(GOLDEN["lambda_filtered"][t], rel=1e-14)
            assert state.error_var == pytest.approx(GOLDEN["error_var"][t], rel=1e-14)
            assert not step.clamped


class TestFullPass:
    def test_matches_stepwise(self):
        rng = np.random.default_rng(21)
        lam = simulate_intensity(SPEC.intensity, 3000, rng)
        y = zm_sample(SPEC.family, lam, SPEC.params, rng)
        res = gkf_filter(y, SPEC)
        state = FilterState(SPEC.params.mu_lambda, 0.0)
        for t in range(len(y)):
            state, step = gkf_step(state, y[t], SPEC)
            assert res.lambda_filtered[t] == pytest.approx(state.lambda_filtered, rel=1e-12)
            assert res.error_var[t] == pytest.approx(state.error_var, rel=1e-12)

    def test_constant_series_rho0_steady(self):
        spec = ModelSpec.create("zmp", "gar1", omega=0.1, rho=0.0, beta=2.0, p=4.0)
        res = gkf_filter(np.full(50, 3), spec)
        assert np.allclose(res.lambda_filtered, res.lambda_filtered[0])
        assert np.allclose(res.error_var, res.error_var[0])

    def test_golden_trace_arrays(self):
        res = gkf_filter([3, 0, 5, 2, 0], SPEC)
        np.testing.assert_allclose(res.lambda_filtered, GOLDEN["lambda_filtered"], rtol=1e-13)
        np.testing.assert_allclose(res.error_var, GOLDEN["error_var"], rtol=1e-13)
        np.testing.assert_allclose(res.innovation, GOLDEN["innovation"], rtol=1e-13)

    def test_filter_beats_unconditional_mean(self):
        wins = 0
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            lam = simulate_intensity(SPEC.intensity, 10_000, rng)
            y = zm_sample(SPEC.family, lam, SPEC.params, rng)
            res = gkf_filter(y, SPEC)
            mse_f = np.mean((res.lambda_filtered - lam) ** 2)
            mse_0 = np.mean((SPEC.params.mu_lambda - lam) ** 2)
            wins += mse_f < mse_0
        assert wins == 20


class TestVarianceRecursion:
    def test_gain_bound_and_contraction(self):
        cp, gain, jvar, cf = variance_path(200, 0.2, 0.8, 1.0, 3.0)
        assert np.all(gain * 0.8 >= 0)
        assert np.all(gain * 0.8 < 1)
        assert np.all(cf <= cp + 1e-15)

    def test_pred_var_window(self):
        cp, _, _, _ = variance_path(200, 0.2, 0.8, 1.0, 3.0)
        assert np.all(cp >= (1 - 0.8**2) * 1.0 - 1e-12)
        assert np.all(cp <= 1.0 + 1e-12)

    def test_fixed_point_reached(self):
        cp, gain, _, _ = variance_path(500, 0.2, 0.8, 1.0, 3.0)
        assert cp[-1] == cp[-2]
        assert gain[-1] == gain[-2]


class TestInnovationProperties:
    def test_mean_zero_and_variance_match(self):
        rng = np.random.default_rng(23)
        lam = simulate_intensity(SPEC.intensity, 10_000, rng)
        y = zm_sample(SPEC.family, lam, SPEC.params, rng)
        res = gkf_filter(y, SPEC)
        h = res.innovation
        assert abs(h.mean()) < 4 * h.std() / np.sqrt(len(h))
        assert abs(h.var() / res.innovation_var.mean() - 1.0) < 0.10

    def test_error_var_tracks_true_mse(self):
        rng = np.random.default_rng(24)
        lam = simulate_intensity(SPEC.intensity, 50_000, rng)
        y = zm_sample(SPEC.family, lam, SPEC.params, rng)
        res = gkf_filter(y, SPEC)
        mse = np.mean((res.lambda_filtered - lam) ** 2)
        assert abs(mse / res.error_var.mean() - 1.0) < 0.05
