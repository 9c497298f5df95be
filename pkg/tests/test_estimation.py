import math

import numpy as np
import pytest

from qdhom.dephasing import LINE_A, LINE_B, tau_c_curve
from qdhom.errors import UsageError
from qdhom.estimation import (
    FitSpec, MeasuredSeries, chi_square, coherence_fit_spec, fit_coherence_curve,
    fit_hbt_lifetime, fit_visibility_decay, hbt_fit_spec, hbt_model_curve, least_squares_fit,
)
from qdhom.response import SampledCurve, gaussian_kernel

CURRENTS = np.arange(0.0, 501.0, 25.0)


def _coherence_data(params, noise=0.0, seed=0):
    y = tau_c_curve(params, CURRENTS)
    if noise:
        y = y * (1 + noise * np.random.default_rng(seed).standard_normal(y.size))
    return MeasuredSeries(CURRENTS, y)


class TestCoherenceFit:
    @pytest.mark.parametrize("params", [LINE_A, LINE_B])
    def test_noiseless_round_trip(self, params):
        res = fit_coherence_curve(_coherence_data(params))
        assert res.converged
        for name in ("tau3", "i0", "sigma_s"):
            assert res.values[name] == pytest.approx(getattr(params, name), rel=1e-3)
        assert res.chi2 < 1e-12

    def test_stderr_grows_with_noise(self):
        fits = [fit_coherence_curve(_coherence_data(LINE_A, level, seed=1), restarts=2)
                for level in (0.01, 0.02, 0.05)]
        for name in ("tau3", "i0", "sigma_s"):
            errs = [f.stderr[name] for f in fits]
            assert errs[0] < errs[1] < errs[2]

    def test_history_is_non_increasing(self):
        res = fit_coherence_curve(_coherence_data(LINE_A, 0.02, seed=4))
        assert len(res.history) == 9
        assert np.all(np.diff(res.history) <= 0)

    def test_fixed_parameter_respected(self):
        spec = coherence_fit_spec(fixed={"sigma_s": 188.0})
        assert "sigma_s" not in spec.free
        res = fit_coherence_curve(_coherence_data(LINE_A), spec)
        assert set(res.values) == {"tau3", "i0"}
        assert res.values["tau3"] == pytest.approx(750.0, rel=1e-6)

    def test_too_few_points(self):
        with pytest.raises(UsageError):
            fit_coherence_curve(MeasuredSeries([0.0, 10.0], [400.0, 390.0]))

    def test_unknown_parameter(self):
        with pytest.raises(UsageError):
            fit_coherence_curve(_coherence_data(LINE_A),
                                FitSpec(free={"bogus": (1, 2, 1.5)}))

    def test_seed_determinism(self):
        d = _coherence_data(LINE_B, 0.02, seed=7)
        a = fit_coherence_curve(d, restarts=3, seed=5)
        b = fit_coherence_curve(d, restarts=3, seed=5)
        assert a.values == b.values


class TestVisibilityDecayFit:
    def test_round_trip(self):
        d = np.linspace(-1500, 1500, 31)
        res = fit_visibility_decay(MeasuredSeries(d, np.exp(-np.abs(d) / 325.0)))
        assert res.values["tau_c"] == pytest.approx(325.0, rel=1e-6)

    def test_scale_equivariance(self):
        d = np.linspace(0, 1500, 16)
        y = np.exp(-d / 325.0) * (1 + 0.01 * np.random.default_rng(2).standard_normal(16))
        a = fit_visibility_decay(MeasuredSeries(d, y)).values["tau_c"]
        b = fit_visibility_decay(MeasuredSeries(d * 1000, y)).values["tau_c"]
        assert b == pytest.approx(1000 * a, rel=1e-7)

    def test_rejects_non_positive_points(self):
        d = np.array([0.0, 100.0, 200.0, 5000.0])
        y = np.exp(-d / 300.0)
        y[-1] = -0.01
        with pytest.warns(UserWarning):
            res = fit_visibility_decay(MeasuredSeries(d, y))
        assert res.values["tau_c"] == pytest.approx(300.0, rel=1e-6)

    def test_needs_two_points(self):
        with pytest.raises(UsageError):
            fit_visibility_decay(MeasuredSeries([100.0], [0.5]))


class TestHBTFit:
    def test_noiseless_round_trip(self):
        k = gaussian_kernel(428.0)
        taus = 100.0 * np.arange(-100, 101)
        y = hbt_model_curve(800.0, 0.0, k, 10_000.0).at(taus)
        res = fit_hbt_lifetime(MeasuredSeries(taus, y), k)
        assert res.values["tau_r"] == pytest.approx(800.0, rel=1e-3)
        assert res.values["g2_zero"] == pytest.approx(0.0, abs=1e-3)

    def test_residual_g2_recovered(self):
        k = gaussian_kernel(300.0)
        taus = 50.0 * np.arange(-200, 201)
        y = hbt_model_curve(650.0, 0.15, k, 10_000.0).at(taus)
        res = fit_hbt_lifetime(MeasuredSeries(taus, y), k, restarts=3)
        assert res.values["tau_r"] == pytest.approx(650.0, rel=1e-3)
        assert res.values["g2_zero"] == pytest.approx(0.15, rel=1e-3)

    def test_fixed_g2_zero(self):
        k = gaussian_kernel(428.0)
        taus = 100.0 * np.arange(-60, 61)
        y = hbt_model_curve(900.0, 0.0, k, 6000.0).at(taus)
        res = fit_hbt_lifetime(MeasuredSeries(taus, y), k, hbt_fit_spec(fixed={"g2_zero": 0.0}))
        assert set(res.values) == {"tau_r"}
        assert res.values["tau_r"] == pytest.approx(900.0, rel=1e-4)


class TestChiSquare:
    CURVE = SampledCurve(0.0, 10.0, np.array([0.0, 1.0, 2.0, 3.0]))

    def test_exact(self):
        assert chi_square(self.CURVE, MeasuredSeries([10.0, 20.0], [1.0, 2.0])) == 0.0

    def test_weighted(self):
        d = MeasuredSeries([0.0, 30.0], [1.0, 1.0], sigma=[0.5, 2.0])
        assert chi_square(self.CURVE, d) == pytest.approx(4.0 + 1.0)

    def test_nearest_sample(self):
        assert chi_square(self.CURVE, MeasuredSeries([14.9], [1.0])) == 0.0

    def test_poisson_noise_gives_unit_reduced_chi2(self):
        rng = np.random.default_rng(5)
        model = SampledCurve(0.0, 1.0, 200.0 + 50.0 * np.sin(np.arange(2000) / 100))
        counts = rng.poisson(model.values).astype(float)
        dof = counts.size
        chi2 = chi_square(model, MeasuredSeries(model.times, counts, np.sqrt(model.values)))
        assert abs(chi2 / dof - 1) < 3 * math.sqrt(2 / dof)

    def test_outside_grid(self):
        with pytest.raises(UsageError):
            chi_square(self.CURVE, MeasuredSeries([100.0], [1.0]))


class TestGeneric:
    def test_linear_model_stderr(self):
        # straight line with known sigma: compare against the analytic covariance
        x = np.linspace(0, 10, 21)
        sigma = np.full(x.size, 0.1)
        y = 2.0 * x + 1.0
        spec = FitSpec(free={"a": (0.1, 10.0, 1.0), "b": (0.1, 10.0, 2.0)})
        res = least_squares_fit(lambda d: d["a"] * x + d["b"], MeasuredSeries(x, y, sigma), spec)
        a_mat = np.column_stack([x, np.ones_like(x)]) / 0.1
        cov = np.linalg.inv(a_mat.T @ a_mat)
        assert res.values["a"] == pytest.approx(2.0, rel=1e-7)
        assert res.stderr["a"] == pytest.approx(math.sqrt(cov[0, 0]), rel=1e-4)
        assert res.stderr["b"] == pytest.approx(math.sqrt(cov[1, 1]), rel=1e-4)

    def test_too_few_points(self):
        spec = FitSpec(free={"a": (0.1, 10.0, 1.0)})
        with pytest.raises(UsageError):
            least_squares_fit(lambda d: np.array([d["a"]]), MeasuredSeries([1.0], [1.0]), spec)

    def test_evaluation_cap_reports_non_convergence(self):
        x = np.linspace(0, 10, 21)
        spec = FitSpec(free={"a": (0.1, 10.0, 1.0), "b": (0.1, 10.0, 5.0)})
        res = least_squares_fit(lambda d: d["a"] * x + d["b"], MeasuredSeries(x, 2 * x + 1),
                                spec, restarts=0, max_evaluations=5)
        assert not res.converged

    def test_bad_spec(self):
        with pytest.raises(UsageError):
            FitSpec(free={"a": (2.0, 1.0, 1.5)})
        with pytest.raises(UsageError):
            FitSpec(free={"a": (1.0, 2.0, 1.5)}, fixed={"a": 1.0})
