import math

import numpy as np
import pandas as pd
import pytest

from nse.distributions import DistributionSpec
from nse.errors import DataError, ParameterDomainError, SingularDesignError
from nse.estimator import OptimizerConfig
from nse.gof_tests import lilliefors, lilliefors_table
from nse.regression import (STANDARD_BETA, RegressionData, RegressionMethod, load_regression_csv, make_scenario,
                            nse_regression_fit, ols_fit)
from nse.rng import RngSeed

LIGHT = OptimizerConfig(restarts=2, max_iterations=600)
NORMAL = DistributionSpec.template("normal")


def test_ols_interpolates_exact_linear_data():
    x = np.random.default_rng(0).standard_normal((20, 2))
    y = 1.0 + x @ np.array([2.0, -3.0])
    result = ols_fit(RegressionData(x, y))
    assert result.mu_hat == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(result.beta_hat, [2.0, -3.0], atol=1e-10)
    np.testing.assert_allclose(result.residuals, 0.0, atol=1e-10)
    assert result.method is RegressionMethod.OLS


def test_ols_constant_response():
    x = np.random.default_rng(1).standard_normal((10, 1))
    result = ols_fit(RegressionData(x, np.full(10, 4.2)))
    assert result.mu_hat == pytest.approx(4.2, abs=1e-10)
    np.testing.assert_allclose(result.beta_hat, 0.0, atol=1e-10)


def test_ols_hand_line_fit():
    result = ols_fit(RegressionData(np.array([0.0, 1.0, 2.0, 3.0]), np.array([1.0, 3.0, 5.0, 7.0])))
    assert result.mu_hat == pytest.approx(1.0)
    assert result.beta_hat[0] == pytest.approx(2.0)


def test_ols_without_intercept():
    x = np.arange(1.0, 7.0)
    result = ols_fit(RegressionData(x, 3 * x, intercept=False))
    assert result.mu_hat == 0.0
    assert result.beta_hat[0] == pytest.approx(3.0)


def test_regression_data_validation():
    with pytest.raises(DataError):
        RegressionData(np.zeros((3, 1)), np.zeros(3))
    with pytest.raises(DataError):
        RegressionData(np.zeros((10, 1)), np.zeros(9))
    x = np.random.default_rng(2).standard_normal((10, 1))
    y = np.ones(10)
    y[4] = np.nan
    with pytest.raises(DataError) as info:
        RegressionData(x, y)
    assert info.value.index == 4
    with pytest.raises(SingularDesignError):
        RegressionData(np.column_stack([x[:, 0], 2 * x[:, 0]]), np.ones(10))


def test_nse_stays_close_to_ols_under_normal_errors():
    close = 0
    for j in range(3):
        data, _ = make_scenario("standard_linear", 300, RngSeed(41, j))
        ols = ols_fit(data)
        nse = nse_regression_fit(data, NORMAL, LIGHT, RngSeed(j, 7), n_reference=3, repeats=2)
        close += np.max(np.abs(nse.beta_hat - ols.beta_hat)) < 0.15
        assert nse.method is RegressionMethod.NSE
        assert nse.loss_value >= 1.0
        assert len(nse.run_losses) == 2
    assert close >= 2


def test_nse_regression_is_seed_deterministic():
    data, _ = make_scenario("standard_linear", 100, RngSeed(3))
    a = nse_regression_fit(data, NORMAL, LIGHT, RngSeed(5), n_reference=2, repeats=1)
    b = nse_regression_fit(data, NORMAL, LIGHT, RngSeed(5), n_reference=2, repeats=1)
    np.testing.assert_array_equal(a.beta_hat, b.beta_hat)
    assert a.sigma_hat == b.sigma_hat


def test_nse_regression_with_fixed_sigma_keeps_ols_scale():
    data, _ = make_scenario("standard_linear", 100, RngSeed(3))
    result = nse_regression_fit(data, NORMAL, LIGHT, RngSeed(5), n_reference=2, repeats=1, fix_sigma=True)
    assert result.sigma_hat == pytest.approx(ols_fit(data).sigma_hat)
    with pytest.raises(ParameterDomainError):
        nse_regression_fit(data, DistributionSpec.template("unit_exponential"), LIGHT, RngSeed(5), fix_sigma=True)


def test_nse_regression_with_exponential_errors_starts_inside_the_support():
    data, truth = make_scenario("standard_linear", 300, RngSeed(8), error="exp1")
    family = DistributionSpec.template("exponential")
    result = nse_regression_fit(data, family, LIGHT, RngSeed(8), n_reference=2, repeats=1)
    assert math.isfinite(result.loss_value)
    np.testing.assert_allclose(result.beta_hat, truth["beta"], atol=0.3)
    assert np.all(result.residuals >= -1e-6)


def test_zero_noise_is_reported_as_degenerate():
    x = np.random.default_rng(4).standard_normal((60, 2))
    data = RegressionData(x, 0.5 + x @ np.array([1.0, 2.0]))
    result = nse_regression_fit(data, NORMAL, LIGHT, RngSeed(1), n_reference=1, repeats=1)
    assert result.degenerate
    assert math.isnan(result.loss_value)
    np.testing.assert_allclose(result.beta_hat, [1.0, 2.0], atol=1e-10)


def test_nse_regression_argument_checks():
    data, _ = make_scenario("standard_linear", 60, RngSeed(1))
    with pytest.raises(ParameterDomainError):
        nse_regression_fit(data, NORMAL, LIGHT, RngSeed(1), n_reference=0)


def test_standard_scenario_ols_recovers_beta():
    hits = 0
    for j in range(20):
        data, truth = make_scenario("standard_linear", 300, RngSeed(77, j))
        hits += np.max(np.abs(ols_fit(data).beta_hat - STANDARD_BETA)) < 0.2
        assert truth["sigma"] == 0.5
    assert hits >= 19


def test_scenarios_are_seed_deterministic():
    for kind in ("standard_linear", "quadratic", "missing_covariate"):
        a, _ = make_scenario(kind, 80, RngSeed(10))
        b, _ = make_scenario(kind, 80, RngSeed(10))
        np.testing.assert_array_equal(a.design, b.design)
        np.testing.assert_array_equal(a.response, b.response)
        assert a.p == 5


def test_scenario_argument_checks():
    with pytest.raises(ParameterDomainError):
        make_scenario("standard_linear", 40, RngSeed(1))
    with pytest.raises(ParameterDomainError):
        make_scenario("standard_linear", 100, RngSeed(1), error="cauchy")
    with pytest.raises(ValueError):
        make_scenario("cubic", 100, RngSeed(1))


def test_load_regression_csv(tmp_path):
    rng = np.random.default_rng(6)
    frame = pd.DataFrame({"a": rng.standard_normal(12), "b": rng.standard_normal(12), "label": ["u"] * 12})
    frame["y"] = 2 * frame["a"] - frame["b"]
    path = tmp_path / "reg.csv"
    frame.to_csv(path, index=False)
    data = load_regression_csv(path, "y")
    assert data.names == ("a", "b")
    assert data.n == 12

    frame.loc[3, "a"] = np.nan
    frame.to_csv(path, index=False)
    with pytest.raises(DataError) as info:
        load_regression_csv(path, "y")
    assert info.value.index == 3
    with pytest.raises(DataError):
        load_regression_csv(path, "missing")


def test_ols_residuals_are_orthogonal_to_the_design():
    rng = np.random.default_rng(12)
    for _ in range(50):
        n, p = int(rng.integers(10, 200)), int(rng.integers(1, 6))
        x = rng.standard_normal((n, p)) * rng.lognormal(size=p)
        y = x @ rng.normal(scale=3.0, size=p) + rng.standard_t(3, size=n)
        data = RegressionData(x, y, intercept=bool(rng.integers(2)))
        result = ols_fit(data)
        assert np.max(np.abs(data.design_matrix().T @ result.residuals)) < 1e-8 * np.linalg.norm(y)


@pytest.mark.parametrize("a, b", [(2.5, -7.0), (-0.3, 1.0), (1e3, 0.0)])
def test_ols_is_location_scale_equivariant(a, b):
    data, _ = make_scenario("standard_linear", 120, RngSeed(13))
    base = ols_fit(data)
    moved = ols_fit(RegressionData(data.design, a * data.response + b))
    np.testing.assert_allclose(moved.beta_hat, a * base.beta_hat, rtol=1e-9, atol=1e-10 * abs(a))
    assert moved.mu_hat == pytest.approx(a * base.mu_hat + b, rel=1e-9, abs=1e-9 * max(1.0, abs(a)))
    assert moved.sigma_hat == pytest.approx(abs(a) * base.sigma_hat, rel=1e-9)


def test_nse_regression_is_scale_equivariant():
    config = OptimizerConfig(restarts=1, max_iterations=600)
    data, _ = make_scenario("standard_linear", 150, RngSeed(14))
    base = nse_regression_fit(data, NORMAL, config, RngSeed(2), n_reference=2, repeats=1)
    # a power of two scales every intermediate exactly
    scaled = nse_regression_fit(RegressionData(data.design, 4.0 * data.response), NORMAL, config, RngSeed(2),
                                n_reference=2, repeats=1)
    np.testing.assert_allclose(scaled.beta_hat, 4.0 * base.beta_hat, rtol=1e-6, atol=1e-6)
    assert scaled.mu_hat == pytest.approx(4.0 * base.mu_hat, abs=1e-6)
    assert scaled.sigma_hat == pytest.approx(4.0 * base.sigma_hat, rel=1e-6)
    assert scaled.loss_value == pytest.approx(base.loss_value, rel=1e-6)


def test_nse_regression_follows_a_location_shift():
    config = OptimizerConfig(restarts=1, max_iterations=3000)
    data, _ = make_scenario("standard_linear", 150, RngSeed(15))
    base = nse_regression_fit(data, NORMAL, config, RngSeed(3), n_reference=2, repeats=1)
    shifted = nse_regression_fit(RegressionData(data.design, data.response + 1.0), NORMAL, config, RngSeed(3),
                                 n_reference=2, repeats=1)
    np.testing.assert_allclose(shifted.beta_hat, base.beta_hat, atol=0.2)
    assert shifted.mu_hat - 1.0 == pytest.approx(base.mu_hat, abs=0.2)


@pytest.mark.parametrize("error, family", [("normal", NORMAL), ("exp1", DistributionSpec.template("exponential"))])
def test_nse_loss_never_exceeds_the_loss_at_the_ols_start(error, family):
    data, _ = make_scenario("standard_linear", 150, RngSeed(16), error=error)
    result = nse_regression_fit(data, family, LIGHT, RngSeed(4), n_reference=2, repeats=3)
    assert len(result.init_losses) == len(result.run_losses) == 3
    assert all(run <= init for run, init in zip(result.run_losses, result.init_losses))
    assert result.loss_value <= np.mean(result.init_losses)


def _lilliefors_passes(residual_sets, table):
    return sum(lilliefors(r, table).passed for r in residual_sets)


def _residual_pass_counts(error, reps, table):
    ols_residuals, nse_residuals = [], []
    for j in range(reps):
        data, _ = make_scenario("standard_linear", 300, RngSeed(900, j), error=error)
        ols_residuals.append(ols_fit(data).residuals)
        nse_residuals.append(nse_regression_fit(data, NORMAL, LIGHT, RngSeed(j, 3), n_reference=3,
                                                repeats=2).residuals)
    return _lilliefors_passes(ols_residuals, table), _lilliefors_passes(nse_residuals, table)


def test_nse_residuals_look_more_normal_under_exponential_errors():
    ols_passes, nse_passes = _residual_pass_counts("exp1", 4, lilliefors_table(300, 2000))
    assert ols_passes == 0
    assert nse_passes >= ols_passes


@pytest.mark.slow
@pytest.mark.parametrize("error", ["exp1", "t2", "t4"])
def test_nse_residuals_pass_normality_at_least_as_often_as_ols(error):
    ols_passes, nse_passes = _residual_pass_counts(error, 20, lilliefors_table(300, 2000))
    assert nse_passes >= ols_passes
