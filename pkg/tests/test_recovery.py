import math

import numpy as np
import pytest

from ctblab.recovery import (
    PARAM_NAMES,
    RecoveredParams,
    RecoveryError,
    delta_method,
    hypothesis_battery,
    hypothesis_battery_theta,
    recover,
    recover_from_fit,
    recovery_jacobian,
    theta_from_structural,
    wald_test_pair,
    wald_test_value,
)
from ctblab.simulate import filter_analysis_rows, simulate_panel
from ctblab.tobit import ThetaVector, fit_tobit

from test_simulate import make_spec
from test_tobit import make_rows


def random_theta_vectors(n, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        yield ThetaVector(
            theta_delay=float(rng.uniform(-1.0, 1.0)),
            theta_lnrate=float(rng.uniform(-6.0, -0.5)),
            theta_present=float(rng.uniform(-3.0, 3.0)),
            theta_cr=float(rng.uniform(-3.0, 3.0)),
            theta_cd=float(rng.uniform(-3.0, 3.0)),
            theta_crcd=float(rng.uniform(-3.0, 3.0)),
            sigma=float(rng.uniform(0.1, 2.0)),
        )


def test_zero_log_coefficients_recover_unit_betas():
    theta = ThetaVector(-0.05, -3.0, 0.0, 0.0, 0.0, 0.0, sigma=1.0)
    params = recover(theta)
    assert params.beta == 1.0
    assert params.beta_cd == 1.0
    assert params.beta_cr == 1.0
    assert params.beta_crcd == 1.0


def test_recovery_matches_published_point_estimates():
    theta = theta_from_structural(1.009, 0.921, 0.679, 0.581, 0.986, 1.282, 0.8)
    assert theta.theta_lnrate == pytest.approx(-3.546, abs=1e-3)
    assert theta.theta_delay == pytest.approx(-0.0500, abs=1e-4)
    params = recover(theta)
    assert params.delta == pytest.approx(0.986, abs=1e-6)
    assert params.alpha == pytest.approx(1.282, abs=1e-6)
    assert params.beta_crcd == pytest.approx(0.581, abs=1e-6)
    # The combined present-day coefficient for the fully-certain cell
    # matches the published magnitude.
    combined = (
        theta.theta_present + theta.theta_cr + theta.theta_cd + theta.theta_crcd
    )
    assert combined == pytest.approx(-1.926, abs=1e-3)


def test_round_trip_identity_to_1e12():
    for theta in random_theta_vectors(1000, seed=5):
        params = recover(theta)
        back = theta_from_structural(
            params.beta,
            params.beta_cd,
            params.beta_cr,
            params.beta_crcd,
            params.delta,
            params.alpha,
            theta.sigma,
        )
        for name in (
            "theta_delay",
            "theta_lnrate",
            "theta_present",
            "theta_cr",
            "theta_cd",
            "theta_crcd",
        ):
            assert getattr(back, name) == pytest.approx(
                getattr(theta, name), abs=1e-12
            ), name


def test_recover_rejects_nonnegative_lnrate_coefficient():
    with pytest.raises(RecoveryError):
        recover(ThetaVector(0.0, 0.5, 0.0, 0.0, 0.0, 0.0, sigma=1.0))
    with pytest.raises(RecoveryError):
        recover(ThetaVector(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, sigma=1.0))


def test_recovery_jacobian_matches_finite_differences():
    from oracles import fd_gradient

    for theta in random_theta_vectors(50, seed=9):
        jac = recovery_jacobian(theta)
        base = theta.theta_array()
        for i in range(6):

            def component(vec):
                return recover(ThetaVector.from_arrays(vec, theta.sigma)).as_array()[i]

            fd = fd_gradient(component, base.copy(), step=1e-6)
            scale = max(1.0, float(np.max(np.abs(jac[i]))))
            assert np.all(np.abs(fd - jac[i]) / scale < 1e-5), (i, theta)


@pytest.fixture(scope="module")
def table_truth_fit():
    spec = make_spec(
        sizes={"baseline": 400, "cd": 800, "cr": 400, "crcd": 400}, seed=101
    )
    return fit_tobit(make_rows(simulate_panel(spec)))


def test_delta_method_identity_returns_fit_covariance(table_truth_fit):
    values, cov = delta_method(
        table_truth_fit,
        lambda th: th.theta_array(),
        lambda th: np.eye(6),
    )
    assert np.allclose(values, table_truth_fit.theta_hat.theta_array())
    assert np.allclose(cov, table_truth_fit.covariance[:6, :6], atol=1e-15)


def test_delta_method_linear_map_scales_ses_exactly(table_truth_fit):
    c = np.array([2.0, -3.0, 0.5, 1.5, -0.25, 4.0])
    values, cov = delta_method(
        table_truth_fit,
        lambda th: c * th.theta_array(),
        lambda th: np.diag(c),
    )
    base_se = np.sqrt(np.diag(table_truth_fit.covariance[:6, :6]))
    assert np.allclose(np.sqrt(np.diag(cov)), np.abs(c) * base_se, rtol=1e-12)


def test_recover_from_fit_close_to_truth(table_truth_fit):
    params = recover_from_fit(table_truth_fit)
    truth = np.array([1.009, 0.921, 0.679, 0.581, 0.986, 1.282])
    assert np.all(np.abs(params.as_array() - truth) <= 3.5 * params.se)
    assert params.cov.shape == (6, 6)
    assert np.allclose(params.cov, params.cov.T)


def test_wald_zero_contrast_gives_unit_pvalue():
    params = RecoveredParams(1.0, 1.0, 1.0, 1.0, 0.99, 1.3, cov=np.eye(6) * 0.01)
    test = wald_test_value(params, "beta", 1.0)
    assert test.statistic == 0.0
    assert test.p_value == 1.0
    pair = wald_test_pair(params, "beta", "beta_cd")
    assert pair.statistic == 0.0 and pair.p_value == 1.0


def test_wald_zero_variance_with_nonzero_contrast_errors():
    params = RecoveredParams(0.9, 1.0, 1.0, 1.0, 0.99, 1.3, cov=np.zeros((6, 6)))
    with pytest.raises(RecoveryError, match="variance"):
        wald_test_value(params, "beta", 1.0)


def test_wald_pair_symmetric_in_argument_order(table_truth_fit):
    params = recover_from_fit(table_truth_fit)
    ab = wald_test_pair(params, "beta_cd", "beta_cr")
    ba = wald_test_pair(params, "beta_cr", "beta_cd")
    assert ab.statistic == pytest.approx(ba.statistic, rel=1e-12)
    assert ab.p_value == pytest.approx(ba.p_value, rel=1e-12)
    assert ab.contrast == pytest.approx(-ba.contrast, rel=1e-12)


def test_pvalue_strictly_decreasing_in_statistic():
    from scipy.stats import chi2

    stats = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0]
    ps = [chi2.sf(s, 1) for s in stats]
    assert all(a > b for a, b in zip(ps, ps[1:]))
    params = RecoveredParams(0.9, 0.8, 1.0, 1.0, 0.99, 1.3, cov=np.eye(6) * 0.01)
    t_small = wald_test_value(params, "beta", 1.0)
    t_large = wald_test_value(params, "beta_cd", 1.0)
    assert t_large.statistic > t_small.statistic
    assert t_large.p_value < t_small.p_value


def test_battery_has_ten_tests_and_labels(table_truth_fit):
    params = recover_from_fit(table_truth_fit)
    tests = hypothesis_battery(params)
    assert len(tests) == 10
    labels = [t.hypothesis for t in tests]
    assert labels[:4] == ["beta = 1", "beta_cd = 1", "beta_cr = 1", "beta_crcd = 1"]
    assert "beta_crcd = 1" in labels
    assert sum("=" in lab for lab in labels) == 10


def test_battery_all_equal_betas_gives_unit_pairwise_pvalues():
    params = RecoveredParams(0.9, 0.9, 0.9, 0.9, 0.99, 1.3, cov=np.eye(6) * 0.01)
    tests = hypothesis_battery(params)
    pairwise = [t for t in tests if "1" not in t.hypothesis.split()[-1]]
    assert len(pairwise) == 6
    assert all(t.p_value == 1.0 for t in pairwise)


def test_fully_certain_cell_rejects_unity_and_is_closest_to_rate_certain(
    table_truth_fit,
):
    params = recover_from_fit(table_truth_fit)
    assert wald_test_value(params, "beta_crcd", 1.0).p_value < 0.01
    involving = {
        "beta": wald_test_pair(params, "beta_crcd", "beta").p_value,
        "beta_cd": wald_test_pair(params, "beta_crcd", "beta_cd").p_value,
        "beta_cr": wald_test_pair(params, "beta_crcd", "beta_cr").p_value,
        "one": wald_test_value(params, "beta_crcd", 1.0).p_value,
    }
    assert involving["beta_cr"] == max(involving.values())


def test_theta_scale_battery_mirrors_beta_scale_conclusions(table_truth_fit):
    beta_tests = hypothesis_battery(recover_from_fit(table_truth_fit))
    theta_tests = hypothesis_battery_theta(table_truth_fit)
    assert len(theta_tests) == 10
    # Same decisions at the 5% level on a well-identified fit, though the
    # finite-sample statistics differ.
    for bt, tt in zip(beta_tests, theta_tests):
        assert (bt.p_value < 0.05) == (tt.p_value < 0.05), (bt, tt)


def test_wald_size_close_to_nominal_under_null():
    # With a unit present-bias factor the "beta = 1" test should reject a
    # 5% test about 5% of the time.
    rejections = 0
    n_reps = 200
    for rep in range(n_reps):
        spec = make_spec(
            sizes={"baseline": 100, "cd": 0, "cr": 0, "crcd": 0},
            seed=3_000 + rep,
            betas={"baseline": 1.0, "cd": 1.0, "cr": 1.0, "crcd": 1.0},
        )
        fit = fit_tobit(make_rows(simulate_panel(spec)), n_restarts=0)
        params = recover_from_fit(fit)
        if wald_test_value(params, "beta", 1.0).p_value < 0.05:
            rejections += 1
    rate = rejections / n_reps
    assert 0.005 <= rate <= 0.125, rate
