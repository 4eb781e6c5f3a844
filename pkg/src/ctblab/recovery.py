"""Structural parameters from reduced-form coefficients, with uncertainty.

The reduced-form slope on the log rate pins down the cost convexity; the
remaining coefficients, scaled by it, exponentiate into the per-treatment
present-bias factors and the daily discount factor.  Standard errors
propagate through the first-order (delta-method) expansion of that map,
and hypotheses about the recovered factors are tested with Wald
chi-squared(1) statistics on the recovered-parameter covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .tobit import ThetaVector, TobitFit

PARAM_NAMES = ("beta", "beta_cd", "beta_cr", "beta_crcd", "delta", "alpha")
BETA_NAMES = PARAM_NAMES[:4]


class RecoveryError(ValueError):
    """The reduced-form point does not map to valid structural parameters."""


@dataclass(frozen=True)
class RecoveredParams:
    """Structural point estimates; se/cov present when delta-method applied."""

    beta: float
    beta_cd: float
    beta_cr: float
    beta_crcd: float
    delta: float
    alpha: float
    se: np.ndarray | None = None
    cov: np.ndarray | None = None

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PARAM_NAMES])

    def value(self, name: str) -> float:
        if name not in PARAM_NAMES:
            raise KeyError(f"unknown parameter {name!r}")
        return float(getattr(self, name))

    def variance(self, name: str) -> float:
        if self.cov is None:
            raise RecoveryError("no covariance attached; fit-based recovery required")
        i = PARAM_NAMES.index(name)
        return float(self.cov[i, i])

    def covariance_of(self, name_a: str, name_b: str) -> float:
        if self.cov is None:
            raise RecoveryError("no covariance attached; fit-based recovery required")
        i, j = PARAM_NAMES.index(name_a), PARAM_NAMES.index(name_b)
        return float(self.cov[i, j])


@dataclass(frozen=True)
class WaldTest:
    hypothesis: str
    statistic: float
    p_value: float
    contrast: float


def _beta_sums(theta: ThetaVector) -> np.ndarray:
    """Log-numerators of the four present-bias factors, in PARAM order."""
    return np.array(
        [
            theta.theta_present,
            theta.theta_present + theta.theta_cd,
            theta.theta_present + theta.theta_cr,
            theta.theta_present + theta.theta_cr + theta.theta_cd + theta.theta_crcd,
        ]
    )


def recover(theta: ThetaVector) -> RecoveredParams:
    """Point estimates of (beta by cell, delta, alpha) from the reduced form."""
    r = theta.theta_lnrate
    if not r < 0:
        raise RecoveryError(
            f"theta_lnrate must be negative (convex effort cost), got {r}"
        )
    q = -r
    betas = np.exp(_beta_sums(theta) / q)
    delta = math.exp(theta.theta_delay / q)
    alpha = 1.0 - 1.0 / r
    return RecoveredParams(*(float(b) for b in betas), delta, alpha)


def theta_from_structural(
    beta: float,
    beta_cd: float,
    beta_cr: float,
    beta_crcd: float,
    delta: float,
    alpha: float,
    sigma: float,
) -> ThetaVector:
    """Inverse of `recover`; the treatment coefficients are differences of
    scaled log present-bias factors."""
    if not alpha > 1:
        raise RecoveryError(f"alpha must exceed 1, got {alpha}")
    scale = alpha - 1.0
    th_present = math.log(beta) / scale
    th_cd = math.log(beta_cd) / scale - th_present
    th_cr = math.log(beta_cr) / scale - th_present
    th_crcd = math.log(beta_crcd) / scale - th_present - th_cr - th_cd
    return ThetaVector(
        theta_delay=math.log(delta) / scale,
        theta_lnrate=-1.0 / scale,
        theta_present=th_present,
        theta_cr=th_cr,
        theta_cd=th_cd,
        theta_crcd=th_crcd,
        sigma=sigma,
    )


def recovery_jacobian(theta: ThetaVector) -> np.ndarray:
    """6x6 Jacobian of the recovered parameters in the theta ordering
    (delay, lnrate, present, cr, cd, crcd)."""
    r = theta.theta_lnrate
    if not r < 0:
        raise RecoveryError(f"theta_lnrate must be negative, got {r}")
    q = -r
    params = recover(theta)
    betas = params.as_array()[:4]
    sums = _beta_sums(theta)
    jac = np.zeros((6, 6))
    # Which theta components enter each beta's log-numerator.
    members = (
        (2,),
        (2, 4),
        (2, 3),
        (2, 3, 4, 5),
    )
    for i, (b, s, cols) in enumerate(zip(betas, sums, members)):
        for j in cols:
            jac[i, j] = b / q
        jac[i, 1] = b * s / (r * r)
    jac[4, 0] = params.delta / q
    jac[4, 1] = params.delta * theta.theta_delay / (r * r)
    jac[5, 1] = 1.0 / (r * r)
    return jac


def delta_method(
    fit: TobitFit, value_fn, jacobian_fn
) -> tuple[np.ndarray, np.ndarray]:
    """First-order propagation of the fit's theta covariance through a map.

    `value_fn` and `jacobian_fn` take the 6-vector of coefficients; the
    noise-scale row of the fit covariance never enters (the recovery map
    does not use it).
    """
    theta = fit.theta_hat
    values = np.atleast_1d(np.asarray(value_fn(theta), dtype=float))
    jac = np.atleast_2d(np.asarray(jacobian_fn(theta), dtype=float))
    cov_theta = fit.covariance[:6, :6]
    cov_out = jac @ cov_theta @ jac.T
    return values, 0.5 * (cov_out + cov_out.T)


def recover_from_fit(fit: TobitFit) -> RecoveredParams:
    """Structural estimates with delta-method SEs and full covariance."""
    if not fit.converged:
        raise RecoveryError(f"fit did not converge: {fit.message}")
    values, cov = delta_method(
        fit,
        lambda th: recover(th).as_array(),
        recovery_jacobian,
    )
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return RecoveredParams(*(float(v) for v in values), se=se, cov=cov)


def _wald(contrast: float, variance: float, label: str) -> WaldTest:
    if contrast == 0.0:
        return WaldTest(label, 0.0, 1.0, 0.0)
    if variance <= 0.0:
        raise RecoveryError(
            f"zero variance for nonzero contrast in test {label!r}"
        )
    stat = contrast * contrast / variance
    return WaldTest(label, float(stat), float(chi2.sf(stat, df=1)), float(contrast))


def wald_test_value(params: RecoveredParams, name: str, value: float = 1.0) -> WaldTest:
    """Wald chi-squared(1) test of one recovered parameter against a constant."""
    contrast = params.value(name) - value
    return _wald(contrast, params.variance(name), f"{name} = {value:g}")


def wald_test_pair(params: RecoveredParams, name_a: str, name_b: str) -> WaldTest:
    """Wald chi-squared(1) test of equality of two recovered parameters."""
    contrast = params.value(name_a) - params.value(name_b)
    variance = (
        params.variance(name_a)
        + params.variance(name_b)
        - 2.0 * params.covariance_of(name_a, name_b)
    )
    return _wald(contrast, variance, f"{name_a} = {name_b}")


def hypothesis_battery(params: RecoveredParams) -> list[WaldTest]:
    """All present-bias tests of the results grid: each factor against 1
    and every pairwise equality (4 + 6 tests)."""
    tests = [wald_test_value(params, name, 1.0) for name in BETA_NAMES]
    for i, name_a in enumerate(BETA_NAMES):
        for name_b in BETA_NAMES[i + 1 :]:
            tests.append(wald_test_pair(params, name_a, name_b))
    return tests


def _theta_contrast_vectors() -> dict[str, np.ndarray]:
    """Log-scale contrast defining each present-bias factor, over the six
    coefficients (delay, lnrate, present, cr, cd, crcd)."""
    vec = {}
    vec["beta"] = np.array([0, 0, 1, 0, 0, 0], dtype=float)
    vec["beta_cd"] = np.array([0, 0, 1, 0, 1, 0], dtype=float)
    vec["beta_cr"] = np.array([0, 0, 1, 1, 0, 0], dtype=float)
    vec["beta_crcd"] = np.array([0, 0, 1, 1, 1, 1], dtype=float)
    return vec


def hypothesis_battery_theta(fit: TobitFit) -> list[WaldTest]:
    """The same battery as linear contrasts on the reduced-form scale.

    A present-bias factor equals 1 exactly when its log-numerator is
    zero; two factors are equal exactly when the numerators agree.
    Finite-sample answers differ from the recovered-scale tests.
    """
    theta = fit.theta_hat.theta_array()
    cov = fit.covariance[:6, :6]
    vecs = _theta_contrast_vectors()
    tests = []
    for name in BETA_NAMES:
        c = vecs[name]
        tests.append(_wald(float(c @ theta), float(c @ cov @ c), f"{name} = 1 [theta scale]"))
    for i, name_a in enumerate(BETA_NAMES):
        for name_b in BETA_NAMES[i + 1 :]:
            c = vecs[name_a] - vecs[name_b]
            tests.append(
                _wald(float(c @ theta), float(c @ cov @ c), f"{name_a} = {name_b} [theta scale]")
            )
    return tests
