"""Two-limit censored-regression maximum likelihood with clustered errors.

The latent outcome is the log effort ratio; observations sit at
observation-specific lower/upper limits whenever the chosen near-day
effort is at 0 or at the full budget.  Interior rows contribute a Gaussian
density term, censored rows a tail probability.  The noise scale is
optimized as its logarithm so positivity needs no constraint. Covariance
is the cluster-robust sandwich A^-1 B A^-1 with A the observed
information and B the outer product of subject-level score sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr

from .model import BOUND_TOL, Censoring, RateSchedule, censor_limits
from .simulate import DecisionRecord

GRAD_TOL = 1e-8
STEP_TOL = 1e-10
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# Row kinds in the packed design arrays.
_INTERIOR, _LEFT, _RIGHT = 0, 1, 2

THETA_NAMES = (
    "theta_delay",
    "theta_lnrate",
    "theta_present",
    "theta_cr",
    "theta_cd",
    "theta_crcd",
)


class EstimationError(RuntimeError):
    """Estimation cannot proceed on the given rows."""


@dataclass(frozen=True)
class ThetaVector:
    """Reduced-form coefficients plus the latent noise scale."""

    theta_delay: float
    theta_lnrate: float
    theta_present: float
    theta_cr: float
    theta_cd: float
    theta_crcd: float
    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def theta_array(self) -> np.ndarray:
        return np.array(
            [
                self.theta_delay,
                self.theta_lnrate,
                self.theta_present,
                self.theta_cr,
                self.theta_cd,
                self.theta_crcd,
            ]
        )

    @classmethod
    def from_arrays(cls, theta: np.ndarray, sigma: float) -> "ThetaVector":
        return cls(*(float(v) for v in theta), float(sigma))


@dataclass(frozen=True)
class DesignRow:
    """One estimable observation: outcome (or censor flag), covariates,
    censoring limits, and the cluster (subject) it belongs to."""

    y: float
    censored: Censoring
    x: np.ndarray
    lower: float
    upper: float
    cluster: int


def build_design_row(
    record: DecisionRecord,
    omega: float,
    schedule: RateSchedule = RateSchedule(),
) -> DesignRow:
    """Design row for one incentivized decision.

    Covariates are [delay_days, ln rate, near-day indicator, and the three
    treatment interactions with the near-day indicator].  The outcome is
    the log effort ratio when interior; rows at a bound only carry the
    limit they sit on.
    """
    if not record.incentivized:
        raise ValueError(
            f"record (subject {record.subject_id}, day {record.decision_day}, "
            f"rate {record.rate}) is not incentivized"
        )
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    budget = schedule.budget
    if record.e2 < -BOUND_TOL or record.e2 > budget + BOUND_TOL:
        raise ValueError(f"e2 {record.e2} outside [0, {budget}]")
    lower, upper = censor_limits(record.rate, omega, budget)
    pr = 1.0 if record.decision_day == 2 else 0.0
    cr = 1.0 if record.certain_rate else 0.0
    cd = 1.0 if record.certain_day else 0.0
    x = np.array(
        [float(schedule.delay_days), math.log(record.rate), pr, cr * pr, cd * pr, cr * cd * pr]
    )
    if record.e2 <= BOUND_TOL:
        return DesignRow(math.nan, Censoring.AT_LOWER, x, lower, upper, record.subject_id)
    if record.e2 >= budget - BOUND_TOL:
        return DesignRow(math.nan, Censoring.AT_UPPER, x, lower, upper, record.subject_id)
    e9 = (budget - record.e2) / record.rate
    y = math.log((record.e2 + omega) / (e9 + omega))
    return DesignRow(y, Censoring.INTERIOR, x, lower, upper, record.subject_id)


class DesignMatrix:
    """Packed arrays for fast likelihood evaluation over many rows."""

    def __init__(self, rows: list[DesignRow]):
        if not rows:
            raise EstimationError("no rows to estimate on")
        self.X = np.vstack([r.x for r in rows])
        self.y = np.array([r.y for r in rows])
        self.lower = np.array([r.lower for r in rows])
        self.upper = np.array([r.upper for r in rows])
        kind_of = {
            Censoring.INTERIOR: _INTERIOR,
            Censoring.AT_LOWER: _LEFT,
            Censoring.AT_UPPER: _RIGHT,
        }
        self.kind = np.array([kind_of[r.censored] for r in rows], dtype=np.int8)
        self.cluster = np.array([r.cluster for r in rows])
        self.n_obs = len(rows)
        self.n_left = int(np.sum(self.kind == _LEFT))
        self.n_right = int(np.sum(self.kind == _RIGHT))
        self.n_interior = self.n_obs - self.n_left - self.n_right
        self.support_counts = tuple(int(c) for c in np.sum(self.X != 0.0, axis=0))

    @classmethod
    def ensure(cls, rows) -> "DesignMatrix":
        return rows if isinstance(rows, DesignMatrix) else cls(list(rows))


def _norm_logpdf(z: np.ndarray) -> np.ndarray:
    return -0.5 * z * z - _LOG_SQRT_2PI


def _loglik_terms(psi: np.ndarray, dm: DesignMatrix, cols: np.ndarray):
    """Per-row log likelihood, d/dmu, and d/dln(sigma) at psi = (theta, ln sigma).

    Returns None when the value is not finite (optimizer treats as -inf).
    """
    theta, lns = psi[:-1], psi[-1]
    if not np.all(np.isfinite(psi)) or abs(lns) > 200.0:
        return None
    sigma = math.exp(lns)
    ll = np.empty(dm.n_obs)
    dmu = np.empty(dm.n_obs)
    dlns = np.empty(dm.n_obs)

    # Wild trial points from line searches can push tail terms past float
    # range; the non-finite check below turns those into a -inf value.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        mu = dm.X[:, cols] @ theta

        mid = dm.kind == _INTERIOR
        if np.any(mid):
            z = (dm.y[mid] - mu[mid]) / sigma
            ll[mid] = _norm_logpdf(z) - lns
            dmu[mid] = z / sigma
            dlns[mid] = z * z - 1.0

        left = dm.kind == _LEFT
        if np.any(left):
            zl = (dm.lower[left] - mu[left]) / sigma
            logcdf = log_ndtr(zl)
            lam = np.exp(_norm_logpdf(zl) - logcdf)
            ll[left] = logcdf
            dmu[left] = -lam / sigma
            dlns[left] = -zl * lam

        right = dm.kind == _RIGHT
        if np.any(right):
            zu = (dm.upper[right] - mu[right]) / sigma
            logsf = log_ndtr(-zu)
            lam = np.exp(_norm_logpdf(zu) - logsf)
            ll[right] = logsf
            dmu[right] = lam / sigma
            dlns[right] = zu * lam

    if not (
        np.all(np.isfinite(ll))
        and np.all(np.isfinite(dmu))
        and np.all(np.isfinite(dlns))
    ):
        return None
    return ll, dmu, dlns


def _loglik_grad(psi: np.ndarray, dm: DesignMatrix, cols: np.ndarray):
    terms = _loglik_terms(psi, dm, cols)
    if terms is None:
        return -math.inf, np.zeros(len(psi))
    ll, dmu, dlns = terms
    grad = np.empty(len(psi))
    grad[:-1] = dm.X[:, cols].T @ dmu
    grad[-1] = float(np.sum(dlns))
    return float(np.sum(ll)), grad


def _row_scores(psi: np.ndarray, dm: DesignMatrix, cols: np.ndarray) -> np.ndarray:
    terms = _loglik_terms(psi, dm, cols)
    if terms is None:
        raise EstimationError("scores requested at a non-finite likelihood point")
    _, dmu, dlns = terms
    return np.column_stack([dm.X[:, cols] * dmu[:, None], dlns])


def tobit_loglik(theta: ThetaVector, rows) -> tuple[float, np.ndarray]:
    """Log likelihood and its analytic gradient in (theta, ln sigma)."""
    dm = DesignMatrix.ensure(rows)
    psi = np.append(theta.theta_array(), math.log(theta.sigma))
    return _loglik_grad(psi, dm, np.arange(6))


def cluster_score_sums(theta: ThetaVector, rows) -> tuple[np.ndarray, np.ndarray]:
    """Per-subject score sums in (theta, ln sigma); rows are (cluster, 7)."""
    dm = DesignMatrix.ensure(rows)
    psi = np.append(theta.theta_array(), math.log(theta.sigma))
    scores = _row_scores(psi, dm, np.arange(6))
    ids, inverse = np.unique(dm.cluster, return_inverse=True)
    sums = np.zeros((len(ids), scores.shape[1]))
    np.add.at(sums, inverse, scores)
    return ids, sums


def _fd_hessian(grad_fn, psi: np.ndarray) -> np.ndarray:
    """Central finite differences of the analytic gradient."""
    dim = len(psi)
    hess = np.empty((dim, dim))
    for j in range(dim):
        h = 1e-6 * (1.0 + abs(psi[j]))
        up = psi.copy()
        dn = psi.copy()
        up[j] += h
        dn[j] -= h
        hess[:, j] = (grad_fn(up) - grad_fn(dn)) / (2.0 * h)
    return 0.5 * (hess + hess.T)


def _newton_polish(value_grad, psi: np.ndarray, max_iter: int = 100):
    """Drive the gradient below GRAD_TOL with damped Newton steps.

    Near the optimum the summed log likelihood can no longer discriminate
    steps at float resolution while the analytic gradient still can, so a
    step is also accepted when it shrinks the gradient norm without
    losing more value than summation noise.

    Returns (psi, value, grad, converged, last step inf-norm).
    """
    value, grad = value_grad(psi)
    step_inf = math.inf
    for _ in range(max_iter):
        grad_inf = float(np.max(np.abs(grad)))
        if grad_inf < GRAD_TOL and step_inf < STEP_TOL:
            return psi, value, grad, True, step_inf
        hess = _fd_hessian(lambda p: value_grad(p)[1], psi)
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        # Hessian of the log likelihood should be negative definite at a
        # maximum; flip uphill Newton directions onto the gradient.
        if float(step @ grad) < 0.0:
            step = grad / max(1.0, float(np.max(np.abs(grad))))
        noise = 1e-9 * (1.0 + abs(value))
        scale = 1.0
        improved = False
        for _ in range(60):
            candidate = psi + scale * step
            new_value, new_grad = value_grad(candidate)
            clear_gain = new_value > value + noise
            neutral_gain = (
                new_value > value - noise
                and np.max(np.abs(new_grad)) < grad_inf
            )
            if clear_gain or neutral_gain:
                step_inf = float(np.max(np.abs(scale * step)))
                psi, value, grad = candidate, new_value, new_grad
                improved = True
                break
            scale *= 0.5
        if not improved:
            grad_inf = float(np.max(np.abs(grad)))
            return psi, value, grad, grad_inf < GRAD_TOL, step_inf
    grad_inf = float(np.max(np.abs(grad)))
    return psi, value, grad, grad_inf < GRAD_TOL and step_inf < STEP_TOL, step_inf


@dataclass(frozen=True)
class TobitFit:
    """Maximum-likelihood result with cluster-robust covariance.

    The covariance is 7x7 over (theta, sigma) on the natural sigma scale;
    rows and columns of coefficients without data support are zero and
    the corresponding estimates are pinned at zero.
    """

    theta_hat: ThetaVector
    covariance: np.ndarray
    loglik: float
    n_obs: int
    n_left: int
    n_right: int
    n_clusters: int
    converged: bool
    support_counts: tuple[int, ...]
    restart_logliks: tuple[float, ...]
    grad_inf_norm: float
    message: str
    settings: dict = field(default_factory=dict)

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def _ols_start(dm: DesignMatrix, cols: np.ndarray) -> np.ndarray:
    mid = dm.kind == _INTERIOR
    x_int = dm.X[np.ix_(mid, cols)]
    y_int = dm.y[mid]
    theta, *_ = np.linalg.lstsq(x_int, y_int, rcond=None)
    resid = y_int - x_int @ theta
    sigma = float(np.sqrt(np.mean(resid**2)))
    sigma = max(sigma, 1e-6)
    return np.append(theta, math.log(sigma))


def fit_tobit(
    rows,
    start: ThetaVector | None = None,
    n_restarts: int = 4,
    cluster_correction: bool = True,
) -> TobitFit:
    """Fit the two-limit model by quasi-Newton ascent with restarts.

    The default start is least squares on the interior rows with the
    interior residual scale; restarts perturb the start and the best
    local optimum wins.  Coefficients whose covariate is zero in every
    row are dropped from the optimization and reported as zero with zero
    variance.
    """
    from scipy.optimize import minimize

    dm = DesignMatrix.ensure(rows)
    n_clusters = len(np.unique(dm.cluster))
    if n_clusters < 2:
        raise EstimationError(f"need at least 2 subject clusters, got {n_clusters}")
    if dm.n_interior == 0:
        if dm.n_left and not dm.n_right:
            raise EstimationError("all rows are left-censored; scale is unidentified")
        if dm.n_right and not dm.n_left:
            raise EstimationError("all rows are right-censored; scale is unidentified")
        raise EstimationError("no interior rows; scale is unidentified")

    cols = np.flatnonzero(np.array(dm.support_counts) > 0)
    dim = len(cols) + 1

    def value_grad(psi):
        return _loglik_grad(psi, dm, cols)

    def neg(psi):
        value, grad = value_grad(psi)
        if not math.isfinite(value):
            return 1e300, np.zeros(dim)
        return -value, -grad

    if start is None:
        psi0 = _ols_start(dm, cols)
        start_kind = "ols"
    else:
        psi0 = np.append(start.theta_array()[cols], math.log(start.sigma))
        start_kind = "given"
    perturb_rng = np.random.default_rng(0x5EED)
    starts = [psi0]
    for _ in range(n_restarts):
        starts.append(psi0 + perturb_rng.normal(0.0, 0.2, dim) * (1.0 + np.abs(psi0)))

    best = None
    endpoint_values = []
    for psi_start in starts:
        res = minimize(neg, psi_start, jac=True, method="BFGS",
                       options={"gtol": 1e-9, "maxiter": 500})
        psi, value, grad, converged, step_inf = _newton_polish(value_grad, res.x)
        endpoint_values.append(value)
        if best is None or value > best[1]:
            best = (psi, value, grad, converged, step_inf)

    psi_hat, loglik, grad, converged, _ = best
    grad_inf = float(np.max(np.abs(grad)))
    message = "ok" if converged else (
        f"optimizer stalled with gradient inf-norm {grad_inf:.3e}"
    )

    theta_full = np.zeros(6)
    theta_full[cols] = psi_hat[:-1]
    sigma_hat = math.exp(psi_hat[-1])

    # Sandwich covariance on (theta, ln sigma), then rescale the noise
    # entry to the natural sigma scale.
    info = -_fd_hessian(lambda p: value_grad(p)[1], psi_hat)
    scores = _row_scores(psi_hat, dm, cols)
    ids, inverse = np.unique(dm.cluster, return_inverse=True)
    cluster_sums = np.zeros((len(ids), dim))
    np.add.at(cluster_sums, inverse, scores)
    meat = cluster_sums.T @ cluster_sums
    if cluster_correction:
        meat *= n_clusters / (n_clusters - 1)
    try:
        bread = np.linalg.solve(info, np.eye(dim))
    except np.linalg.LinAlgError:
        bread = np.linalg.pinv(info)
        converged = False
        message = "observed information is singular"
    cov_active = bread @ meat @ bread
    cov_active = 0.5 * (cov_active + cov_active.T)

    active_full = np.append(cols, 6)
    cov = np.zeros((7, 7))
    cov[np.ix_(active_full, active_full)] = cov_active
    scale = np.ones(7)
    scale[6] = sigma_hat
    cov = cov * scale[:, None] * scale[None, :]

    return TobitFit(
        theta_hat=ThetaVector.from_arrays(theta_full, sigma_hat),
        covariance=cov,
        loglik=loglik,
        n_obs=dm.n_obs,
        n_left=dm.n_left,
        n_right=dm.n_right,
        n_clusters=n_clusters,
        converged=converged,
        support_counts=dm.support_counts,
        restart_logliks=tuple(endpoint_values),
        grad_inf_norm=grad_inf,
        message=message,
        settings={
            "start": start_kind,
            "n_restarts": n_restarts,
            "cluster_correction": cluster_correction,
            "grad_tol": GRAD_TOL,
            "step_tol": STEP_TOL,
        },
    )
