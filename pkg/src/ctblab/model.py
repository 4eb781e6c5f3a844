"""Structural effort-allocation model for the two-workday budget problem.

A decision-maker splits a task budget between a near workday ("day two")
and a far workday ("day nine") at a gross substitution rate R, facing the
budget constraint  e2 + R * e9 = budget.  Effort on each day costs
(e + omega)^alpha, the far day is discounted by delta per day over the
seven-day gap, and when the decision is made on the near day itself the
far-day cost is additionally discounted by the present-bias factor beta.

The optimality condition for an interior split is

    ((e2 + omega) / (e9 + omega))^(alpha - 1) = beta^[d=2] * delta^7 / R

and its log-linearization in the log effort ratio is what the censored
regression downstream estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

DEFAULT_RATES = (1.25, 0.75, 1.0, 1.5, 0.5)
DEFAULT_BUDGET = 360.0
DEFAULT_DELAY_DAYS = 7
DEFAULT_OMEGA = 10.0

DECISION_DAYS = (0, 2)

# e2 within this distance of a bound is treated as censored; avoids
# log-of-zero pathologies downstream.
BOUND_TOL = 1e-9


class Censoring(str, Enum):
    INTERIOR = "interior"
    AT_LOWER = "at_lower"
    AT_UPPER = "at_upper"


@dataclass(frozen=True)
class Preferences:
    """Discounting and effort-cost parameters of one decision-maker.

    beta   weight on future relative to present effort cost (> 0)
    delta  per-day discount factor (in (0, 1])
    alpha  effort-cost convexity; must exceed 1 for the first-order
           condition to pick out a minimum
    omega  mandatory background tasks per workday (> 0, keeps the log
           effort ratio finite at the allocation bounds)
    """

    beta: float
    delta: float
    alpha: float
    omega: float = DEFAULT_OMEGA

    def __post_init__(self) -> None:
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must be in (0, 1], got {self.delta}")
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")


@dataclass(frozen=True)
class RateSchedule:
    """The menu of substitution rates and the shared budget constants."""

    rates: tuple[float, ...] = DEFAULT_RATES
    budget: float = DEFAULT_BUDGET
    delay_days: int = DEFAULT_DELAY_DAYS

    def __post_init__(self) -> None:
        if not self.rates:
            raise ValueError("rate schedule must contain at least one rate")
        if any(not r > 0 for r in self.rates):
            raise ValueError(f"all rates must be positive, got {self.rates}")
        if not self.budget > 0:
            raise ValueError(f"budget must be positive, got {self.budget}")
        if not self.delay_days > 0:
            raise ValueError(f"delay_days must be positive, got {self.delay_days}")

    @property
    def certain_rate_index(self) -> int:
        """Index of the rate implemented for certain-rate treatment (1.25)."""
        for i, r in enumerate(self.rates):
            if math.isclose(r, 1.25, rel_tol=0.0, abs_tol=1e-12):
                return i
        raise ValueError("schedule has no 1.25 rate for certain-rate treatment")


@dataclass(frozen=True)
class Allocation:
    """One budget split: near-day effort e2, far-day effort e9."""

    e2: float
    e9: float
    censored: Censoring

    def check_budget(self, rate: float, budget: float = DEFAULT_BUDGET) -> float:
        """Residual of the budget identity e2 + rate * e9 - budget."""
        return self.e2 + rate * self.e9 - budget


def _validate_rate_omega(rate: float, omega: float) -> None:
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")


def _clamped_allocation(e2: float, rate: float, budget: float) -> Allocation:
    if e2 <= BOUND_TOL:
        return Allocation(0.0, budget / rate, Censoring.AT_LOWER)
    if e2 >= budget - BOUND_TOL:
        return Allocation(budget, 0.0, Censoring.AT_UPPER)
    return Allocation(e2, (budget - e2) / rate, Censoring.INTERIOR)


def optimal_allocation(
    prefs: Preferences,
    rate: float,
    decision_day: int,
    budget: float = DEFAULT_BUDGET,
    delay_days: int = DEFAULT_DELAY_DAYS,
) -> Allocation:
    """Cost-minimizing split of the budget for one decision.

    The present-bias factor discounts far-day cost only when the decision
    is made on the near workday (decision_day == 2); decided in advance
    (day 0), both workdays are future and beta cancels.  The unconstrained
    optimum is clamped into [0, budget] and labeled with its censoring
    status, with the far-day effort re-derived from the budget identity.
    """
    _validate_rate_omega(rate, prefs.omega)
    if decision_day not in DECISION_DAYS:
        raise ValueError(f"decision_day must be one of {DECISION_DAYS}")
    omega = prefs.omega
    discount = prefs.delta**delay_days / rate
    if decision_day == 2:
        discount *= prefs.beta
    k = discount ** (1.0 / (prefs.alpha - 1.0))
    e9 = (budget + omega - k * omega) / (k + rate)
    e2 = budget - rate * e9
    return _clamped_allocation(e2, rate, budget)


def log_effort_ratio(alloc: Allocation, omega: float) -> float:
    """ln((e2 + omega) / (e9 + omega)), the estimator's outcome variable."""
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    return math.log((alloc.e2 + omega) / (alloc.e9 + omega))


def censor_limits(
    rate: float, omega: float, budget: float = DEFAULT_BUDGET
) -> tuple[float, float]:
    """Bounds of the log effort ratio over allocations with e2 in [0, budget].

    The lower limit is attained at e2 = 0 (all effort delayed, e9 =
    budget/rate), the upper at e2 = budget.  Both move with the rate and
    the background effort, so censoring limits are observation-specific.
    """
    _validate_rate_omega(rate, omega)
    if not budget > 0:
        raise ValueError(f"budget must be positive, got {budget}")
    lower = math.log(omega / (budget / rate + omega))
    upper = math.log((budget + omega) / omega)
    return lower, upper


def invert_log_effort_ratio(
    value: float,
    rate: float,
    omega: float,
    budget: float = DEFAULT_BUDGET,
) -> Allocation:
    """Allocation whose log effort ratio equals `value`, clamped to bounds.

    Values outside the censoring limits map to the corresponding bound.
    """
    _validate_rate_omega(rate, omega)
    lower, upper = censor_limits(rate, omega, budget)
    if value <= lower:
        return Allocation(0.0, budget / rate, Censoring.AT_LOWER)
    if value >= upper:
        return Allocation(budget, 0.0, Censoring.AT_UPPER)
    x = math.exp(value)
    e2 = (x * (budget / rate + omega) - omega) / (1.0 + x / rate)
    return _clamped_allocation(e2, rate, budget)


def effort_share(alloc: Allocation, budget: float = DEFAULT_BUDGET) -> float:
    """Fraction of the budget allocated to the near workday."""
    if not budget > 0:
        raise ValueError(f"budget must be positive, got {budget}")
    return alloc.e2 / budget


def reduced_form_coeffs(
    beta: float, delta: float, alpha: float
) -> tuple[float, float, float]:
    """Linearized-optimality coefficients (theta_delay, theta_lnrate, theta_present).

    The interior optimum satisfies
        E = theta_delay * delay_days + theta_lnrate * ln(rate)
            + theta_present * [decided on the near day]
    with theta_delay = ln(delta)/(alpha-1), theta_lnrate = -1/(alpha-1),
    theta_present = ln(beta)/(alpha-1).
    """
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    scale = alpha - 1.0
    return math.log(delta) / scale, -1.0 / scale, math.log(beta) / scale
