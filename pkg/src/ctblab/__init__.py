"""Simulation, censored-regression estimation, and session serving for a
two-workday effort-allocation experiment."""

from .model import (
    Allocation,
    Censoring,
    Preferences,
    RateSchedule,
    censor_limits,
    effort_share,
    invert_log_effort_ratio,
    log_effort_ratio,
    optimal_allocation,
)
from .mechanism import (
    ALL_CELLS,
    MechanismDraw,
    TreatmentCell,
    draw_mechanism,
    implementation_probability,
    is_incentivized,
)
from .simulate import (
    DecisionRecord,
    PopulationSpec,
    filter_analysis_rows,
    simulate_panel,
)
from .tobit import (
    EstimationError,
    ThetaVector,
    TobitFit,
    build_design_row,
    fit_tobit,
    tobit_loglik,
)
from .recovery import (
    RecoveredParams,
    WaldTest,
    hypothesis_battery,
    recover,
    recover_from_fit,
    theta_from_structural,
    wald_test_pair,
    wald_test_value,
)
from .config import RunConfig

__all__ = [
    "ALL_CELLS",
    "Allocation",
    "Censoring",
    "DecisionRecord",
    "EstimationError",
    "MechanismDraw",
    "PopulationSpec",
    "Preferences",
    "RateSchedule",
    "RecoveredParams",
    "RunConfig",
    "ThetaVector",
    "TobitFit",
    "TreatmentCell",
    "WaldTest",
    "build_design_row",
    "censor_limits",
    "draw_mechanism",
    "effort_share",
    "filter_analysis_rows",
    "fit_tobit",
    "hypothesis_battery",
    "implementation_probability",
    "invert_log_effort_ratio",
    "is_incentivized",
    "log_effort_ratio",
    "optimal_allocation",
    "recover",
    "recover_from_fit",
    "simulate_panel",
    "theta_from_structural",
    "tobit_loglik",
    "wald_test_pair",
    "wald_test_value",
]

__version__ = "0.1.0"
