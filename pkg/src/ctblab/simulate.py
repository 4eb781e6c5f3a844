"""Synthetic decision panels from the latent-index data-generating process.

Each subject's log effort ratio is the linearized-optimality mean for her
treatment cell plus Gaussian noise; the noisy latent value maps back to a
near-day effort level, censored at the allocation bounds.  Noise enters on
the latent index, matching the censored-regression likelihood, so the
estimator is consistent for the generating parameters by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .mechanism import (
    ALL_CELLS,
    MechanismDraw,
    TreatmentCell,
    draw_mechanism_from,
    is_incentivized,
    subject_rng,
)
from .model import (
    DECISION_DAYS,
    Preferences,
    RateSchedule,
    invert_log_effort_ratio,
    reduced_form_coeffs,
)

DEFAULT_SIGMA = 0.8


@dataclass(frozen=True)
class PopulationSpec:
    """Generating configuration for one synthetic panel.

    The present-bias factor may vary by treatment cell; the discount
    factor, cost convexity, and background effort are common.  sigma is
    the latent noise scale (zero allowed for the exact no-noise check).
    """

    cell_sizes: dict[str, int]
    prefs_by_cell: dict[str, Preferences]
    sigma: float = DEFAULT_SIGMA
    seed: int = 0
    schedule: RateSchedule = field(default_factory=RateSchedule)

    def __post_init__(self) -> None:
        labels = {cell.label for cell in ALL_CELLS}
        if set(self.cell_sizes) - labels or set(self.prefs_by_cell) - labels:
            raise ValueError("cell keys must be drawn from "
                             "{baseline, cd, cr, crcd}")
        if any(n < 0 for n in self.cell_sizes.values()):
            raise ValueError("cell sizes must be non-negative")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        ref = next(iter(self.prefs_by_cell.values()))
        for prefs in self.prefs_by_cell.values():
            if (prefs.delta, prefs.alpha, prefs.omega) != (ref.delta, ref.alpha, ref.omega):
                raise ValueError("delta, alpha, and omega must be common across cells")

    @classmethod
    def from_params(
        cls,
        betas: dict[str, float],
        delta: float,
        alpha: float,
        omega: float,
        cell_sizes: dict[str, int],
        sigma: float = DEFAULT_SIGMA,
        seed: int = 0,
        schedule: RateSchedule = RateSchedule(),
    ) -> "PopulationSpec":
        prefs = {
            label: Preferences(beta, delta, alpha, omega)
            for label, beta in betas.items()
        }
        return cls(dict(cell_sizes), prefs, sigma, seed, schedule)


@dataclass(frozen=True)
class DecisionRecord:
    """One allocation choice as stored in the interchange CSV."""

    subject_id: int
    certain_rate: bool
    certain_day: bool
    decision_day: int
    rate: float
    e2: float
    incentivized: bool

    @property
    def cell(self) -> TreatmentCell:
        return TreatmentCell(self.certain_rate, self.certain_day)


def simulate_subject(
    spec: PopulationSpec, cell: TreatmentCell, subject_id: int
) -> tuple[MechanismDraw, list[DecisionRecord]]:
    """Records for one subject: 2 decision days x all rates, in order.

    Uses two independent substreams per subject (mechanism draw, latent
    noise) so results do not depend on processing order.
    """
    prefs = spec.prefs_by_cell[cell.label]
    schedule = spec.schedule
    draw = draw_mechanism_from(subject_rng(spec.seed, subject_id, 0), cell, schedule)
    noise = subject_rng(spec.seed, subject_id, 1).standard_normal(
        2 * len(schedule.rates)
    )
    th_delay, th_lnrate, th_present = reduced_form_coeffs(
        prefs.beta, prefs.delta, prefs.alpha
    )
    records = []
    pos = 0
    for day in DECISION_DAYS:
        for i, rate in enumerate(schedule.rates):
            mu = th_delay * schedule.delay_days + th_lnrate * math.log(rate)
            if day == 2:
                mu += th_present
            latent = mu + spec.sigma * noise[pos]
            pos += 1
            alloc = invert_log_effort_ratio(latent, rate, prefs.omega, schedule.budget)
            records.append(
                DecisionRecord(
                    subject_id=subject_id,
                    certain_rate=cell.certain_rate,
                    certain_day=cell.certain_day,
                    decision_day=day,
                    rate=rate,
                    e2=alloc.e2,
                    incentivized=is_incentivized(cell, day, i, draw, schedule),
                )
            )
    return draw, records


def simulate_panel(spec: PopulationSpec) -> list[DecisionRecord]:
    """Full panel over all cells, subjects numbered in cell order."""
    records: list[DecisionRecord] = []
    subject_id = 0
    for cell in ALL_CELLS:
        for _ in range(spec.cell_sizes.get(cell.label, 0)):
            if cell.label not in spec.prefs_by_cell:
                raise ValueError(f"no preferences given for cell {cell.label!r}")
            _, subject_records = simulate_subject(spec, cell, subject_id)
            records.extend(subject_records)
            subject_id += 1
    return records


def filter_analysis_rows(records: list[DecisionRecord]) -> list[DecisionRecord]:
    """Drop hypothetical decisions; only implementable rows are analyzed."""
    return [r for r in records if r.incentivized]
