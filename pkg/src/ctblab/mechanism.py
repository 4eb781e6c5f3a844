"""Randomized implementation mechanism of the experiment.

A 2x2 between-subject design crosses two certainty treatments: Certain
Rate fixes the implemented rate at 1.25 (all other rates become
hypothetical), and Certain Day reveals the randomly selected decision day
before the near-day decisions are made (so half of those subjects learn
their near-day decisions are hypothetical).  Decisions that can never be
implemented are excluded from analysis.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import DECISION_DAYS, RateSchedule


@dataclass(frozen=True)
class TreatmentCell:
    certain_rate: bool
    certain_day: bool

    @property
    def label(self) -> str:
        return {
            (False, False): "baseline",
            (False, True): "cd",
            (True, False): "cr",
            (True, True): "crcd",
        }[(self.certain_rate, self.certain_day)]

    @classmethod
    def from_label(cls, label: str) -> "TreatmentCell":
        for cell in ALL_CELLS:
            if cell.label == label:
                return cell
        raise ValueError(f"unknown treatment cell {label!r}")


# Canonical enumeration order used for subject-id assignment.
ALL_CELLS = (
    TreatmentCell(False, False),
    TreatmentCell(False, True),
    TreatmentCell(True, False),
    TreatmentCell(True, True),
)


@dataclass(frozen=True)
class MechanismDraw:
    """One subject's realized randomization.

    selected_day is drawn by a fair coin over {0, 2}; the rate index is
    uniform over the schedule unless the cell has Certain Rate, in which
    case it is pinned to the 1.25 rate.  The day draw is revealed before
    the near-day decisions exactly for Certain Day subjects.
    """

    selected_day: int
    selected_rate_index: int
    day_revealed_before_day2: bool


def subject_rng(master_seed: int, subject_id: int, stream: int = 0) -> np.random.Generator:
    """Independent substream for one subject, stable across subjects.

    Substreams are keyed by (subject_id, stream) so subjects can be
    processed in any order, or in parallel, with identical results.
    """
    return np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(subject_id, stream))
    )


def draw_mechanism_from(
    rng: np.random.Generator,
    cell: TreatmentCell,
    schedule: RateSchedule = RateSchedule(),
) -> MechanismDraw:
    """Draw day and rate selection from an existing generator."""
    selected_day = int(rng.integers(0, 2)) * 2
    if cell.certain_rate:
        rate_index = schedule.certain_rate_index
    else:
        rate_index = int(rng.integers(0, len(schedule.rates)))
    return MechanismDraw(selected_day, rate_index, cell.certain_day)


def draw_mechanism(
    cell: TreatmentCell,
    rng_seed: int,
    schedule: RateSchedule = RateSchedule(),
) -> MechanismDraw:
    """Deterministic mechanism draw for a given seed."""
    return draw_mechanism_from(np.random.default_rng(rng_seed), cell, schedule)


def implementation_probability(cell: TreatmentCell, decision_day: int) -> Fraction:
    """Probability that the 1.25-rate decision made on `decision_day` is
    implemented, as known to the subject at decision time.

    On day 0 the day selection is unresolved for everyone; on day 2 it is
    already resolved for Certain Day subjects, so their (real) near-day
    decision faces no day risk.  Rate risk is absent under Certain Rate.
    """
    if decision_day not in DECISION_DAYS:
        raise ValueError(f"decision_day must be one of {DECISION_DAYS}")
    rate_factor = Fraction(1) if cell.certain_rate else Fraction(1, 5)
    if cell.certain_day and decision_day == 2:
        day_factor = Fraction(1)
    else:
        day_factor = Fraction(1, 2)
    return rate_factor * day_factor


def is_incentivized(
    cell: TreatmentCell,
    decision_day: int,
    rate_index: int,
    draw: MechanismDraw,
    schedule: RateSchedule = RateSchedule(),
) -> bool:
    """Whether the decision at (decision_day, rate_index) can still be
    implemented given the subject's draw.

    False for non-1.25 rates under Certain Rate, and for near-day
    decisions of Certain Day subjects whose revealed draw selected day 0.
    """
    if decision_day not in DECISION_DAYS:
        raise ValueError(f"decision_day must be one of {DECISION_DAYS}")
    if not 0 <= rate_index < len(schedule.rates):
        raise ValueError(f"rate_index {rate_index} outside schedule")
    if cell.certain_rate and rate_index != schedule.certain_rate_index:
        return False
    if cell.certain_day and decision_day == 2 and draw.selected_day == 0:
        return False
    return True


def expected_analysis_rows(cell: TreatmentCell, draw: MechanismDraw,
                           schedule: RateSchedule = RateSchedule()) -> int:
    """Number of incentivized decisions a subject contributes given a draw."""
    return sum(
        is_incentivized(cell, day, i, draw, schedule)
        for day in DECISION_DAYS
        for i in range(len(schedule.rates))
    )
