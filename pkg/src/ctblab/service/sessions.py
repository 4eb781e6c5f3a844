"""Server-side protocol sessions.

A session walks one subject through the three protocol days as logical
stages: practice and mandatory tasks, per-rate allocation screens, a
juxtaposed review that locks the day's choices, the day and rate
selection reveals, and the implemented work.  All randomness (treatment
assignment, the selection draw, task strings, elicitation order) comes
from a per-session substream of the server seed; clients only display
server state.

Completed sessions append their ten decisions to the export CSV in one
atomic write.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import RunConfig
from ..mechanism import (
    ALL_CELLS,
    MechanismDraw,
    TreatmentCell,
    draw_mechanism_from,
    is_incentivized,
)
from ..records import CSV_HEADER, format_record
from ..simulate import DecisionRecord

PRACTICE = "practice"
MANDATORY_TASKS = "mandatory_tasks"
ALLOCATE_SEPARATE = "allocate_separate"
ALLOCATE_JUXTAPOSED = "allocate_juxtaposed"
DAY_REVEAL = "day_reveal"
RATE_REVEAL = "rate_reveal"
IMPLEMENTED_WORK = "implemented_work"
DONE = "done"

MANDATORY_TASK_COUNT = 10
TASK_STRING_LENGTH = 16
DECISION_DAYS = (0, 2)


class SessionError(Exception):
    """Protocol violation; carries an HTTP-ish status code."""

    def __init__(self, status: int, detail: str):
        super().__init__(detail)
        self.status = status
        self.detail = detail


@dataclass(frozen=True)
class Step:
    day: int
    stage: str
    rate_pos: int | None = None


def build_steps(cell: TreatmentCell, n_rates: int) -> list[Step]:
    steps: list[Step] = []
    steps.append(Step(0, PRACTICE))
    steps.append(Step(0, MANDATORY_TASKS))
    steps.extend(Step(0, ALLOCATE_SEPARATE, pos) for pos in range(n_rates))
    steps.append(Step(0, ALLOCATE_JUXTAPOSED))

    steps.append(Step(2, PRACTICE))
    steps.append(Step(2, MANDATORY_TASKS))
    if cell.certain_day:
        # The selected day is revealed before any near-day decision.
        steps.append(Step(2, DAY_REVEAL))
    steps.extend(Step(2, ALLOCATE_SEPARATE, pos) for pos in range(n_rates))
    steps.append(Step(2, ALLOCATE_JUXTAPOSED))
    if not cell.certain_day:
        steps.append(Step(2, DAY_REVEAL))
    steps.append(Step(2, RATE_REVEAL))
    steps.append(Step(2, IMPLEMENTED_WORK))

    steps.append(Step(9, MANDATORY_TASKS))
    steps.append(Step(9, IMPLEMENTED_WORK))
    steps.append(Step(9, DONE))
    return steps


@dataclass
class TaskBlock:
    required: int
    completed: int = 0
    current_string: str = ""

    @property
    def finished(self) -> bool:
        return self.completed >= self.required


@dataclass
class Session:
    session_id: str
    index: int
    cell: TreatmentCell
    draw: MechanismDraw
    rate_order: list[int]
    steps: list[Step]
    rng: np.random.Generator
    config: RunConfig
    pointer: int = 0
    allocations: dict[int, dict[int, float]] = field(default_factory=lambda: {0: {}, 2: {}})
    confirmed: dict[int, bool] = field(default_factory=lambda: {0: False, 2: False})
    practice_allocations: dict[int, dict[int, float]] = field(
        default_factory=lambda: {0: {}, 2: {}}
    )
    task: TaskBlock | None = None
    implemented: dict | None = None
    exported: bool = False

    @property
    def step(self) -> Step:
        return self.steps[self.pointer]

    @property
    def done(self) -> bool:
        return self.step.stage == DONE

    def new_task_string(self) -> str:
        bits = self.rng.integers(0, 2, size=TASK_STRING_LENGTH)
        return "".join("1" if b else "0" for b in bits)

    def passed_stage(self, stage: str) -> bool:
        return any(s.stage == stage for s in self.steps[: self.pointer])

    def at_stage(self, stage: str) -> bool:
        return self.step.stage == stage

    def day_visible(self) -> bool:
        return self.at_stage(DAY_REVEAL) or self.passed_stage(DAY_REVEAL)

    def rate_visible(self) -> bool:
        return (
            self.cell.certain_rate
            or self.at_stage(RATE_REVEAL)
            or self.passed_stage(RATE_REVEAL)
        )

    def practice_script(self) -> dict | None:
        if self.step.stage != PRACTICE:
            return None
        present = self.step.day
        alternate = 2 if present == 0 else 0
        return {"first_flip": alternate, "second_flip": present}


class SessionStore:
    """All live sessions plus the append-only export file."""

    def __init__(self, config: RunConfig, export_path: str | os.PathLike):
        self.config = config
        self.export_path = Path(export_path)
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {}
        self._next_index = 0

    # ------------------------------------------------------------- lifecycle

    def create(self, certain_rate: bool | None, certain_day: bool | None) -> Session:
        if (certain_rate is None) != (certain_day is None):
            raise SessionError(400, "force both treatment flags or neither")
        with self._lock:
            index = self._next_index
            self._next_index += 1
        rng = np.random.default_rng(
            np.random.SeedSequence(self.config.seed, spawn_key=(index,))
        )
        if certain_rate is None:
            cell = ALL_CELLS[int(rng.integers(0, len(ALL_CELLS)))]
        else:
            cell = TreatmentCell(bool(certain_rate), bool(certain_day))
        schedule = self.config.schedule
        draw = draw_mechanism_from(rng, cell, schedule)
        order = list(range(len(schedule.rates)))
        if int(rng.integers(0, 2)):
            order.reverse()
        session = Session(
            session_id=f"s{index + 1}",
            index=index,
            cell=cell,
            draw=draw,
            rate_order=order,
            steps=build_steps(cell, len(schedule.rates)),
            rng=rng,
            config=self.config,
        )
        with self._lock:
            self._sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise SessionError(404, f"unknown session {session_id!r}")
        return session

    # ----------------------------------------------------------------- tasks

    def submit_task(self, session_id: str, answer: int) -> tuple[Session, bool]:
        session = self.get(session_id)
        if session.task is None or session.step.stage not in (
            MANDATORY_TASKS,
            IMPLEMENTED_WORK,
        ):
            raise SessionError(409, f"no task expected at stage {session.step.stage!r}")
        if session.task.finished:
            raise SessionError(409, "task block already complete")
        correct = session.task.current_string.count("0") == answer
        if correct:
            session.task.completed += 1
            if not session.task.finished:
                session.task.current_string = session.new_task_string()
        return session, correct

    # ----------------------------------------------------------- allocations

    def submit_allocation(
        self, session_id: str, rate_index: int, e2: float, practice: bool
    ) -> tuple[Session, float]:
        session = self.get(session_id)
        schedule = self.config.schedule
        if not 0 <= rate_index < len(schedule.rates):
            raise SessionError(400, f"rate_index {rate_index} outside schedule")
        if not 0.0 <= e2 <= schedule.budget:
            raise SessionError(400, f"e2 must be in [0, {schedule.budget:g}]")
        step = session.step
        if practice:
            if step.stage != PRACTICE:
                raise SessionError(409, "practice allocation outside practice round")
            session.practice_allocations[step.day][rate_index] = e2
        elif step.stage == ALLOCATE_SEPARATE:
            expected = session.rate_order[step.rate_pos]
            if rate_index != expected:
                raise SessionError(
                    409, f"this screen elicits rate index {expected}, got {rate_index}"
                )
            session.allocations[step.day][rate_index] = e2
        elif step.stage == ALLOCATE_JUXTAPOSED:
            if session.confirmed[step.day]:
                raise SessionError(409, "allocations already confirmed for this day")
            session.allocations[step.day][rate_index] = e2
        else:
            raise SessionError(409, f"no allocation expected at stage {step.stage!r}")
        e9 = (schedule.budget - e2) / schedule.rates[rate_index]
        return session, e9

    # --------------------------------------------------------------- advance

    def advance(self, session_id: str) -> Session:
        session = self.get(session_id)
        step = session.step
        schedule = self.config.schedule
        if step.stage == DONE:
            raise SessionError(409, "session already complete")
        if step.stage in (MANDATORY_TASKS, IMPLEMENTED_WORK):
            if session.task is None or not session.task.finished:
                raise SessionError(409, "task block not complete")
        if step.stage == ALLOCATE_SEPARATE:
            expected = session.rate_order[step.rate_pos]
            if expected not in session.allocations[step.day]:
                raise SessionError(409, "tentative allocation required before advancing")
        if step.stage == ALLOCATE_JUXTAPOSED:
            missing = [
                i for i in range(len(schedule.rates))
                if i not in session.allocations[step.day]
            ]
            if missing:
                raise SessionError(409, f"allocations missing for rate indexes {missing}")
            session.confirmed[step.day] = True
        if step.stage == RATE_REVEAL:
            self._compute_implemented(session)

        session.pointer += 1
        self._enter_step(session)
        if session.done and not session.exported:
            self._export(session)
        return session

    def _enter_step(self, session: Session) -> None:
        step = session.step
        if step.stage == MANDATORY_TASKS:
            session.task = TaskBlock(required=MANDATORY_TASK_COUNT)
            session.task.current_string = session.new_task_string()
        elif step.stage == IMPLEMENTED_WORK:
            implemented = session.implemented
            count = implemented["e2"] if step.day == 2 else implemented["e9"]
            session.task = TaskBlock(required=int(round(count)))
            if session.task.required > 0:
                session.task.current_string = session.new_task_string()
        else:
            session.task = None

    def _compute_implemented(self, session: Session) -> None:
        schedule = self.config.schedule
        source_day = session.draw.selected_day
        rate_index = session.draw.selected_rate_index
        e2 = session.allocations[source_day][rate_index]
        rate = schedule.rates[rate_index]
        session.implemented = {
            "source_day": source_day,
            "rate_index": rate_index,
            "rate": rate,
            "e2": e2,
            "e9": (schedule.budget - e2) / rate,
        }

    # ---------------------------------------------------------------- export

    def session_records(self, session: Session) -> list[DecisionRecord]:
        schedule = self.config.schedule
        records = []
        for day in DECISION_DAYS:
            for i, rate in enumerate(schedule.rates):
                records.append(
                    DecisionRecord(
                        subject_id=session.index,
                        certain_rate=session.cell.certain_rate,
                        certain_day=session.cell.certain_day,
                        decision_day=day,
                        rate=rate,
                        e2=session.allocations[day][i],
                        incentivized=is_incentivized(
                            session.cell, day, i, session.draw, schedule
                        ),
                    )
                )
        return records

    def _export(self, session: Session) -> None:
        records = self.session_records(session)
        chunk = "".join(format_record(r) + "\n" for r in records)
        with self._lock:
            new_file = not self.export_path.exists()
            with open(self.export_path, "a", encoding="utf-8") as handle:
                if new_file:
                    handle.write(CSV_HEADER + "\n")
                handle.write(chunk)
                handle.flush()
        session.exported = True

    def export_csv(self) -> str:
        with self._lock:
            if self.export_path.exists():
                return self.export_path.read_text(encoding="utf-8")
        return CSV_HEADER + "\n"
