"""Request and response models for the session endpoints."""

from __future__ import annotations

from pydantic import BaseModel, Field


class CreateSessionRequest(BaseModel):
    certain_rate: bool | None = None
    certain_day: bool | None = None


class SessionCreated(BaseModel):
    session_id: str
    certain_rate: bool
    certain_day: bool


class TaskState(BaseModel):
    string: str
    completed: int
    required: int


class RevealState(BaseModel):
    selected_day: int | None = None
    selected_rate_index: int | None = None
    day_revealed_before_day2: bool


class ImplementedState(BaseModel):
    source_day: int
    rate_index: int
    rate: float
    e2: float
    e9: float


class PracticeScript(BaseModel):
    first_flip: int
    second_flip: int


class SessionState(BaseModel):
    session_id: str
    certain_rate: bool
    certain_day: bool
    protocol_day: int
    stage: str
    stage_rate_index: int | None = None
    rate_order: list[int]
    rates: list[float]
    budget: float
    delay_days: int
    allocations: dict[int, dict[int, float]]
    confirmed: dict[int, bool]
    task: TaskState | None = None
    reveal: RevealState
    implemented: ImplementedState | None = None
    practice_script: PracticeScript | None = None
    done: bool


class TaskAnswer(BaseModel):
    answer: int = Field(ge=0, le=16)


class TaskResult(BaseModel):
    correct: bool
    completed: int
    required: int
    string: str


class AllocationRequest(BaseModel):
    rate_index: int = Field(ge=0)
    # The upper bound is the configured budget, enforced by the store.
    e2: float = Field(ge=0.0)
    practice: bool = False


class AllocationResult(BaseModel):
    accepted: bool
    rate_index: int
    e2: float
    e9: float
