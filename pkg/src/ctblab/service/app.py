"""FastAPI application wrapping the session store."""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from ..config import RunConfig
from .schemas import (
    AllocationRequest,
    AllocationResult,
    CreateSessionRequest,
    ImplementedState,
    PracticeScript,
    RevealState,
    SessionCreated,
    SessionState,
    TaskAnswer,
    TaskResult,
    TaskState,
)
from .sessions import Session, SessionError, SessionStore


def session_state(session: Session, config: RunConfig) -> SessionState:
    step = session.step
    schedule = config.schedule
    task = None
    if session.task is not None and session.task.required > 0:
        task = TaskState(
            string=session.task.current_string,
            completed=session.task.completed,
            required=session.task.required,
        )
    reveal = RevealState(
        selected_day=session.draw.selected_day if session.day_visible() else None,
        selected_rate_index=(
            session.draw.selected_rate_index if session.rate_visible() else None
        ),
        day_revealed_before_day2=session.draw.day_revealed_before_day2,
    )
    implemented = None
    if session.implemented is not None:
        implemented = ImplementedState(**session.implemented)
    script = session.practice_script()
    return SessionState(
        session_id=session.session_id,
        certain_rate=session.cell.certain_rate,
        certain_day=session.cell.certain_day,
        protocol_day=step.day,
        stage=step.stage,
        stage_rate_index=(
            session.rate_order[step.rate_pos] if step.rate_pos is not None else None
        ),
        rate_order=list(session.rate_order),
        rates=list(schedule.rates),
        budget=schedule.budget,
        delay_days=schedule.delay_days,
        allocations={day: dict(values) for day, values in session.allocations.items()},
        confirmed=dict(session.confirmed),
        task=task,
        reveal=reveal,
        implemented=implemented,
        practice_script=PracticeScript(**script) if script else None,
        done=session.done,
    )


def create_app(
    config: RunConfig,
    export_path: str = "sessions.csv",
    static_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="ctblab session service")
    store = SessionStore(config, export_path)
    app.state.store = store

    @app.exception_handler(SessionError)
    async def _session_error(_, exc: SessionError):
        return JSONResponse(status_code=exc.status, content={"detail": exc.detail})

    @app.post("/api/session", response_model=SessionCreated)
    def create_session(body: CreateSessionRequest | None = None):
        body = body or CreateSessionRequest()
        session = store.create(body.certain_rate, body.certain_day)
        return SessionCreated(
            session_id=session.session_id,
            certain_rate=session.cell.certain_rate,
            certain_day=session.cell.certain_day,
        )

    @app.get("/api/session/{session_id}", response_model=SessionState)
    def get_session(session_id: str):
        return session_state(store.get(session_id), config)

    @app.post("/api/session/{session_id}/task", response_model=TaskResult)
    def submit_task(session_id: str, body: TaskAnswer):
        session, correct = store.submit_task(session_id, body.answer)
        return TaskResult(
            correct=correct,
            completed=session.task.completed,
            required=session.task.required,
            string=session.task.current_string,
        )

    @app.post("/api/session/{session_id}/allocation", response_model=AllocationResult)
    def submit_allocation(session_id: str, body: AllocationRequest):
        _, e9 = store.submit_allocation(
            session_id, body.rate_index, body.e2, body.practice
        )
        return AllocationResult(
            accepted=True, rate_index=body.rate_index, e2=body.e2, e9=e9
        )

    @app.post("/api/session/{session_id}/advance", response_model=SessionState)
    def advance(session_id: str):
        return session_state(store.advance(session_id), config)

    @app.get("/api/export")
    def export():
        return Response(content=store.export_csv(), media_type="text/csv")

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
