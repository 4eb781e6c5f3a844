import pytest
from fastapi.testclient import TestClient

from ctblab.config import RunConfig
from ctblab.records import records_from_csv
from ctblab.service.app import create_app
from ctblab.simulate import filter_analysis_rows

RATES = (1.25, 0.75, 1.0, 1.5, 0.5)


@pytest.fixture()
def client(tmp_path):
    config = RunConfig(seed=2024)
    app = create_app(config, export_path=tmp_path / "sessions.csv")
    with TestClient(app) as client:
        yield client


def create_session(client, certain_rate=False, certain_day=False):
    response = client.post(
        "/api/session",
        json={"certain_rate": certain_rate, "certain_day": certain_day},
    )
    assert response.status_code == 200, response.text
    return response.json()


def state_of(client, session_id):
    response = client.get(f"/api/session/{session_id}")
    assert response.status_code == 200, response.text
    return response.json()


def advance(client, session_id, expect=200):
    response = client.post(f"/api/session/{session_id}/advance")
    assert response.status_code == expect, response.text
    return response.json()


def grind_tasks(client, session_id):
    state = state_of(client, session_id)
    task = state["task"]
    while task and task["completed"] < task["required"]:
        answer = task["string"].count("0")
        response = client.post(
            f"/api/session/{session_id}/task", json={"answer": answer}
        )
        assert response.status_code == 200, response.text
        body = response.json()
        assert body["correct"] is True
        task = {
            "string": body["string"],
            "completed": body["completed"],
            "required": body["required"],
        }


def post_allocation(client, session_id, rate_index, e2, practice=False, expect=200):
    response = client.post(
        f"/api/session/{session_id}/allocation",
        json={"rate_index": rate_index, "e2": e2, "practice": practice},
    )
    assert response.status_code == expect, response.text
    return response.json()


def play_decision_day(client, session_id, chooser):
    state = state_of(client, session_id)
    day = state["protocol_day"]
    assert state["stage"] == "practice"
    assert state["practice_script"]["second_flip"] == day
    post_allocation(client, session_id, 0, 100.0, practice=True)
    state = advance(client, session_id)

    assert state["stage"] == "mandatory_tasks"
    assert state["task"]["required"] == 10
    grind_tasks(client, session_id)
    state = advance(client, session_id)

    if state["stage"] == "day_reveal":
        assert state["reveal"]["selected_day"] in (0, 2)
        state = advance(client, session_id)

    for _ in range(5):
        assert state["stage"] == "allocate_separate"
        rate_index = state["stage_rate_index"]
        post_allocation(client, session_id, rate_index, chooser(day, rate_index))
        state = advance(client, session_id)

    assert state["stage"] == "allocate_juxtaposed"
    return state


def complete_session(client, session_id, chooser):
    """Play a full protocol: day 0, day 2, day 9. Returns final state."""
    state = play_decision_day(client, session_id, chooser)
    state = advance(client, session_id)  # confirm juxtaposed day 0

    state = play_decision_day(client, session_id, chooser)
    # small juxtaposed adjustment on day 2 before confirming
    post_allocation(client, session_id, 0, chooser(2, 0))
    state = advance(client, session_id)
    if state["stage"] == "day_reveal":
        state = advance(client, session_id)
    assert state["stage"] == "rate_reveal"
    assert state["reveal"]["selected_rate_index"] is not None
    state = advance(client, session_id)

    assert state["stage"] == "implemented_work"
    implemented = state["implemented"]
    assert implemented["e2"] == chooser(implemented["source_day"], implemented["rate_index"])
    grind_tasks(client, session_id)
    state = advance(client, session_id)

    assert state["protocol_day"] == 9
    assert state["stage"] == "mandatory_tasks"
    grind_tasks(client, session_id)
    state = advance(client, session_id)
    assert state["stage"] == "implemented_work"
    grind_tasks(client, session_id)
    state = advance(client, session_id)
    assert state["stage"] == "done"
    assert state["done"] is True
    return state


def simple_chooser(day, rate_index):
    return float(40 + 20 * rate_index + (30 if day == 2 else 0))


def test_create_returns_id_and_cell(client):
    created = create_session(client, certain_rate=True, certain_day=False)
    assert created["session_id"] == "s1"
    assert created["certain_rate"] is True
    assert created["certain_day"] is False


def test_create_without_body_assigns_cell(client):
    response = client.post("/api/session")
    assert response.status_code == 200
    body = response.json()
    assert body["certain_rate"] in (True, False)


def test_create_with_partial_flags_rejected(client):
    response = client.post("/api/session", json={"certain_rate": True})
    assert response.status_code == 400


def test_unknown_session_404(client):
    assert client.get("/api/session/nope").status_code == 404
    assert client.post("/api/session/nope/advance").status_code == 404


def test_task_flow_rejects_wrong_answers(client):
    created = create_session(client)
    sid = created["session_id"]
    advance(client, sid)  # practice -> mandatory tasks
    state = state_of(client, sid)
    string = state["task"]["string"]
    zeros = string.count("0")
    wrong = (zeros + 1) % 17
    response = client.post(f"/api/session/{sid}/task", json={"answer": wrong})
    assert response.status_code == 200
    body = response.json()
    assert body["correct"] is False
    assert body["completed"] == 0
    assert body["string"] == string  # must remedy the same task
    response = client.post(f"/api/session/{sid}/task", json={"answer": zeros})
    assert response.json()["correct"] is True


def test_task_validation_accepts_only_true_zero_count(client):
    created = create_session(client)
    sid = created["session_id"]
    advance(client, sid)
    state = state_of(client, sid)
    string = state["task"]["string"]
    zeros = string.count("0")
    for answer in range(0, 17):
        if answer == zeros:
            continue
        body = client.post(f"/api/session/{sid}/task", json={"answer": answer}).json()
        assert body["correct"] is False
    assert client.post(
        f"/api/session/{sid}/task", json={"answer": zeros}
    ).json()["correct"]


def test_advance_blocked_until_tasks_done(client):
    created = create_session(client)
    sid = created["session_id"]
    advance(client, sid)  # into mandatory tasks
    advance(client, sid, expect=409)


def test_allocation_requires_matching_screen(client):
    created = create_session(client)
    sid = created["session_id"]
    advance(client, sid)
    grind_tasks(client, sid)
    state = advance(client, sid)
    assert state["stage"] == "allocate_separate"
    expected = state["stage_rate_index"]
    other = next(i for i in range(5) if i != expected)
    post_allocation(client, sid, other, 100.0, expect=409)
    post_allocation(client, sid, expected, 100.0)


def test_out_of_range_effort_rejected_and_state_unchanged(client):
    created = create_session(client)
    sid = created["session_id"]
    advance(client, sid)
    grind_tasks(client, sid)
    state = advance(client, sid)
    rate_index = state["stage_rate_index"]
    post_allocation(client, sid, rate_index, 400.0, expect=400)
    post_allocation(client, sid, rate_index, -1.0, expect=422)
    assert state_of(client, sid)["allocations"]["0"] == {}
    advance(client, sid, expect=409)


def test_allocation_response_reports_budget_identity(client):
    created = create_session(client)
    sid = created["session_id"]
    advance(client, sid)
    grind_tasks(client, sid)
    state = advance(client, sid)
    rate_index = state["stage_rate_index"]
    body = post_allocation(client, sid, rate_index, 360.0)
    assert body["e9"] == pytest.approx(0.0)
    body = post_allocation(client, sid, rate_index, 0.0)
    assert body["e9"] == pytest.approx(360.0 / RATES[rate_index])


def test_day_not_revealed_before_reveal_stage(client):
    created = create_session(client, certain_rate=False, certain_day=False)
    sid = created["session_id"]
    state = state_of(client, sid)
    assert state["reveal"]["selected_day"] is None
    assert state["reveal"]["selected_rate_index"] is None
    assert state["reveal"]["day_revealed_before_day2"] is False


def test_certain_rate_session_shows_pinned_rate_immediately(client):
    created = create_session(client, certain_rate=True, certain_day=False)
    state = state_of(client, created["session_id"])
    assert state["reveal"]["selected_rate_index"] == 0
    assert state["rates"][0] == 1.25


def test_certain_day_reveals_day_before_day2_allocations(client):
    created = create_session(client, certain_rate=False, certain_day=True)
    sid = created["session_id"]
    chooser = simple_chooser
    play_decision_day(client, sid, chooser)
    state = advance(client, sid)  # confirm day-0 juxtaposed
    assert state["protocol_day"] == 2
    assert state["stage"] == "practice"
    state = advance(client, sid)
    grind_tasks(client, sid)
    state = advance(client, sid)
    assert state["stage"] == "day_reveal"
    assert state["reveal"]["selected_day"] in (0, 2)
    assert state["reveal"]["day_revealed_before_day2"] is True


def test_juxtaposed_edits_overwrite_then_lock(client):
    created = create_session(client)
    sid = created["session_id"]
    state = play_decision_day(client, sid, simple_chooser)
    assert state["stage"] == "allocate_juxtaposed"
    post_allocation(client, sid, 2, 222.0)
    state = advance(client, sid)  # confirm
    post_allocation(client, sid, 2, 5.0, expect=409)
    assert state_of(client, sid)["allocations"]["0"]["2"] == 222.0


def test_full_protocol_exports_confirmed_allocations(client):
    created = create_session(client, certain_rate=False, certain_day=False)
    sid = created["session_id"]
    complete_session(client, sid, simple_chooser)

    response = client.get("/api/export")
    assert response.status_code == 200
    records = records_from_csv(response.text)
    assert len(records) == 10
    for record in records:
        assert record.e2 == simple_chooser(record.decision_day, RATES.index(record.rate))
        assert record.incentivized  # baseline: every decision implementable
    assert len(filter_analysis_rows(records)) == 10


def test_sessions_accumulate_in_export(client):
    for _ in range(2):
        created = create_session(client)
        complete_session(client, created["session_id"], simple_chooser)
    records = records_from_csv(client.get("/api/export").text)
    assert len(records) == 20
    assert {r.subject_id for r in records} == {0, 1}


def test_export_empty_is_header_only(client):
    response = client.get("/api/export")
    assert response.text.strip() == (
        "subject_id,certain_rate,certain_day,decision_day,rate,e2,incentivized"
    )


def test_advance_after_done_is_conflict(client):
    created = create_session(client)
    sid = created["session_id"]
    complete_session(client, sid, simple_chooser)
    advance(client, sid, expect=409)


def test_reveal_idempotent_across_reloads(client):
    created = create_session(client, certain_rate=False, certain_day=True)
    sid = created["session_id"]
    play_decision_day(client, sid, simple_chooser)
    advance(client, sid)
    state = play_decision_day(client, sid, simple_chooser)
    # day_reveal already passed for certain-day sessions; repeated GETs
    # redisplay the same draw.
    first = state_of(client, sid)["reveal"]["selected_day"]
    for _ in range(3):
        assert state_of(client, sid)["reveal"]["selected_day"] == first
