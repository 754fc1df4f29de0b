from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from floodsense.aggregate import aggregate_region
from floodsense.service import create_app
from floodsense.store import read_events
from conftest import (
    FakeClock,
    make_report,
    make_server,
    max_options,
    middle_options,
    register_users,
)

ADMIN = {"Authorization": "Bearer test-admin"}


@pytest.fixture
def clock():
    return FakeClock(0.0)


@pytest.fixture
def server(tmp_path, clock):
    server = make_server(tmp_path, clock=clock)
    yield server
    server.close()


@pytest.fixture
def client(server):
    return TestClient(create_app(server))


def profile(user_id="u1", **extra):
    return {"user_id": user_id, "identity": f"citizen {user_id}", **extra}


def log_lines(server):
    return server.config.log_path and open(server.config.log_path).read().splitlines()


# --- user registration -------------------------------------------------------


def test_register_valid_profile(client):
    response = client.post("/users", json=profile())
    assert response.status_code == 201
    assert response.json() == {"user_id": "u1"}


def test_register_duplicate_id_conflict(client):
    client.post("/users", json=profile())
    assert client.post("/users", json=profile()).status_code == 409


def test_register_missing_identity_unprocessable(client):
    assert client.post("/users", json={"user_id": "u9"}).status_code == 422


# --- report submission -------------------------------------------------------


def submit(client, schema, user_id="u1", **kwargs):
    return client.post("/reports", json=make_report(schema, user_id, **kwargs).to_dict())


def test_submit_valid_report(client, schema):
    client.post("/users", json=profile())
    response = submit(client, schema, option=2, ts=100.0)
    assert response.status_code == 202
    body = response.json()
    assert body["region"] == 0 and body["period"] == 0 and body["late"] is False


def test_submit_unknown_user(client, schema):
    assert submit(client, schema, user_id="ghost", option=1).status_code == 404


def test_submit_invalid_report_lists_issues(client, schema):
    client.post("/users", json=profile())
    response = submit(client, schema, option=1, options={14: 9})
    assert response.status_code == 422
    assert response.json()["issues"][0]["code"] == "option_out_of_range"


def test_submit_outside_disaster_area(client, schema):
    client.post("/users", json=profile())
    assert submit(client, schema, option=1, lat=50.0, lon=50.0).status_code == 400


def test_submit_before_epoch(client, schema, tmp_path, clock):
    server = make_server(tmp_path, clock=clock, log_name="e2.jsonl", epoch_origin=1000.0)
    client = TestClient(create_app(server))
    client.post("/users", json=profile())
    assert submit(client, schema, option=1, ts=10.0).status_code == 400


def test_malformed_report_body(client):
    assert client.post("/reports", json={"user_id": "u1"}).status_code == 422


def test_resubmission_returns_original_ack(client, schema, server):
    client.post("/users", json=profile())
    first = submit(client, schema, option=2, report_id="r1", ts=50.0)
    lines_before = len(log_lines(server))
    again = submit(client, schema, option=2, report_id="r1", ts=50.0)
    assert first.status_code == 202
    assert again.status_code == 200
    assert again.json() == first.json()
    assert len(log_lines(server)) == lines_before  # no duplicate event


def test_same_id_different_content_conflict(client, schema):
    client.post("/users", json=profile())
    submit(client, schema, option=2, report_id="r1", ts=50.0)
    assert submit(client, schema, option=1, report_id="r1", ts=50.0).status_code == 409


# --- detection endpoint ------------------------------------------------------


def seed_window(client, schema, users, deviant=None, ts=100.0):
    honest, extreme = middle_options(schema), max_options(schema)
    for uid in users:
        client.post("/users", json=profile(uid))
        options = extreme if uid == deviant else honest
        response = client.post(
            "/reports",
            json=make_report(schema, uid, options=options, report_id=f"{uid}-r", ts=ts).to_dict(),
        )
        assert response.status_code == 202


def test_detect_requires_admin_token(client):
    assert client.post("/admin/detect?region=0&period=0").status_code == 401
    bad = {"Authorization": "Bearer wrong"}
    assert client.post("/admin/detect?region=0&period=0", headers=bad).status_code == 401


def test_detect_unknown_region(client, clock):
    clock.advance(4000)
    assert client.post("/admin/detect?region=9&period=0", headers=ADMIN).status_code == 404


def test_detect_open_period_conflict_and_force(client, schema, clock):
    seed_window(client, schema, [f"u{i}" for i in range(5)])
    response = client.post("/admin/detect?region=0&period=0", headers=ADMIN)
    assert response.status_code == 409
    forced = client.post("/admin/detect?region=0&period=0&force=true", headers=ADMIN)
    assert forced.status_code == 200
    assert forced.json()["executed"] is True


def test_detect_gated_window_summary(client, schema, clock, server):
    seed_window(client, schema, [f"u{i}" for i in range(4)])
    clock.advance(3700)
    response = client.post("/admin/detect?region=0&period=0", headers=ADMIN)
    assert response.status_code == 200
    body = response.json()
    assert body["executed"] is False
    assert body["participants"] == 4
    assert body["assessments"] == []
    # users in a gated window stay unvetted for aggregation
    aggregate = client.get("/aggregates/0").json()
    assert aggregate["unvetted_users"] == 4


def test_detect_is_idempotent(client, schema, clock, server):
    seed_window(client, schema, [f"u{i}" for i in range(5)])
    clock.advance(3700)
    first = client.post("/admin/detect?region=0&period=0", headers=ADMIN)
    lines = len(log_lines(server))
    second = client.post("/admin/detect?region=0&period=0", headers=ADMIN)
    assert second.json() == first.json()
    assert len(log_lines(server)) == lines


def test_detect_empty_window_appends_nothing(client, clock, server):
    clock.advance(3700)
    response = client.post("/admin/detect?region=1&period=0", headers=ADMIN)
    assert response.status_code == 200
    assert response.json()["participants"] == 0
    assert len(log_lines(server)) == 1  # just the header


def test_detection_blacklists_and_purges(client, schema, clock, server):
    users = [f"u{i}" for i in range(9)] + ["deviant"]
    seed_window(client, schema, users, deviant="deviant")
    clock.advance(3700)
    summary = client.post("/admin/detect?region=0&period=0", headers=ADMIN).json()
    verdicts = {a["user_id"]: a["verdict"] for a in summary["assessments"]}
    assert verdicts["deviant"] == "Malicious"
    assert sum(1 for v in verdicts.values() if v == "NonMalicious") == 9

    status = client.get("/users/deviant/status").json()
    assert status["status"] == "Blacklisted"
    assert status["blacklisted_window"] == {"region": 0, "period": 0}

    # further submissions are refused and leave no trace in the log
    lines = len(log_lines(server))
    response = client.post(
        "/reports",
        json=make_report(
            schema, "deviant", options=middle_options(schema), report_id="late-r", ts=4000.0
        ).to_dict(),
    )
    assert response.status_code == 403
    assert len(log_lines(server)) == lines


def test_late_report_rolls_to_next_period(client, schema, clock):
    seed_window(client, schema, [f"u{i}" for i in range(5)])
    clock.advance(3700)
    client.post("/admin/detect?region=0&period=0", headers=ADMIN)
    response = client.post(
        "/reports",
        json=make_report(
            schema, "u0", options=middle_options(schema), report_id="late-r", ts=200.0
        ).to_dict(),
    )
    assert response.status_code == 202
    body = response.json()
    assert body["period"] == 1 and body["late"] is True


# --- aggregates and status ---------------------------------------------------


def test_fresh_region_aggregate_is_empty(client):
    response = client.get("/aggregates/1")
    assert response.status_code == 200
    body = response.json()
    assert body["unvetted_users"] == 0
    assert all(q["respondents"] == 0 for q in body["questions"])


def test_aggregate_unknown_region(client):
    assert client.get("/aggregates/99").status_code == 404


def test_aggregate_matches_library_oracle(client, schema, clock, server):
    users = [f"u{i}" for i in range(9)] + ["deviant"]
    seed_window(client, schema, users, deviant="deviant")
    clock.advance(3700)
    client.post("/admin/detect?region=0&period=0", headers=ADMIN)
    via_http = client.get("/aggregates/0").json()
    via_library = aggregate_region(server.ledger, 0).to_dict()
    assert via_http == via_library
    top = {q["question_id"]: q for q in via_http["questions"]}
    assert top[1]["respondents"] == 9  # deviant's answers are gone


def test_aggregate_period_range_params(client, schema, clock):
    seed_window(client, schema, [f"u{i}" for i in range(5)], ts=100.0)
    for uid in [f"u{i}" for i in range(5)]:
        response = client.post(
            "/reports",
            json=make_report(
                schema, uid, options=middle_options(schema), report_id=f"{uid}-p1", ts=3700.0
            ).to_dict(),
        )
        assert response.status_code == 202
    clock.advance(2 * 3600 + 120)
    for period in (0, 1):
        client.post(f"/admin/detect?region=0&period={period}", headers=ADMIN)
    full = client.get("/aggregates/0").json()
    only_p1 = client.get("/aggregates/0", params={"from": 1, "to": 1}).json()
    assert full["questions"][0]["respondents"] == 10
    assert only_p1["questions"][0]["respondents"] == 5
    assert (only_p1["from_period"], only_p1["to_period"]) == (1, 1)


def test_user_status_lifecycle(client, schema):
    client.post("/users", json=profile("fresh"))
    status = client.get("/users/fresh/status").json()
    assert status == {
        "user_id": "fresh",
        "status": "Active",
        "assessments": [],
        "blacklisted_window": None,
    }
    assert client.get("/users/ghost/status").status_code == 404


# --- timer equivalence -------------------------------------------------------


def drive_submissions(server, schema, clock):
    register_users(server, [f"u{i}" for i in range(9)] + ["deviant"])
    honest, extreme = middle_options(schema), max_options(schema)
    # period 0: full deviant window in region 0, small window in region 1
    for uid in [f"u{i}" for i in range(9)] + ["deviant"]:
        options = extreme if uid == "deviant" else honest
        server.submit_report(
            make_report(schema, uid, options=options, report_id=f"{uid}-p0", ts=100.0)
        )
    for uid in ["u0", "u1"]:
        server.submit_report(
            make_report(
                schema, uid, options=honest, report_id=f"{uid}-p0-r1", ts=120.0, lat=1.5, lon=1.5
            )
        )
    # period 1: honest survivors report again
    for uid in [f"u{i}" for i in range(6)]:
        server.submit_report(
            make_report(schema, uid, options=honest, report_id=f"{uid}-p1", ts=3700.0)
        )


def event_kinds_and_bodies(path):
    return [(e.kind, json.dumps(e.body, sort_keys=True)) for e in read_events(path)]


def test_timer_equals_manual_detection(tmp_path, schema):
    clock_a = FakeClock(0.0)
    timer_server = make_server(tmp_path, clock=clock_a, log_name="timer.jsonl")
    drive_submissions(timer_server, schema, clock_a)
    clock_a.advance(2 * 3600 + 120)
    timer_server.detect_due()

    clock_b = FakeClock(0.0)
    manual_server = make_server(tmp_path, clock=clock_b, log_name="manual.jsonl")
    drive_submissions(manual_server, schema, clock_b)
    clock_b.advance(2 * 3600 + 120)
    for period in (0, 1):
        for region in range(manual_server.config.grid.region_count):
            manual_server.detect(region, period)

    timer_events = event_kinds_and_bodies(timer_server.config.log_path)
    manual_events = event_kinds_and_bodies(manual_server.config.log_path)
    assert timer_events == manual_events
    timer_server.close()
    manual_server.close()


def test_iterative_detection_config_plumbs_through(tmp_path, clock):
    # single-question schema where one extreme value shadows a second one
    import json as _json

    from floodsense.sim import uniform_schema

    schema_path = tmp_path / "only-q.json"
    schema_path.write_text(_json.dumps(uniform_schema(1, 10).to_dict()))
    flagged = {}
    for name, iterative in (("single", False), ("fixpoint", True)):
        server = make_server(
            tmp_path,
            clock=clock,
            log_name=f"{name}.jsonl",
            schema_path=str(schema_path),
            iterative_detection=iterative,
        )
        values = [5] * 8 + [8, 10]
        register_users(server, [f"u{i}" for i in range(10)])
        for i, value in enumerate(values):
            server.submit_report(
                make_report(
                    server.schema, f"u{i}", options={1: value}, report_id=f"u{i}-r", ts=10.0
                )
            )
        summary = server.detect(0, 0, force=True)
        flagged[name] = {
            a["user_id"] for a in summary["assessments"] if a["verdict"] == "Malicious"
        }
        server.close()
    assert flagged["single"] == {"u9"}
    assert flagged["fixpoint"] == {"u8", "u9"}


def test_config_env_overrides(tmp_path):
    from floodsense.service import ConfigError, ServiceConfig

    config_file = tmp_path / "config.json"
    config_file.write_text(
        json.dumps({"log_path": "from-file.jsonl", "addr": "0.0.0.0:1", "period_seconds": 60})
    )
    env = {
        "FLOODSENSE_ADDR": "127.0.0.1:9101",
        "FLOODSENSE_LOG_PATH": str(tmp_path / "from-env.jsonl"),
        "FLOODSENSE_GRID": "0,1,0,1,3,3",
        "FLOODSENSE_PERIOD_SECONDS": "120",
        "FLOODSENSE_SCHEMA_PATH": "",
        "FLOODSENSE_ADMIN_TOKEN": "sekrit",
    }
    config = ServiceConfig.from_file(config_file, env=env)
    assert config.addr == "127.0.0.1:9101" and config.port == 9101
    assert config.log_path.endswith("from-env.jsonl")
    assert config.grid.region_count == 9
    assert config.period_seconds == 120
    assert config.admin_token == "sekrit"

    with pytest.raises(ConfigError):
        ServiceConfig.from_file(None, env={})
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"log_path": "x", "grid": "1,2,3"}))
    with pytest.raises(ConfigError):
        ServiceConfig.from_file(bad, env={})
    obj = tmp_path / "obj.json"
    obj.write_text(
        json.dumps(
            {
                "log_path": "x",
                "grid": {"lat_min": 0, "lat_max": 2, "lon_min": 0, "lon_max": 2, "rows": 2, "cols": 2},
            }
        )
    )
    assert ServiceConfig.from_file(obj, env={}).grid.region_count == 4


def test_detect_due_respects_grace(tmp_path, schema):
    clock = FakeClock(0.0)
    server = make_server(tmp_path, clock=clock, log_name="grace.jsonl", grace_seconds=60.0)
    register_users(server, [f"u{i}" for i in range(5)])
    for uid in [f"u{i}" for i in range(5)]:
        server.submit_report(
            make_report(schema, uid, options=middle_options(schema), report_id=f"{uid}-r", ts=10.0)
        )
    clock.advance(3630.0)  # period closed but still inside the grace delay
    assert server.detect_due() == []
    clock.advance(40.0)
    summaries = server.detect_due()
    assert len(summaries) == 1 and summaries[0]["executed"] is True
    server.close()
