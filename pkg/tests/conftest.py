from __future__ import annotations

import pytest

from floodsense.domain import (
    Chosen,
    FreeText,
    PeriodConfig,
    QuestionKind,
    RegionGrid,
    Report,
    SKIPPED,
    UserProfile,
    default_schema,
)
from floodsense.service import CrowdServer, ServiceConfig


class FakeClock:
    """Deterministic stand-in for time.time()."""

    def __init__(self, start: float = 0.0):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


@pytest.fixture
def schema():
    return default_schema()


@pytest.fixture
def small_grid():
    # 2x2 cells over a 2x2 degree box starting at the origin
    return RegionGrid(0.0, 2.0, 0.0, 2.0, 2, 2)


@pytest.fixture
def periods():
    return PeriodConfig()


def make_report(
    schema,
    user_id: str,
    option: int | None = None,
    *,
    options: dict[int, int | None] | None = None,
    report_id: str | None = None,
    lat: float = 0.5,
    lon: float = 0.5,
    ts: float = 10.0,
    free_text: str | None = None,
    attachments=(),
) -> Report:
    """Build a schema-complete report: every scored question answered with
    ``option`` (or the per-question override from ``options``; None skips),
    descriptive questions carrying ``free_text`` if given."""
    answers = []
    for q in schema.questions:
        if q.kind is QuestionKind.SCORED:
            chosen = option
            if options is not None and q.id in options:
                chosen = options[q.id]
            answers.append(SKIPPED if chosen is None else Chosen(chosen))
        else:
            answers.append(SKIPPED if free_text is None else FreeText(free_text))
    return Report(
        report_id=report_id or f"{user_id}-r{int(ts)}",
        user_id=user_id,
        latitude=lat,
        longitude=lon,
        timestamp=ts,
        answers=tuple(answers),
        attachments=tuple(attachments),
    )


def make_server(tmp_path, *, grid=None, clock=None, log_name="events.jsonl", **cfg_kwargs):
    config = ServiceConfig(
        log_path=str(tmp_path / log_name),
        grid=grid or RegionGrid(0.0, 2.0, 0.0, 2.0, 2, 2),
        admin_token="test-admin",
        **cfg_kwargs,
    )
    return CrowdServer(config, now_fn=clock or FakeClock(0.0))


def register_users(server, user_ids):
    for uid in user_ids:
        server.register_user(UserProfile(user_id=uid, identity=f"citizen {uid}"))


def middle_options(schema) -> dict[int, int]:
    return {q.id: (q.option_count + 1) // 2 for q in schema.scored_questions}


def max_options(schema) -> dict[int, int]:
    return {q.id: q.option_count for q in schema.scored_questions}
