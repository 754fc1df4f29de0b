"""Per-window malicious-user detection.

Within one (region, period) window: consolidate each user to a single value
per question, compute the population mean and standard deviation per question,
treat [mean - 2*std, mean + 2*std] as the valid interval, and classify a user
as malicious when more than half of their answered questions fall outside it.
Windows with fewer than five distinct participants are not assessed at all.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .domain import (
    FloodsenseError,
    QuestionKind,
    QuestionnaireSchema,
    Report,
    encode_answer,
)

MIN_PARTICIPANTS = 5
INTERVAL_TOLERANCE = 1e-9
MALICIOUS_RATIO = 0.5


class EmptyInput(FloodsenseError):
    """An operation that needs at least one value received none."""


class MissingStats(FloodsenseError):
    """A consolidated value has no question statistics to be checked against."""


class Verdict(str, Enum):
    NON_MALICIOUS = "NonMalicious"
    MALICIOUS = "Malicious"
    UNVETTED = "Unvetted"


@dataclass(frozen=True)
class ConsolidatedRow:
    """One user's single value per question within a window; questions the
    user skipped in every submission are absent."""

    user_id: str
    values: Mapping[int, float]


@dataclass(frozen=True)
class QuestionStats:
    question_id: int
    count: int
    mean: float
    std: float
    lo: float
    hi: float

    @classmethod
    def from_values(cls, question_id: int, values: Sequence[float]) -> "QuestionStats":
        mean, std = question_stats(values)
        lo, hi = valid_interval(mean, std)
        return cls(question_id, len(values), mean, std, lo, hi)

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "count": self.count,
            "mean": self.mean,
            "std": self.std,
            "lo": self.lo,
            "hi": self.hi,
        }


@dataclass(frozen=True)
class Assessment:
    user_id: str
    answered: int
    outliers: int
    ratio: float
    verdict: Verdict

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "answered": self.answered,
            "outliers": self.outliers,
            "ratio": self.ratio,
            "verdict": self.verdict.value,
        }


@dataclass(frozen=True)
class DetectionWindow:
    """A (region, period) batch. ``stats`` and ``assessments`` stay empty
    until detection has executed; they remain empty for gated windows."""

    region: int
    period: int
    rows: tuple[ConsolidatedRow, ...]
    executed: bool = False
    stats: tuple[QuestionStats, ...] = ()
    assessments: tuple[Assessment, ...] = ()


def consolidate(reports: Sequence[Report], schema: QuestionnaireSchema) -> ConsolidatedRow:
    """Collapse one user's submissions in a window to a single value per
    scored question: the arithmetic mean of their non-skipped answers."""
    if not reports:
        raise EmptyInput("cannot consolidate an empty report list")
    user_ids = {r.user_id for r in reports}
    if len(user_ids) != 1:
        raise ValueError(f"consolidate expects a single user, got {sorted(user_ids)}")
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for report in reports:
        for question, answer in zip(schema.questions, report.answers):
            if question.kind is not QuestionKind.SCORED:
                continue
            value = encode_answer(question, answer)
            if value is None:
                continue
            sums[question.id] = sums.get(question.id, 0.0) + value
            counts[question.id] = counts.get(question.id, 0) + 1
    values = {qid: sums[qid] / counts[qid] for qid in sums}
    return ConsolidatedRow(user_id=reports[0].user_id, values=values)


def question_stats(values: Sequence[float]) -> tuple[float, float]:
    """Population mean and standard deviation (1/N normalization, no Bessel
    correction)."""
    if len(values) == 0:
        raise EmptyInput("cannot compute statistics of an empty value list")
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def valid_interval(mean: float, std: float) -> tuple[float, float]:
    """The two-standard-deviation acceptance band around the mean."""
    if std < 0:
        raise ValueError("standard deviation cannot be negative")
    return mean - 2.0 * std, mean + 2.0 * std


def within_interval(value: float, lo: float, hi: float, tol: float = INTERVAL_TOLERANCE) -> bool:
    """Inclusive membership with an absolute tolerance, so values sitting on
    the boundary are never flagged over floating-point dust."""
    return lo - tol <= value <= hi + tol


def assess(row: ConsolidatedRow, stats: Mapping[int, QuestionStats]) -> Assessment:
    """Classify one user from their per-question values and window stats.

    Malicious means strictly more than half of the answered questions lie
    outside the valid interval; a user with no numeric answers stays unvetted.
    """
    answered = len(row.values)
    if answered == 0:
        return Assessment(row.user_id, 0, 0, 0.0, Verdict.UNVETTED)
    outliers = 0
    for question_id, value in row.values.items():
        if question_id not in stats:
            raise MissingStats(f"no statistics for question {question_id}")
        s = stats[question_id]
        if not within_interval(value, s.lo, s.hi):
            outliers += 1
    ratio = outliers / answered
    verdict = Verdict.MALICIOUS if ratio > MALICIOUS_RATIO else Verdict.NON_MALICIOUS
    return Assessment(row.user_id, answered, outliers, ratio, verdict)


def build_window(
    region: int,
    period: int,
    reports_by_user: Mapping[str, Sequence[Report]],
    schema: QuestionnaireSchema,
) -> DetectionWindow:
    """Consolidate raw reports into a window ready for detection."""
    rows = tuple(
        consolidate(reports_by_user[user_id], schema)
        for user_id in sorted(reports_by_user)
    )
    return DetectionWindow(region=region, period=period, rows=rows)


def _compute(rows: Sequence[ConsolidatedRow]) -> tuple[tuple[QuestionStats, ...], list[Assessment]]:
    by_question: dict[int, list[float]] = {}
    for row in rows:
        for qid, value in row.values.items():
            by_question.setdefault(qid, []).append(value)
    stats = tuple(
        QuestionStats.from_values(qid, by_question[qid]) for qid in sorted(by_question)
    )
    stats_map = {s.question_id: s for s in stats}
    assessments = [assess(row, stats_map) for row in rows]
    return stats, assessments


def run_detection(
    window: DetectionWindow,
    *,
    min_participants: int = MIN_PARTICIPANTS,
    iterative: bool = False,
) -> DetectionWindow:
    """Execute detection on a consolidated window.

    Fewer than ``min_participants`` distinct users gates the window: it comes
    back with ``executed=False`` and empty stats/assessments, and its rows
    stay unvetted. Statistics are computed once over all rows; flagged users
    are not removed before assessing the others unless ``iterative`` is set,
    in which case stats are recomputed without newly flagged users until a
    fixpoint.
    """
    user_ids = [row.user_id for row in window.rows]
    if len(set(user_ids)) != len(user_ids):
        raise ValueError("window has more than one row for the same user")
    if len(user_ids) < min_participants:
        return replace(window, executed=False, stats=(), assessments=())

    rows = sorted(window.rows, key=lambda r: r.user_id)
    if not iterative:
        stats, assessments = _compute(rows)
        return replace(window, executed=True, stats=stats, assessments=tuple(assessments))

    flagged: dict[str, Assessment] = {}
    remaining = list(rows)
    while True:
        stats, assessments = _compute(remaining)
        newly = [a for a in assessments if a.verdict is Verdict.MALICIOUS]
        if not newly:
            break
        for a in newly:
            flagged[a.user_id] = a
        remaining = [r for r in remaining if r.user_id not in flagged]
        if not remaining:
            stats, assessments = (), []
            break
    merged = sorted(
        list(flagged.values()) + list(assessments), key=lambda a: a.user_id
    )
    return replace(window, executed=True, stats=stats, assessments=tuple(merged))


# --- export -----------------------------------------------------------------


def assessment_line(region: int, period: int, assessment: Assessment) -> str:
    """One flat record per assessment, for files and pipes."""
    record = {"region": region, "period": period, **assessment.to_dict()}
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def detection_lines(summary: Mapping) -> list[str]:
    """Flatten a detection summary (the event-body form) into export lines.

    Executed windows yield one line per recorded assessment; gated windows
    yield one unvetted line per participating row so the export always shows
    every user the window touched.
    """
    region = summary["region"]
    period = summary["period"]
    lines = []
    if summary["executed"]:
        for a in summary["assessments"]:
            record = {"region": region, "period": period, **a}
            lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
    else:
        for row in summary["rows"]:
            record = {
                "region": region,
                "period": period,
                "user_id": row["user_id"],
                "answered": row["answered"],
                "outliers": 0,
                "ratio": 0.0,
                "verdict": Verdict.UNVETTED.value,
            }
            lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
    return lines


def window_summary(window: DetectionWindow) -> dict:
    """The JSON-ready form of a detection result, as persisted in the event
    log and returned by the admin endpoint."""
    return {
        "region": window.region,
        "period": window.period,
        "executed": window.executed,
        "participants": len(window.rows),
        "rows": [
            {"user_id": row.user_id, "answered": len(row.values)}
            for row in sorted(window.rows, key=lambda r: r.user_id)
        ],
        "stats": [s.to_dict() for s in window.stats],
        "assessments": [a.to_dict() for a in window.assessments],
    }
