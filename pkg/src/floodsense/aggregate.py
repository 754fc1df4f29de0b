"""Trusted need summaries per region, for relief organizations.

Only raw answers from users assessed non-malicious in the corresponding
window (and not blacklisted) enter the histograms; unvetted participation is
surfaced as a bare count. Free text and attachments ride along from the same
trusted users. Output is deterministic: canonical JSON and a flat CSV.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from .domain import Category, Chosen, FreeText, FloodsenseError, QuestionKind, UserStatus
from .store import Ledger
from .trust import Verdict


class UnknownRegion(FloodsenseError):
    """Region index outside the configured grid."""


@dataclass
class QuestionSummary:
    question_id: int
    category: Category
    text: str
    option_count: int
    histogram: dict[int, int]
    mode: int | None
    respondents: int
    # user ids behind each bucket; only populated when provenance tracking is on
    provenance: dict[int, list[str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "category": self.category.value,
            "text": self.text,
            "option_count": self.option_count,
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
            "mode": self.mode,
            "respondents": self.respondents,
        }


@dataclass
class AggregateReport:
    region: int
    from_period: int
    to_period: int
    questions: list[QuestionSummary]
    free_texts: list[dict]
    attachments: list[dict]
    unvetted_users: int
    trusted_users: int

    def to_dict(self) -> dict:
        return {
            "region": self.region,
            "from_period": self.from_period,
            "to_period": self.to_period,
            "unvetted_users": self.unvetted_users,
            "trusted_users": self.trusted_users,
            "questions": [q.to_dict() for q in self.questions],
            "free_texts": self.free_texts,
            "attachments": self.attachments,
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def aggregate_region(
    ledger: Ledger,
    region: int,
    from_period: int | None = None,
    to_period: int | None = None,
    track_provenance: bool = False,
) -> AggregateReport:
    """Summarize the trusted raw answers of one region over a period range.

    The range defaults to 0..max period holding data for the region, so the
    same ledger always yields byte-identical output. A user's answers in a
    window count only if that window's recorded verdict for them is
    non-malicious; users in gated or not-yet-detected windows are tallied in
    ``unvetted_users`` instead.
    """
    if not 0 <= region < ledger.grid.region_count:
        raise UnknownRegion(f"region {region} outside grid of {ledger.grid.region_count}")
    if from_period is None:
        from_period = 0
    last = ledger.max_period_with_data(region)
    if to_period is None:
        to_period = last if last is not None else from_period

    schema = ledger.schema
    histograms: dict[int, dict[int, int]] = {
        q.id: {} for q in schema.questions if q.kind is QuestionKind.SCORED
    }
    provenance: dict[int, dict[int, list[str]]] = {qid: {} for qid in histograms}
    free_texts: list[dict] = []
    attachments: list[dict] = []
    unvetted = 0
    trusted: set[str] = set()

    for (win_region, win_period), by_user in sorted(ledger.window_reports.items()):
        if win_region != region or not from_period <= win_period <= to_period:
            continue
        recorded = ledger.windows.get((win_region, win_period))
        verdicts: dict[str, str] = {}
        if recorded and recorded.get("executed"):
            verdicts = {a["user_id"]: a["verdict"] for a in recorded["assessments"]}
        for user_id, report_ids in by_user.items():
            profile = ledger.users.get(user_id)
            if profile is not None and profile.status is UserStatus.BLACKLISTED:
                continue
            verdict = verdicts.get(user_id, Verdict.UNVETTED.value)
            if verdict == Verdict.MALICIOUS.value:
                continue
            if verdict != Verdict.NON_MALICIOUS.value:
                unvetted += 1
                continue
            trusted.add(user_id)
            for rid in report_ids:
                report = ledger.reports[rid].report
                for question, answer in zip(schema.questions, report.answers):
                    if isinstance(answer, Chosen) and question.kind is QuestionKind.SCORED:
                        bucket = histograms[question.id]
                        bucket[answer.option] = bucket.get(answer.option, 0) + 1
                        if track_provenance:
                            provenance[question.id].setdefault(answer.option, []).append(user_id)
                    elif isinstance(answer, FreeText):
                        free_texts.append(
                            {
                                "question_id": question.id,
                                "report_id": report.report_id,
                                "text": answer.text,
                            }
                        )
                for att in report.attachments:
                    attachments.append(
                        {
                            "question_id": att.question_id,
                            "report_id": report.report_id,
                            "media_kind": att.media_kind.value,
                            "byte_length": att.byte_length,
                            "blob_ref": att.blob_ref,
                        }
                    )

    free_texts.sort(key=lambda t: (t["question_id"], t["report_id"]))
    attachments.sort(key=lambda a: (a["question_id"], a["report_id"], a["blob_ref"]))

    questions = []
    for q in schema.questions:
        if q.kind is not QuestionKind.SCORED:
            continue
        hist = histograms[q.id]
        mode = None
        if hist:
            # maximal count, ties broken toward the lowest option index
            mode = min(sorted(hist), key=lambda opt: (-hist[opt], opt))
        questions.append(
            QuestionSummary(
                question_id=q.id,
                category=q.category,
                text=q.text,
                option_count=q.option_count,
                histogram=hist,
                mode=mode,
                respondents=sum(hist.values()),
                provenance=provenance[q.id] if track_provenance else {},
            )
        )

    return AggregateReport(
        region=region,
        from_period=from_period,
        to_period=to_period,
        questions=questions,
        free_texts=free_texts,
        attachments=attachments,
        unvetted_users=unvetted,
        trusted_users=len(trusted),
    )


def category_rollup(report: AggregateReport) -> dict[Category, list[QuestionSummary]]:
    """Group the question summaries under the four need categories, keeping
    schema order inside each group. Every category is present even if empty."""
    rollup: dict[Category, list[QuestionSummary]] = {c: [] for c in Category}
    for summary in report.questions:
        rollup[summary.category].append(summary)
    return rollup


def to_csv_text(report: AggregateReport) -> str:
    """Flat per-question rows: region, question, category, mode, one count
    column per option slot (padded to the widest question), respondents, and
    the report-level unvetted count."""
    max_options = max((q.option_count for q in report.questions), default=0)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["region", "question_id", "category", "mode"]
        + [f"count_{i}" for i in range(1, max_options + 1)]
        + ["respondent_count", "unvetted_users"]
    )
    for q in report.questions:
        counts = [
            q.histogram.get(opt, 0) if opt <= q.option_count else ""
            for opt in range(1, max_options + 1)
        ]
        writer.writerow(
            [report.region, q.question_id, q.category.value, "" if q.mode is None else q.mode]
            + counts
            + [q.respondents, report.unvetted_users]
        )
    return buf.getvalue()
