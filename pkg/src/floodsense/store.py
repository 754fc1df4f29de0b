"""Append-only event log and the in-memory ledger rebuilt from it.

The log is JSON Lines: a header line carrying the format version, then one
event per line as {"seq", "ts", "kind", "body"}. Field names are frozen by
docs/log-format.md. Every accepted write is flushed and fsynced before it is
acknowledged, so a replay after a crash reconstructs exactly the acknowledged
state.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .domain import (
    FloodsenseError,
    PeriodConfig,
    QuestionnaireSchema,
    RegionGrid,
    Report,
    UserProfile,
    UserStatus,
)

FORMAT_VERSION = 1

KIND_USER_REGISTERED = "UserRegistered"
KIND_REPORT_SUBMITTED = "ReportSubmitted"
KIND_REPORT_TOMBSTONED = "ReportTombstoned"
KIND_DETECTION_RUN = "DetectionRun"
KIND_USER_BLACKLISTED = "UserBlacklisted"

_KINDS = {
    KIND_USER_REGISTERED,
    KIND_REPORT_SUBMITTED,
    KIND_REPORT_TOMBSTONED,
    KIND_DETECTION_RUN,
    KIND_USER_BLACKLISTED,
}


class InvariantViolation(FloodsenseError):
    """The event contradicts the current ledger state."""


class UnknownUser(InvariantViolation):
    pass


class BlacklistedUser(InvariantViolation):
    pass


class DuplicateUser(InvariantViolation):
    pass


class DuplicateReport(InvariantViolation):
    pass


class NotBlacklisted(InvariantViolation):
    pass


class StorageFailure(FloodsenseError):
    """The underlying file could not be written."""


class CorruptLog(FloodsenseError):
    """The log file cannot be parsed; ``line`` is the offending 1-based line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Event:
    seq: int
    ts: float
    kind: str
    body: dict

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "ts": self.ts, "kind": self.kind, "body": self.body},
            sort_keys=True,
            separators=(",", ":"),
        )


@dataclass
class StoredReport:
    report: Report
    region: int
    period: int
    late: bool = False


class Ledger:
    """Everything the service knows, reconstructible from the event log:
    users, accepted reports with their window assignment, recorded detection
    results, and the blacklist."""

    def __init__(
        self,
        schema: QuestionnaireSchema,
        grid: RegionGrid,
        periods: PeriodConfig,
    ):
        self.schema = schema
        self.grid = grid
        self.periods = periods
        self.users: dict[str, UserProfile] = {}
        self.reports: dict[str, StoredReport] = {}
        # (region, period) -> user_id -> [report_id...]
        self.window_reports: dict[tuple[int, int], dict[str, list[str]]] = {}
        # (region, period) -> recorded detection summary (event body)
        self.windows: dict[tuple[int, int], dict] = {}
        self.assessment_history: dict[str, list[dict]] = {}
        self.blacklisted_in: dict[str, int] = {}

    # -- invariant checks run before an event is appended --

    def validate(self, kind: str, body: dict) -> None:
        if kind == KIND_USER_REGISTERED:
            user_id = body["profile"]["user_id"]
            if user_id in self.users:
                raise DuplicateUser(f"user {user_id!r} is already registered")
        elif kind == KIND_REPORT_SUBMITTED:
            report = body["report"]
            user_id = report["user_id"]
            if user_id not in self.users:
                raise UnknownUser(f"user {user_id!r} is not registered")
            if self.users[user_id].status is UserStatus.BLACKLISTED:
                raise BlacklistedUser(f"user {user_id!r} is blacklisted")
            if report["report_id"] in self.reports:
                raise DuplicateReport(f"report {report['report_id']!r} already accepted")
        elif kind == KIND_USER_BLACKLISTED:
            if body["user_id"] not in self.users:
                raise UnknownUser(f"user {body['user_id']!r} is not registered")
        elif kind not in _KINDS:
            raise InvariantViolation(f"unknown event kind {kind!r}")

    # -- state transitions --

    def apply(self, event: Event) -> None:
        kind, body = event.kind, event.body
        if kind == KIND_USER_REGISTERED:
            profile = UserProfile.from_dict(body["profile"])
            self.users[profile.user_id] = profile
        elif kind == KIND_REPORT_SUBMITTED:
            report = Report.from_dict(body["report"])
            stored = StoredReport(
                report=report,
                region=int(body["region"]),
                period=int(body["period"]),
                late=bool(body.get("late", False)),
            )
            self.reports[report.report_id] = stored
            window = self.window_reports.setdefault((stored.region, stored.period), {})
            window.setdefault(report.user_id, []).append(report.report_id)
        elif kind == KIND_REPORT_TOMBSTONED:
            pass  # scrubbed remains of a purged report
        elif kind == KIND_DETECTION_RUN:
            key = (int(body["region"]), int(body["period"]))
            self.windows[key] = body
            for assessment in body.get("assessments", ()):
                self.assessment_history.setdefault(assessment["user_id"], []).append(
                    {
                        "region": body["region"],
                        "period": body["period"],
                        "answered": assessment["answered"],
                        "outliers": assessment["outliers"],
                        "ratio": assessment["ratio"],
                        "verdict": assessment["verdict"],
                    }
                )
        elif kind == KIND_USER_BLACKLISTED:
            self.purge_user(body["user_id"])
            self.blacklisted_in.setdefault(body["user_id"], int(body["period"]))

    def purge_user(self, user_id: str) -> None:
        """Blacklist the user and drop every report of theirs from the live
        state, so nothing they sent can reach statistics or aggregates.

        Idempotent; replaying a log reapplies it with the same outcome.
        """
        if user_id not in self.users:
            raise UnknownUser(f"user {user_id!r} is not registered")
        self.users[user_id].mark_blacklisted()
        doomed = [rid for rid, s in self.reports.items() if s.report.user_id == user_id]
        for rid in doomed:
            stored = self.reports.pop(rid)
            window = self.window_reports.get((stored.region, stored.period))
            if window and user_id in window:
                del window[user_id]
                if not window:
                    del self.window_reports[(stored.region, stored.period)]

    # -- queries --

    def reports_in_window(self, region: int, period: int) -> dict[str, list[Report]]:
        window = self.window_reports.get((region, period), {})
        return {
            user_id: [self.reports[rid].report for rid in report_ids]
            for user_id, report_ids in window.items()
        }

    def pending_windows(self) -> list[tuple[int, int]]:
        """Windows that hold data but have no recorded detection yet,
        in canonical (period, region) order."""
        keys = [k for k in self.window_reports if k not in self.windows]
        return sorted(keys, key=lambda k: (k[1], k[0]))

    def max_period_with_data(self, region: int) -> int | None:
        periods = [p for (r, p) in self.window_reports if r == region]
        periods += [p for (r, p) in self.windows if r == region]
        return max(periods) if periods else None


class EventStore:
    """Validated append path plus replay. ``path=None`` keeps the log purely
    in memory (offline batch runs); otherwise every append is durable before
    it returns."""

    def __init__(self, ledger: Ledger, path: str | Path | None = None):
        self.ledger = ledger
        self.path = Path(path) if path is not None else None
        self.events: list[Event] = []
        self.last_seq = 0
        self._fh = None
        if self.path is not None:
            self._open_file()

    def _open_file(self) -> None:
        assert self.path is not None
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        try:
            self._fh = open(self.path, "a", encoding="utf-8")
            if fresh:
                self._fh.write(json.dumps({"format_version": FORMAT_VERSION}) + "\n")
                self._fh.flush()
                os.fsync(self._fh.fileno())
        except OSError as exc:
            raise StorageFailure(str(exc)) from exc

    @classmethod
    def open(
        cls,
        path: str | Path | None,
        schema: QuestionnaireSchema,
        grid: RegionGrid,
        periods: PeriodConfig,
    ) -> "EventStore":
        """Open (or create) a log file and replay it into a fresh ledger."""
        ledger = Ledger(schema, grid, periods)
        store = cls(ledger, path=None)
        if path is not None and Path(path).exists() and Path(path).stat().st_size > 0:
            for event in read_events(path):
                ledger.apply(event)
                store.events.append(event)
                store.last_seq = event.seq
        store.path = Path(path) if path is not None else None
        if store.path is not None:
            store._open_file()
        return store

    def append(self, kind: str, body: dict, ts: float) -> Event:
        """Validate against the current state, write durably, then apply."""
        self.ledger.validate(kind, body)
        event = Event(seq=self.last_seq + 1, ts=ts, kind=kind, body=body)
        if self._fh is not None:
            try:
                self._fh.write(event.to_json() + "\n")
                self._fh.flush()
                os.fsync(self._fh.fileno())
            except OSError as exc:
                raise StorageFailure(str(exc)) from exc
        self.ledger.apply(event)
        self.events.append(event)
        self.last_seq = event.seq
        return event

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def read_events(path: str | Path) -> Iterator[Event]:
    """Parse a log file, yielding events in order.

    Raises CorruptLog with the offending line number on any malformed line,
    including a truncated final line.
    """
    with open(path, encoding="utf-8") as f:
        header_line = f.readline()
        if not header_line.endswith("\n"):
            raise CorruptLog(1, "truncated header")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise CorruptLog(1, f"unparsable header: {exc}") from exc
        if not isinstance(header, dict) or "format_version" not in header:
            raise CorruptLog(1, "header must carry format_version")
        if header["format_version"] != FORMAT_VERSION:
            raise CorruptLog(1, f"unsupported format_version {header['format_version']}")
        last_seq = 0
        for line_no, line in enumerate(f, start=2):
            if not line.endswith("\n"):
                raise CorruptLog(line_no, "truncated line")
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptLog(line_no, f"unparsable event: {exc}") from exc
            if not isinstance(raw, dict) or not {"seq", "ts", "kind", "body"} <= raw.keys():
                raise CorruptLog(line_no, "event needs seq, ts, kind, body")
            if raw["kind"] not in _KINDS:
                raise CorruptLog(line_no, f"unknown event kind {raw['kind']!r}")
            if raw["seq"] <= last_seq:
                raise CorruptLog(line_no, "sequence numbers must be strictly increasing")
            last_seq = raw["seq"]
            yield Event(seq=raw["seq"], ts=raw["ts"], kind=raw["kind"], body=raw["body"])


def replay(
    path: str | Path,
    schema: QuestionnaireSchema,
    grid: RegionGrid,
    periods: PeriodConfig,
) -> Ledger:
    """Rebuild the in-memory state from a log file."""
    ledger = Ledger(schema, grid, periods)
    for event in read_events(path):
        ledger.apply(event)
    return ledger


def purge_rewrite(path: str | Path, user_id: str, out_path: str | Path) -> int:
    """Write a compacted copy of the log in which every ReportSubmitted event
    of ``user_id`` is tombstoned (sequence numbers kept, report body gone).

    The user must appear in the log and must have been blacklisted there;
    replaying the rewritten log gives exactly the post-purge state of the
    original. Returns the number of tombstoned events.
    """
    events = list(read_events(path))
    known = any(
        e.kind == KIND_USER_REGISTERED and e.body["profile"]["user_id"] == user_id
        for e in events
    )
    if not known:
        raise UnknownUser(f"user {user_id!r} does not appear in the log")
    blacklisted = any(
        e.kind == KIND_USER_BLACKLISTED and e.body["user_id"] == user_id for e in events
    )
    if not blacklisted:
        raise NotBlacklisted(f"user {user_id!r} was never blacklisted in this log")

    tombstoned = 0
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        f.write(json.dumps({"format_version": FORMAT_VERSION}) + "\n")
        for event in events:
            if (
                event.kind == KIND_REPORT_SUBMITTED
                and event.body["report"]["user_id"] == user_id
            ):
                event = Event(
                    seq=event.seq,
                    ts=event.ts,
                    kind=KIND_REPORT_TOMBSTONED,
                    body={
                        "user_id": user_id,
                        "report_id": event.body["report"]["report_id"],
                    },
                )
                tombstoned += 1
            f.write(event.to_json() + "\n")
        f.flush()
        os.fsync(f.fileno())
    return tombstoned
