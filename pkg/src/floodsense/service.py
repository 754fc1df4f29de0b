"""Ingestion and query service: HTTP endpoints over the event store, with
detection fired per (region, period) window once the period has closed.

All writes funnel through one lock around the store's single appender; the
period timer and the admin endpoint share the same detection path, so a
timer-driven run and a manual run over the same data produce the same events.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from fastapi import Body, FastAPI, Header, HTTPException, Query
from fastapi.responses import JSONResponse

from .aggregate import AggregateReport, UnknownRegion, aggregate_region
from .domain import (
    BeforeEpoch,
    FloodsenseError,
    OutsideDisasterArea,
    PeriodConfig,
    QuestionnaireSchema,
    RegionGrid,
    Report,
    UserProfile,
    UserStatus,
    default_schema,
    load_schema,
    period_of,
    region_of,
    validate_report,
)
from .store import (
    BlacklistedUser,
    DuplicateReport,
    DuplicateUser,
    EventStore,
    KIND_DETECTION_RUN,
    KIND_REPORT_SUBMITTED,
    KIND_USER_BLACKLISTED,
    KIND_USER_REGISTERED,
    UnknownUser,
)
from .trust import Verdict, build_window, run_detection, window_summary


class ConfigError(FloodsenseError):
    """Service configuration is missing or malformed."""


class PeriodOpen(FloodsenseError):
    """Detection was requested for a period that has not closed yet."""


class ValidationFailed(FloodsenseError):
    """A report failed schema validation; ``issues`` lists every violation."""

    def __init__(self, issues):
        super().__init__("; ".join(i.message for i in issues))
        self.issues = issues


ENV_PREFIX = "FLOODSENSE_"


@dataclass
class ServiceConfig:
    log_path: str
    addr: str = "127.0.0.1:8500"
    schema_path: str | None = None
    grid: RegionGrid = field(
        default_factory=lambda: RegionGrid(-90.0, 90.0, -180.0, 180.0, 1, 1)
    )
    period_seconds: int = 3600
    epoch_origin: float = 0.0
    grace_seconds: float = 60.0
    admin_token: str = "floodsense-admin"
    # experimental: recompute window statistics without freshly flagged users
    # until a fixpoint instead of the standard single pass
    iterative_detection: bool = False

    @property
    def host(self) -> str:
        return self.addr.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        try:
            return int(self.addr.rsplit(":", 1)[1])
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"addr {self.addr!r} must look like host:port") from exc

    def period_config(self) -> PeriodConfig:
        return PeriodConfig(period_seconds=self.period_seconds, epoch_origin=self.epoch_origin)

    def load_questionnaire(self) -> QuestionnaireSchema:
        if self.schema_path:
            return load_schema(self.schema_path)
        return default_schema()

    @classmethod
    def from_file(
        cls, path: str | Path | None, env: Mapping[str, str] | None = None
    ) -> "ServiceConfig":
        """Build a config from an optional JSON file with FLOODSENSE_*
        environment overrides applied on top."""
        env = os.environ if env is None else env
        raw: dict = {}
        if path is not None:
            try:
                with open(path, encoding="utf-8") as f:
                    raw = json.load(f)
            except OSError as exc:
                raise ConfigError(f"cannot read config file: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        for key, env_key in (
            ("addr", "ADDR"),
            ("log_path", "LOG_PATH"),
            ("period_seconds", "PERIOD_SECONDS"),
            ("grid", "GRID"),
            ("schema_path", "SCHEMA_PATH"),
            ("admin_token", "ADMIN_TOKEN"),
        ):
            if ENV_PREFIX + env_key in env:
                raw[key] = env[ENV_PREFIX + env_key]
        if not raw.get("log_path"):
            raise ConfigError("log_path is required (config file or FLOODSENSE_LOG_PATH)")
        try:
            grid_raw = raw.get("grid")
            if grid_raw is None:
                grid = RegionGrid(-90.0, 90.0, -180.0, 180.0, 1, 1)
            elif isinstance(grid_raw, str):
                grid = RegionGrid.from_spec(grid_raw)
            else:
                grid = RegionGrid(**grid_raw)
            cfg = cls(
                log_path=str(raw["log_path"]),
                addr=str(raw.get("addr", "127.0.0.1:8500")),
                schema_path=raw.get("schema_path"),
                grid=grid,
                period_seconds=int(raw.get("period_seconds", 3600)),
                epoch_origin=float(raw.get("epoch_origin", 0.0)),
                grace_seconds=float(raw.get("grace_seconds", 60.0)),
                admin_token=str(raw.get("admin_token", "floodsense-admin")),
                iterative_detection=bool(raw.get("iterative_detection", False)),
            )
            cfg.period_config()  # validates period_seconds
            cfg.port  # validates addr
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cfg


class CrowdServer:
    """The orchestrator behind both the HTTP API and the offline CLI: owns
    the event store and drives validation, window assignment, detection,
    purging, and aggregation."""

    def __init__(
        self,
        config: ServiceConfig,
        *,
        now_fn: Callable[[], float] = time.time,
        in_memory: bool = False,
    ):
        self.config = config
        self.now_fn = now_fn
        self.schema = config.load_questionnaire()
        self.periods = config.period_config()
        self.store = EventStore.open(
            None if in_memory else config.log_path,
            schema=self.schema,
            grid=config.grid,
            periods=self.periods,
        )
        self.ledger = self.store.ledger
        self._lock = threading.RLock()

    def close(self) -> None:
        self.store.close()

    # -- ingestion --

    def register_user(self, profile: UserProfile) -> str:
        with self._lock:
            self.store.append(
                KIND_USER_REGISTERED, {"profile": profile.to_dict()}, ts=self.now_fn()
            )
        return profile.user_id

    def submit_report(self, report: Report) -> tuple[dict, bool]:
        """Validate, assign a (region, period) window, and append.

        Returns (acknowledgment, created). Re-submitting a report the store
        already holds returns the original acknowledgment with created=False.
        """
        with self._lock:
            if report.user_id not in self.ledger.users:
                raise UnknownUser(f"user {report.user_id!r} is not registered")
            if self.ledger.users[report.user_id].status is UserStatus.BLACKLISTED:
                raise BlacklistedUser(f"user {report.user_id!r} is blacklisted")
            issues = validate_report(report, self.schema)
            if issues:
                raise ValidationFailed(issues)
            region = region_of(report.latitude, report.longitude, self.config.grid)
            period = period_of(report.timestamp, self.periods)
            # a window that was already detected is closed for good; late
            # arrivals roll into the next still-open window
            assigned = period
            while (region, assigned) in self.ledger.windows:
                assigned += 1
            late = assigned != period

            existing = self.ledger.reports.get(report.report_id)
            if existing is not None:
                if existing.report == report:
                    ack = {
                        "report_id": report.report_id,
                        "region": existing.region,
                        "period": existing.period,
                        "late": existing.late,
                    }
                    return ack, False
                raise DuplicateReport(
                    f"report {report.report_id!r} already exists with different content"
                )

            self.store.append(
                KIND_REPORT_SUBMITTED,
                {
                    "report": report.to_dict(),
                    "region": region,
                    "period": assigned,
                    "late": late,
                },
                ts=self.now_fn(),
            )
            ack = {
                "report_id": report.report_id,
                "region": region,
                "period": assigned,
                "late": late,
            }
            return ack, True

    # -- detection --

    def period_end(self, period: int) -> float:
        return self.periods.epoch_origin + (period + 1) * self.periods.period_seconds

    def detect(self, region: int, period: int, force: bool = False) -> dict:
        """Run detection for one window; idempotent per window.

        A window that holds no reports is a no-op: the empty summary is
        returned but nothing is appended, so re-running closed empty windows
        (the timer does) never grows the log.
        """
        with self._lock:
            if not 0 <= region < self.config.grid.region_count:
                raise UnknownRegion(
                    f"region {region} outside grid of {self.config.grid.region_count}"
                )
            recorded = self.ledger.windows.get((region, period))
            if recorded is not None:
                return recorded
            if not force and self.now_fn() < self.period_end(period):
                raise PeriodOpen(f"period {period} has not closed yet")
            reports_by_user = self.ledger.reports_in_window(region, period)
            window = build_window(region, period, reports_by_user, self.schema)
            window = run_detection(window, iterative=self.config.iterative_detection)
            summary = window_summary(window)
            if not reports_by_user:
                return summary
            self.store.append(KIND_DETECTION_RUN, summary, ts=self.now_fn())
            for assessment in window.assessments:
                if assessment.verdict is Verdict.MALICIOUS:
                    self.store.append(
                        KIND_USER_BLACKLISTED,
                        {"user_id": assessment.user_id, "period": period},
                        ts=self.now_fn(),
                    )
            return summary

    def detect_due(self, now: float | None = None) -> list[dict]:
        """Timer tick: detect every pending window whose period closed at
        least ``grace_seconds`` ago, in (period, region) order."""
        now = self.now_fn() if now is None else now
        summaries = []
        with self._lock:
            for region, period in self.ledger.pending_windows():
                if self.period_end(period) + self.config.grace_seconds <= now:
                    summaries.append(self.detect(region, period))
        return summaries

    # -- queries --

    def aggregate(
        self, region: int, from_period: int | None = None, to_period: int | None = None
    ) -> AggregateReport:
        with self._lock:
            return aggregate_region(self.ledger, region, from_period, to_period)

    def user_status(self, user_id: str) -> dict:
        with self._lock:
            profile = self.ledger.users.get(user_id)
            if profile is None:
                raise UnknownUser(f"user {user_id!r} is not registered")
            history = list(self.ledger.assessment_history.get(user_id, ()))
            blacklisted_window = None
            for entry in history:
                if entry["verdict"] == Verdict.MALICIOUS.value:
                    blacklisted_window = {"region": entry["region"], "period": entry["period"]}
                    break
            return {
                "user_id": user_id,
                "status": profile.status.value,
                "assessments": history,
                "blacklisted_window": blacklisted_window,
            }


# --- HTTP layer --------------------------------------------------------------


def _error(status: int, message: str, issues=None) -> JSONResponse:
    body: dict = {"error": message}
    if issues is not None:
        body["issues"] = issues
    return JSONResponse(status_code=status, content=body)


def create_app(server: CrowdServer) -> FastAPI:
    app = FastAPI(title="floodsense", docs_url=None, redoc_url=None)
    app.state.server = server

    def check_admin(authorization: str | None) -> None:
        if authorization != f"Bearer {server.config.admin_token}":
            raise HTTPException(status_code=401, detail="admin token required")

    @app.post("/users")
    def register_user(payload: dict = Body(...)):
        try:
            profile = UserProfile.from_dict(payload)
        except ValueError as exc:
            return _error(422, str(exc))
        try:
            user_id = server.register_user(profile)
        except DuplicateUser as exc:
            return _error(409, str(exc))
        return JSONResponse(status_code=201, content={"user_id": user_id})

    @app.post("/reports")
    def submit_report(payload: dict = Body(...)):
        try:
            report = Report.from_dict(payload)
        except ValueError as exc:
            return _error(422, str(exc))
        try:
            ack, created = server.submit_report(report)
        except UnknownUser as exc:
            return _error(404, str(exc))
        except BlacklistedUser as exc:
            return _error(403, str(exc))
        except ValidationFailed as exc:
            return _error(422, str(exc), issues=[i.to_dict() for i in exc.issues])
        except (OutsideDisasterArea, BeforeEpoch) as exc:
            return _error(400, str(exc))
        except DuplicateReport as exc:
            return _error(409, str(exc))
        return JSONResponse(status_code=202 if created else 200, content=ack)

    @app.post("/admin/detect")
    def admin_detect(
        region: int = Query(...),
        period: int = Query(...),
        force: bool = Query(False),
        authorization: str | None = Header(None),
    ):
        check_admin(authorization)
        try:
            summary = server.detect(region, period, force=force)
        except UnknownRegion as exc:
            return _error(404, str(exc))
        except PeriodOpen as exc:
            return _error(409, str(exc))
        return JSONResponse(status_code=200, content=summary)

    @app.get("/aggregates/{region}")
    def get_aggregate(
        region: int,
        from_period: int | None = Query(None, alias="from"),
        to_period: int | None = Query(None, alias="to"),
    ):
        try:
            report = server.aggregate(region, from_period, to_period)
        except UnknownRegion as exc:
            return _error(404, str(exc))
        return JSONResponse(status_code=200, content=report.to_dict())

    @app.get("/users/{user_id}/status")
    def get_user_status(user_id: str):
        try:
            status = server.user_status(user_id)
        except UnknownUser as exc:
            return _error(404, str(exc))
        return JSONResponse(status_code=200, content=status)

    return app


def run_timer(
    server: CrowdServer, stop: threading.Event, tick_seconds: float = 1.0
) -> None:
    """Detection timer loop; runs until ``stop`` is set."""
    while not stop.wait(tick_seconds):
        try:
            server.detect_due()
        except FloodsenseError:
            # a bad window must not kill the timer; the admin endpoint can
            # retry and surface the error
            continue


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted. Prints the bound address first."""
    import uvicorn

    server = CrowdServer(config)
    app = create_app(server)
    stop = threading.Event()
    timer = threading.Thread(target=run_timer, args=(server, stop), daemon=True)
    timer.start()
    print(f"floodsense listening on http://{config.host}:{config.port}", flush=True)
    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    finally:
        stop.set()
        server.close()
