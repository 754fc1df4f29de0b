"""Trustable crowd-reporting backend for post-flood needs assessment."""

from .domain import (
    AnswerValue,
    Attachment,
    Category,
    Chosen,
    FreeText,
    MediaKind,
    PeriodConfig,
    QuestionKind,
    QuestionSpec,
    QuestionnaireSchema,
    RegionGrid,
    Report,
    SKIPPED,
    Skipped,
    UserProfile,
    UserStatus,
    default_schema,
    encode_answer,
    load_schema,
    period_of,
    region_of,
    validate_report,
)
from .trust import (
    Assessment,
    ConsolidatedRow,
    DetectionWindow,
    MIN_PARTICIPANTS,
    QuestionStats,
    Verdict,
    assess,
    build_window,
    consolidate,
    question_stats,
    run_detection,
    valid_interval,
)
from .aggregate import AggregateReport, aggregate_region, category_rollup
from .store import EventStore, Ledger, purge_rewrite, read_events, replay
from .sim import (
    Behavior,
    ScenarioConfig,
    SimulationResult,
    run_scenario,
    sweep,
    table1_experiment,
)
from .service import CrowdServer, ServiceConfig, create_app

__version__ = "0.1.0"
