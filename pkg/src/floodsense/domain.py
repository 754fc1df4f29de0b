"""Core vocabulary: questionnaire instrument, answers, reports, users, and the
region/period partitioning that scopes every detection window.

Everything here is a plain value type with pure functions over it; nothing
touches the network or the disk except the schema loader.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path


class FloodsenseError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(FloodsenseError):
    """A questionnaire schema breaks one of its invariants."""


class TypeMismatch(FloodsenseError):
    """An answer value is incompatible with the question it targets."""


class OutsideDisasterArea(FloodsenseError):
    """Coordinates fall outside the configured region grid."""


class BeforeEpoch(FloodsenseError):
    """Timestamp precedes the configured epoch origin."""


class Category(str, Enum):
    VICTIM = "Victim"
    FACILITY_LIVELIHOOD = "FacilityLivelihood"
    MEDICAL = "Medical"
    TRANSFER = "Transfer"


class QuestionKind(str, Enum):
    SCORED = "Scored"
    DESCRIPTIVE = "Descriptive"


class MediaKind(str, Enum):
    AUDIO = "audio"
    PHOTO = "photo"
    VIDEO = "video"


class UserStatus(str, Enum):
    ACTIVE = "Active"
    BLACKLISTED = "Blacklisted"


@dataclass(frozen=True)
class QuestionSpec:
    """One question of the instrument.

    Scored questions carry ``option_count`` ordered options (labels included);
    descriptive questions take free text and never enter the numeric pipeline.
    """

    id: int
    category: Category
    kind: QuestionKind
    text: str
    option_count: int = 0
    option_labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind is QuestionKind.SCORED:
            if self.option_count < 2:
                raise SchemaError(f"question {self.id}: scored questions need at least 2 options")
            if len(self.option_labels) != self.option_count:
                raise SchemaError(
                    f"question {self.id}: {self.option_count} options "
                    f"but {len(self.option_labels)} labels"
                )
        else:
            if self.option_count != 0 or self.option_labels:
                raise SchemaError(f"question {self.id}: descriptive questions carry no options")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "category": self.category.value,
            "kind": self.kind.value,
            "text": self.text,
            "option_count": self.option_count,
            "option_labels": list(self.option_labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuestionSpec":
        return cls(
            id=int(d["id"]),
            category=Category(d["category"]),
            kind=QuestionKind(d["kind"]),
            text=str(d["text"]),
            option_count=int(d.get("option_count", 0)),
            option_labels=tuple(d.get("option_labels", ())),
        )


@dataclass(frozen=True)
class QuestionnaireSchema:
    """Versioned, ordered questionnaire. Question ids are 1..Q, contiguous."""

    version: str
    questions: tuple[QuestionSpec, ...]

    def __post_init__(self) -> None:
        ids = [q.id for q in self.questions]
        if ids != list(range(1, len(ids) + 1)):
            raise SchemaError("question ids must be contiguous 1..Q in order")

    @property
    def question_count(self) -> int:
        return len(self.questions)

    @property
    def scored_questions(self) -> tuple[QuestionSpec, ...]:
        return tuple(q for q in self.questions if q.kind is QuestionKind.SCORED)

    def question(self, question_id: int) -> QuestionSpec:
        if not 1 <= question_id <= len(self.questions):
            raise SchemaError(f"no question with id {question_id}")
        return self.questions[question_id - 1]

    def to_dict(self) -> dict:
        return {"version": self.version, "questions": [q.to_dict() for q in self.questions]}

    @classmethod
    def from_dict(cls, d: dict) -> "QuestionnaireSchema":
        return cls(
            version=str(d["version"]),
            questions=tuple(QuestionSpec.from_dict(q) for q in d["questions"]),
        )


def load_schema(path: str | Path) -> QuestionnaireSchema:
    """Load a questionnaire schema from a JSON file."""
    with open(path, encoding="utf-8") as f:
        return QuestionnaireSchema.from_dict(json.load(f))


def default_schema() -> QuestionnaireSchema:
    """The shipped instrument: 15 scored + 2 descriptive questions over the
    four need categories."""
    text = resources.files("floodsense.data").joinpath("default_schema.json").read_text("utf-8")
    return QuestionnaireSchema.from_dict(json.loads(text))


# --- answers ---------------------------------------------------------------


@dataclass(frozen=True)
class Chosen:
    """A selected option of a scored question, 1-based."""

    option: int


@dataclass(frozen=True)
class Skipped:
    """The user skipped the question."""


@dataclass(frozen=True)
class FreeText:
    """Free-text answer to a descriptive question."""

    text: str


SKIPPED = Skipped()

AnswerValue = Chosen | Skipped | FreeText


def answer_to_json(answer: AnswerValue):
    if isinstance(answer, Skipped):
        return None
    if isinstance(answer, Chosen):
        return {"chosen": answer.option}
    return {"text": answer.text}


def answer_from_json(value) -> AnswerValue:
    if value is None:
        return SKIPPED
    if not isinstance(value, dict):
        raise ValueError(f"answer must be null or an object, got {value!r}")
    if "chosen" in value:
        return Chosen(int(value["chosen"]))
    if "text" in value:
        return FreeText(str(value["text"]))
    raise ValueError(f"answer object needs a 'chosen' or 'text' field: {value!r}")


@dataclass(frozen=True)
class Attachment:
    question_id: int
    media_kind: MediaKind
    byte_length: int
    blob_ref: str

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "media_kind": self.media_kind.value,
            "byte_length": self.byte_length,
            "blob_ref": self.blob_ref,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Attachment":
        return cls(
            question_id=int(d["question_id"]),
            media_kind=MediaKind(d["media_kind"]),
            byte_length=int(d["byte_length"]),
            blob_ref=str(d["blob_ref"]),
        )


@dataclass(frozen=True)
class Report:
    """One participation: a full answer vector plus location and time."""

    report_id: str
    user_id: str
    latitude: float
    longitude: float
    timestamp: float
    answers: tuple[AnswerValue, ...]
    attachments: tuple[Attachment, ...] = ()

    def to_dict(self) -> dict:
        return {
            "report_id": self.report_id,
            "user_id": self.user_id,
            "latitude": self.latitude,
            "longitude": self.longitude,
            "timestamp": self.timestamp,
            "answers": [answer_to_json(a) for a in self.answers],
            "attachments": [a.to_dict() for a in self.attachments],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        for key in ("report_id", "user_id", "latitude", "longitude", "timestamp", "answers"):
            if key not in d:
                raise ValueError(f"report is missing required field {key!r}")
        if not isinstance(d["answers"], list):
            raise ValueError("report 'answers' must be a list")
        return cls(
            report_id=str(d["report_id"]),
            user_id=str(d["user_id"]),
            latitude=float(d["latitude"]),
            longitude=float(d["longitude"]),
            timestamp=float(d["timestamp"]),
            answers=tuple(answer_from_json(a) for a in d["answers"]),
            attachments=tuple(Attachment.from_dict(a) for a in d.get("attachments", ())),
        )


@dataclass
class UserProfile:
    """Identity metadata collected at registration. Stored verbatim; none of
    it feeds detection."""

    user_id: str
    identity: str
    education_level: str = ""
    relief_courses: tuple[str, ...] = ()
    prior_participation: str = ""
    status: UserStatus = UserStatus.ACTIVE

    def mark_blacklisted(self) -> None:
        # one-way transition; repeated calls are no-ops
        self.status = UserStatus.BLACKLISTED

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "identity": self.identity,
            "education_level": self.education_level,
            "relief_courses": list(self.relief_courses),
            "prior_participation": self.prior_participation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UserProfile":
        for key in ("user_id", "identity"):
            if key not in d or not str(d[key]):
                raise ValueError(f"profile is missing required field {key!r}")
        return cls(
            user_id=str(d["user_id"]),
            identity=str(d["identity"]),
            education_level=str(d.get("education_level", "")),
            relief_courses=tuple(str(c) for c in d.get("relief_courses", ())),
            prior_participation=str(d.get("prior_participation", "")),
        )


# --- space and time partitioning -------------------------------------------


@dataclass(frozen=True)
class RegionGrid:
    """Uniform rows x cols grid over a bounding box; cells indexed row-major
    from the (lat_min, lon_min) corner."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ValueError("grid bounding box is empty")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and one column")

    @property
    def region_count(self) -> int:
        return self.rows * self.cols

    def cell_center(self, region: int) -> tuple[float, float]:
        if not 0 <= region < self.region_count:
            raise ValueError(f"region {region} out of range")
        row, col = divmod(region, self.cols)
        lat = self.lat_min + (row + 0.5) * (self.lat_max - self.lat_min) / self.rows
        lon = self.lon_min + (col + 0.5) * (self.lon_max - self.lon_min) / self.cols
        return lat, lon

    def to_spec(self) -> str:
        return (
            f"{self.lat_min},{self.lat_max},{self.lon_min},{self.lon_max},"
            f"{self.rows},{self.cols}"
        )

    @classmethod
    def from_spec(cls, spec: str) -> "RegionGrid":
        """Parse the "latmin,latmax,lonmin,lonmax,rows,cols" form."""
        parts = spec.split(",")
        if len(parts) != 6:
            raise ValueError(f"grid spec needs 6 comma-separated values, got {spec!r}")
        lat_min, lat_max, lon_min, lon_max = (float(p) for p in parts[:4])
        return cls(lat_min, lat_max, lon_min, lon_max, int(parts[4]), int(parts[5]))


@dataclass(frozen=True)
class PeriodConfig:
    """Detection runs once per period; periods are disjoint half-open slots
    of ``period_seconds`` starting at ``epoch_origin``."""

    period_seconds: int = 3600
    epoch_origin: float = 0.0

    def __post_init__(self) -> None:
        if self.period_seconds <= 0:
            raise ValueError("period length must be positive")


def region_of(lat: float, lon: float, grid: RegionGrid) -> int:
    """Row-major cell index of the point; interior boundaries belong to the
    higher-index cell, the max edge folds into the last cell."""
    if not (grid.lat_min <= lat <= grid.lat_max and grid.lon_min <= lon <= grid.lon_max):
        raise OutsideDisasterArea(f"({lat}, {lon}) is outside the disaster area grid")
    row = int((lat - grid.lat_min) * grid.rows / (grid.lat_max - grid.lat_min))
    col = int((lon - grid.lon_min) * grid.cols / (grid.lon_max - grid.lon_min))
    row = min(row, grid.rows - 1)
    col = min(col, grid.cols - 1)
    return row * grid.cols + col


def period_of(timestamp: float, cfg: PeriodConfig) -> int:
    if timestamp < cfg.epoch_origin:
        raise BeforeEpoch(f"timestamp {timestamp} precedes epoch origin {cfg.epoch_origin}")
    return int(math.floor((timestamp - cfg.epoch_origin) / cfg.period_seconds))


def encode_answer(question: QuestionSpec, answer: AnswerValue) -> float | None:
    """Numeric encoding of an answer: option k becomes the real number k.

    Skips and descriptive answers produce no data element (None).
    """
    if isinstance(answer, Skipped):
        return None
    if isinstance(answer, FreeText):
        if question.kind is not QuestionKind.DESCRIPTIVE:
            raise TypeMismatch(f"free text on scored question {question.id}")
        return None
    if question.kind is not QuestionKind.SCORED:
        raise TypeMismatch(f"chosen option on descriptive question {question.id}")
    if not 1 <= answer.option <= question.option_count:
        raise TypeMismatch(
            f"option {answer.option} out of range 1..{question.option_count} "
            f"on question {question.id}"
        )
    return float(answer.option)


# --- report validation ------------------------------------------------------


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str
    question_id: int | None = None

    def to_dict(self) -> dict:
        d: dict = {"code": self.code, "message": self.message}
        if self.question_id is not None:
            d["question_id"] = self.question_id
        return d


def validate_report(report: Report, schema: QuestionnaireSchema) -> list[ValidationIssue]:
    """Check a report against the schema and return every violation found.

    An empty list means the report is acceptable; skipping any or all
    questions is legal.
    """
    issues: list[ValidationIssue] = []
    if len(report.answers) != schema.question_count:
        issues.append(
            ValidationIssue(
                "length_mismatch",
                f"expected {schema.question_count} answers, got {len(report.answers)}",
            )
        )
    for question, answer in zip(schema.questions, report.answers):
        if isinstance(answer, Skipped):
            continue
        if isinstance(answer, FreeText):
            if question.kind is not QuestionKind.DESCRIPTIVE:
                issues.append(
                    ValidationIssue(
                        "type_mismatch",
                        f"free text on scored question {question.id}",
                        question.id,
                    )
                )
            continue
        if question.kind is not QuestionKind.SCORED:
            issues.append(
                ValidationIssue(
                    "type_mismatch",
                    f"chosen option on descriptive question {question.id}",
                    question.id,
                )
            )
        elif not 1 <= answer.option <= question.option_count:
            issues.append(
                ValidationIssue(
                    "option_out_of_range",
                    f"option {answer.option} out of range 1..{question.option_count}",
                    question.id,
                )
            )
    valid_ids = {q.id for q in schema.questions}
    for att in report.attachments:
        if att.question_id not in valid_ids:
            issues.append(
                ValidationIssue(
                    "unknown_attachment_question",
                    f"attachment references unknown question {att.question_id}",
                    att.question_id,
                )
            )
        if att.byte_length < 0:
            issues.append(
                ValidationIssue(
                    "bad_attachment_size",
                    f"attachment on question {att.question_id} has negative size",
                    att.question_id,
                )
            )
    return issues
