"""Adversarial population simulator.

Five behavior models submit questionnaire answers; the detection pipeline
classifies them; per-user and per-type outcomes come back with a confusion
matrix and precision/recall against the expected honest/adversarial split.
Runs are fully deterministic from one 64-bit seed: the seed is split into one
PCG64 substream per user (SeedSequence spawn_key = user index), and answers
are drawn in (user, period, submission, question) order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .domain import (
    Category,
    Chosen,
    FloodsenseError,
    PeriodConfig,
    QuestionKind,
    QuestionSpec,
    QuestionnaireSchema,
    RegionGrid,
    Report,
    SKIPPED,
    default_schema,
    region_of,
)
from .trust import DetectionWindow, Verdict, build_window, run_detection


class InvalidScenario(FloodsenseError):
    """Scenario configuration cannot be run as given."""


class Behavior(str, Enum):
    RANDOM = "Random"
    PATTERN = "Pattern"
    ACCURATE = "Accurate"
    NORMAL_LOW = "NormalLow"
    NORMAL_HIGH = "NormalHigh"


# order used for user construction and Table-style outputs
BEHAVIOR_ORDER = (
    Behavior.RANDOM,
    Behavior.PATTERN,
    Behavior.ACCURATE,
    Behavior.NORMAL_LOW,
    Behavior.NORMAL_HIGH,
)

NORMAL_SIGMA = {Behavior.NORMAL_LOW: 0.5, Behavior.NORMAL_HIGH: 1.5}

# the honest/adversarial split the detector is expected to recover
EXPECTED_MALICIOUS = frozenset({Behavior.RANDOM, Behavior.PATTERN, Behavior.NORMAL_HIGH})


def round_half_away(x: float) -> int:
    """Round to the nearest integer with halves away from zero."""
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def answer(
    behavior: Behavior,
    question: QuestionSpec,
    truth: int,
    rng: np.random.Generator,
) -> int:
    """Draw one behavior-model answer (a 1-based option) for a scored question."""
    n = question.option_count
    if behavior is Behavior.RANDOM:
        return int(rng.integers(1, n + 1))
    if behavior is Behavior.PATTERN:
        return (question.id - 1) % n + 1
    if behavior is Behavior.ACCURATE:
        return truth
    sample = float(rng.normal(truth, NORMAL_SIGMA[behavior]))
    return min(max(round_half_away(sample), 1), n)


def middle_truth(schema: QuestionnaireSchema) -> dict[int, int]:
    """Default ground truth: the middle option of every scored question."""
    return {q.id: (q.option_count + 1) // 2 for q in schema.scored_questions}


@dataclass
class ScenarioConfig:
    seed: int
    counts: dict[Behavior, int]
    schema: QuestionnaireSchema | None = None
    truth: dict[int, int] | None = None  # None -> middle option everywhere
    regions: int = 1
    periods: int = 1
    submissions_per_user_per_period: int = 1

    def resolved_schema(self) -> QuestionnaireSchema:
        return self.schema if self.schema is not None else default_schema()

    def resolved_truth(self, schema: QuestionnaireSchema) -> dict[int, int]:
        truth = self.truth if self.truth is not None else middle_truth(schema)
        for q in schema.scored_questions:
            if q.id not in truth:
                raise InvalidScenario(f"truth entry missing for question {q.id}")
            if not 1 <= truth[q.id] <= q.option_count:
                raise InvalidScenario(
                    f"truth for question {q.id} out of range 1..{q.option_count}"
                )
        return truth

    def validate(self) -> None:
        if any(count < 0 for count in self.counts.values()):
            raise InvalidScenario("behavior counts cannot be negative")
        if sum(self.counts.values()) < 1:
            raise InvalidScenario("scenario needs at least one user")
        if self.regions < 1 or self.periods < 1 or self.submissions_per_user_per_period < 1:
            raise InvalidScenario("regions, periods and submissions must be >= 1")
        self.resolved_truth(self.resolved_schema())

    @classmethod
    def from_file(cls, path: str | Path) -> "ScenarioConfig":
        """Load a scenario from its JSON form (see docs/file-formats.md)."""
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        try:
            counts = {Behavior(k): int(v) for k, v in raw["counts"].items()}
        except (KeyError, ValueError) as exc:
            raise InvalidScenario(f"bad counts: {exc}") from exc
        schema = None
        if raw.get("schema_path"):
            from .domain import load_schema

            schema = load_schema(raw["schema_path"])
        truth = None
        if "truth" in raw and raw["truth"] != "middle":
            if not isinstance(raw["truth"], dict):
                raise InvalidScenario("truth must be an object or the string 'middle'")
            truth = {int(k): int(v) for k, v in raw["truth"].items()}
        return cls(
            seed=int(raw.get("seed", 0)),
            counts=counts,
            schema=schema,
            truth=truth,
            regions=int(raw.get("regions", 1)),
            periods=int(raw.get("periods", 1)),
            submissions_per_user_per_period=int(
                raw.get("submissions_per_user_per_period", 1)
            ),
        )

    def echo(self, schema: QuestionnaireSchema) -> dict:
        return {
            "seed": self.seed,
            "counts": {b.value: self.counts.get(b, 0) for b in BEHAVIOR_ORDER},
            "schema_version": schema.version,
            "truth": {str(k): v for k, v in sorted(self.resolved_truth(schema).items())},
            "regions": self.regions,
            "periods": self.periods,
            "submissions_per_user_per_period": self.submissions_per_user_per_period,
        }


@dataclass
class UserOutcome:
    user_id: str
    behavior: Behavior
    region: int
    answered: int
    valid: int
    outliers: int
    ratio: float
    verdict: Verdict


@dataclass
class SimulationResult:
    scenario: dict
    users: list[UserOutcome]
    per_type: dict[str, dict]
    confusion: dict[str, dict[str, int]]
    precision: float
    recall: float
    false_positive_rate: float
    windows: list[DetectionWindow] = field(default_factory=list, repr=False)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["user_id", "behavior", "region", "answered", "valid", "outliers", "ratio", "verdict"]
        )
        for u in self.users:
            writer.writerow(
                [
                    u.user_id,
                    u.behavior.value,
                    u.region,
                    u.answered,
                    u.valid,
                    u.outliers,
                    repr(u.ratio),
                    u.verdict.value,
                ]
            )
        return buf.getvalue()

    def summary_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "per_type": self.per_type,
            "confusion": self.confusion,
            "precision": self.precision,
            "recall": self.recall,
            "false_positive_rate": self.false_positive_rate,
            "users": len(self.users),
        }

    def to_json_text(self) -> str:
        return json.dumps(self.summary_dict(), sort_keys=True, separators=(",", ":"))


def _user_rng(seed: int, user_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(user_index,)))


def run_scenario(cfg: ScenarioConfig) -> SimulationResult:
    """Generate every report, run detection per (region, period) window, and
    assemble the outcome. Identical configs give byte-identical outputs."""
    cfg.validate()
    schema = cfg.resolved_schema()
    truth = cfg.resolved_truth(schema)
    periods_cfg = PeriodConfig(period_seconds=3600, epoch_origin=0.0)
    grid = RegionGrid(0.0, 1.0, 0.0, float(cfg.regions), 1, cfg.regions)

    roster: list[tuple[str, Behavior, int]] = []
    for behavior in BEHAVIOR_ORDER:
        for _ in range(cfg.counts.get(behavior, 0)):
            idx = len(roster)
            roster.append((f"u{idx:04d}", behavior, idx % cfg.regions))

    reports_by_window: dict[tuple[int, int], dict[str, list[Report]]] = {}
    for idx, (user_id, behavior, region) in enumerate(roster):
        rng = _user_rng(cfg.seed, idx)
        lat, lon = grid.cell_center(region)
        assert region_of(lat, lon, grid) == region
        for period in range(cfg.periods):
            for submission in range(cfg.submissions_per_user_per_period):
                answers = []
                for q in schema.questions:
                    if q.kind is QuestionKind.SCORED:
                        answers.append(Chosen(answer(behavior, q, truth[q.id], rng)))
                    else:
                        answers.append(SKIPPED)
                report = Report(
                    report_id=f"{user_id}-p{period}-s{submission}",
                    user_id=user_id,
                    latitude=lat,
                    longitude=lon,
                    timestamp=period * 3600 + (submission % 3600),
                    answers=tuple(answers),
                )
                window = reports_by_window.setdefault((region, period), {})
                window.setdefault(user_id, []).append(report)

    windows = []
    assessments_by_user: dict[str, list] = {}
    for (region, period) in sorted(reports_by_window):
        window = build_window(region, period, reports_by_window[(region, period)], schema)
        window = run_detection(window)
        windows.append(window)
        for a in window.assessments:
            assessments_by_user.setdefault(a.user_id, []).append(a)

    users = []
    for user_id, behavior, region in roster:
        per_window = assessments_by_user.get(user_id, [])
        verdicts = {a.verdict for a in per_window}
        if Verdict.MALICIOUS in verdicts:
            verdict = Verdict.MALICIOUS
        elif Verdict.NON_MALICIOUS in verdicts:
            verdict = Verdict.NON_MALICIOUS
        else:
            verdict = Verdict.UNVETTED
        answered = sum(a.answered for a in per_window)
        outliers = sum(a.outliers for a in per_window)
        users.append(
            UserOutcome(
                user_id=user_id,
                behavior=behavior,
                region=region,
                answered=answered,
                valid=answered - outliers,
                outliers=outliers,
                ratio=outliers / answered if answered else 0.0,
                verdict=verdict,
            )
        )

    per_type: dict[str, dict] = {}
    for behavior in BEHAVIOR_ORDER:
        of_type = [u for u in users if u.behavior is behavior]
        if not of_type:
            continue
        n = len(of_type)
        flagged = sum(1 for u in of_type if u.verdict is Verdict.MALICIOUS)
        verdict_counts: dict[str, int] = {}
        for u in of_type:
            verdict_counts[u.verdict.value] = verdict_counts.get(u.verdict.value, 0) + 1
        modal = min(sorted(verdict_counts), key=lambda v: (-verdict_counts[v], v))
        per_type[behavior.value] = {
            "users": n,
            "mean_answered": sum(u.answered for u in of_type) / n,
            "mean_valid": sum(u.valid for u in of_type) / n,
            "mean_outliers": sum(u.outliers for u in of_type) / n,
            "mean_ratio": sum(u.ratio for u in of_type) / n,
            "flagged": flagged,
            "flag_rate": flagged / n,
            "modal_verdict": modal,
        }

    confusion = {
        "expected_malicious": {v.value: 0 for v in Verdict},
        "expected_honest": {v.value: 0 for v in Verdict},
    }
    for u in users:
        side = "expected_malicious" if u.behavior in EXPECTED_MALICIOUS else "expected_honest"
        confusion[side][u.verdict.value] += 1

    tp = confusion["expected_malicious"][Verdict.MALICIOUS.value]
    fp = confusion["expected_honest"][Verdict.MALICIOUS.value]
    expected_bad = sum(confusion["expected_malicious"].values())
    expected_good = sum(confusion["expected_honest"].values())
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / expected_bad if expected_bad else 0.0
    fpr = fp / expected_good if expected_good else 0.0

    return SimulationResult(
        scenario=cfg.echo(schema),
        users=users,
        per_type=per_type,
        confusion=confusion,
        precision=precision,
        recall=recall,
        false_positive_rate=fpr,
        windows=windows,
    )


# --- canned experiments ------------------------------------------------------


def table1_experiment(
    cohort_size: int = 10, seed: int = 0
) -> tuple[list[dict], SimulationResult]:
    """Five-behavior benchmark: ``cohort_size`` users of every type in one
    region and one period, ground truth at the middle option. Returns one
    summary row per behavior type plus the full result."""
    if cohort_size < 1:
        raise InvalidScenario("cohort_size must be >= 1")
    cfg = ScenarioConfig(
        seed=seed,
        counts={b: cohort_size for b in BEHAVIOR_ORDER},
        regions=1,
        periods=1,
    )
    result = run_scenario(cfg)
    total = len(result.scenario["truth"])
    rows = []
    for i, behavior in enumerate(BEHAVIOR_ORDER, start=1):
        stats = result.per_type[behavior.value]
        expected = (
            Verdict.MALICIOUS.value
            if behavior in EXPECTED_MALICIOUS
            else Verdict.NON_MALICIOUS.value
        )
        rows.append(
            {
                "user": f"User{i}",
                "user_type": behavior.value,
                "valid_answers": f"{stats['mean_valid']:.1f}",
                "total_questions": total,
                "participation_type": stats["modal_verdict"],
                "expected_participation_type": expected,
            }
        )
    return rows, result


TABLE1_COLUMNS = [
    "user",
    "user_type",
    "valid_answers",
    "total_questions",
    "participation_type",
    "expected_participation_type",
]


def table1_csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=TABLE1_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def uniform_schema(questions: int = 15, option_count: int = 10) -> QuestionnaireSchema:
    """Synthetic schema for experiments: all-scored, one option count."""
    cats = list(Category)
    specs = tuple(
        QuestionSpec(
            id=i,
            category=cats[(i - 1) % len(cats)],
            kind=QuestionKind.SCORED,
            text=f"synthetic question {i}",
            option_count=option_count,
            option_labels=tuple(str(k) for k in range(1, option_count + 1)),
        )
        for i in range(1, questions + 1)
    )
    return QuestionnaireSchema(version=f"uniform-{questions}x{option_count}", questions=specs)


def planted_deviant_window(
    honest: int = 9,
    majority_option: int = 5,
    deviant_option: int = 10,
    questions: int = 15,
    option_count: int = 10,
) -> DetectionWindow:
    """Hand-built window: ``honest`` users all answering one option on every
    question plus a single user answering another. Useful as a worked example
    with closed-form statistics."""
    schema = uniform_schema(questions, option_count)
    reports: dict[str, list[Report]] = {}
    for i in range(honest):
        uid = f"honest{i:02d}"
        reports[uid] = [
            Report(
                report_id=f"{uid}-r0",
                user_id=uid,
                latitude=0.5,
                longitude=0.5,
                timestamp=0,
                answers=tuple(Chosen(majority_option) for _ in range(questions)),
            )
        ]
    reports["deviant"] = [
        Report(
            report_id="deviant-r0",
            user_id="deviant",
            latitude=0.5,
            longitude=0.5,
            timestamp=0,
            answers=tuple(Chosen(deviant_option) for _ in range(questions)),
        )
    ]
    return run_detection(build_window(0, 0, reports, schema))


def sweep(cells: list[dict], default_seed: int = 0) -> list[dict]:
    """Evaluate detection quality over a grid of scenario shapes.

    Each cell is {"users": int, "honest_fraction": float, "option_count": int,
    optional "seed"}; honest users split between Accurate and NormalLow, the
    rest round-robin over the adversarial types. One metrics row per cell.
    """
    rows = []
    for cell in cells:
        users = int(cell["users"])
        honest_fraction = float(cell["honest_fraction"])
        option_count = int(cell["option_count"])
        seed = int(cell.get("seed", default_seed))
        honest = round(users * honest_fraction)
        adversarial = users - honest
        counts = {
            Behavior.ACCURATE: (honest + 1) // 2,
            Behavior.NORMAL_LOW: honest // 2,
            Behavior.RANDOM: 0,
            Behavior.PATTERN: 0,
            Behavior.NORMAL_HIGH: 0,
        }
        adversarial_order = [Behavior.RANDOM, Behavior.PATTERN, Behavior.NORMAL_HIGH]
        for i in range(adversarial):
            counts[adversarial_order[i % 3]] += 1
        cfg = ScenarioConfig(
            seed=seed,
            counts=counts,
            schema=uniform_schema(15, option_count),
        )
        result = run_scenario(cfg)
        flagged_honest = sum(
            1
            for u in result.users
            if u.behavior not in EXPECTED_MALICIOUS and u.verdict is Verdict.MALICIOUS
        )
        flagged_adversarial = sum(
            1
            for u in result.users
            if u.behavior in EXPECTED_MALICIOUS and u.verdict is Verdict.MALICIOUS
        )
        rows.append(
            {
                "users": users,
                "honest_fraction": honest_fraction,
                "option_count": option_count,
                "seed": seed,
                "precision": result.precision,
                "recall": result.recall,
                "false_positive_rate": result.false_positive_rate,
                "flagged_honest": flagged_honest,
                "flagged_adversarial": flagged_adversarial,
            }
        )
    return rows


SWEEP_COLUMNS = [
    "users",
    "honest_fraction",
    "option_count",
    "seed",
    "precision",
    "recall",
    "false_positive_rate",
    "flagged_honest",
    "flagged_adversarial",
]


def sweep_csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def write_outputs(
    result: SimulationResult, out_dir: str | Path, table1_rows: list[dict] | None = None
) -> list[Path]:
    """Write users.csv and summary.json (plus table1.csv for the preset).
    Returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    users_csv = out / "users.csv"
    users_csv.write_text(result.to_csv_text(), encoding="utf-8")
    written.append(users_csv)
    summary = out / "summary.json"
    summary.write_text(result.to_json_text() + "\n", encoding="utf-8")
    written.append(summary)
    if table1_rows is not None:
        table = out / "table1.csv"
        table.write_text(table1_csv_text(table1_rows), encoding="utf-8")
        written.append(table)
    return written
