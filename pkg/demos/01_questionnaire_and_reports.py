# The core vocabulary: the shipped questionnaire, answer encoding, report
# validation, and how space and time are bucketed into detection windows.

from floodsense import (
    Chosen,
    FreeText,
    PeriodConfig,
    RegionGrid,
    Report,
    SKIPPED,
    default_schema,
    encode_answer,
    period_of,
    region_of,
    validate_report,
)

schema = default_schema()
print(f"questionnaire v{schema.version}: {schema.question_count} questions")
for q in schema.questions:
    scale = f"{q.option_count} options" if q.option_count else "free text"
    print(f"  {q.id:>2} [{q.category.value:<18}] {scale:<10} {q.text}")

# ---- numeric encoding -------------------------------------------------------
# Option k of any scored question becomes the number k; skips and free text
# produce no data element at all.
q1 = schema.question(1)
print("\nencoding on question 1:")
print("  Chosen(1) ->", encode_answer(q1, Chosen(1)))
print("  Chosen(5) ->", encode_answer(q1, Chosen(5)))
print("  Skipped   ->", encode_answer(q1, SKIPPED))

# ---- a complete report ------------------------------------------------------
answers = []
for q in schema.questions:
    if q.kind.value == "Scored":
        answers.append(Chosen((q.option_count + 1) // 2))
    else:
        answers.append(FreeText("the water main broke near the school"))
report = Report(
    report_id="demo-1",
    user_id="resident-17",
    latitude=35.61,
    longitude=59.12,
    timestamp=1_700_000_000,
    answers=tuple(answers),
)
print("\nvalidation issues on a clean report:", validate_report(report, schema))

bad = Report(
    report_id="demo-2",
    user_id="resident-17",
    latitude=35.61,
    longitude=59.12,
    timestamp=1_700_000_000,
    answers=report.answers[:-1],  # one answer short
)
for issue in validate_report(bad, schema):
    print("issue:", issue.code, "-", issue.message)

# ---- regions and periods ----------------------------------------------------
# A disaster area is a uniform grid; every report lands in exactly one cell
# and one clock-aligned period, and detection runs per (cell, period).
grid = RegionGrid.from_spec("35.0,36.0,58.5,60.5,4,8")
periods = PeriodConfig(period_seconds=3600, epoch_origin=1_700_000_000)
print(f"\ngrid: {grid.rows}x{grid.cols} = {grid.region_count} regions")
print("report region:", region_of(report.latitude, report.longitude, grid))
print("report period:", period_of(report.timestamp, periods))
print("one hour later:", period_of(report.timestamp + 3600, periods))
