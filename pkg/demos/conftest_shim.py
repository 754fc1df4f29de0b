# Shared helper for the demo scripts: build a schema-complete report from a
# per-question option map.

from floodsense import Chosen, Report, SKIPPED
from floodsense.domain import QuestionKind


def make_report(schema, user_id, *, options, report_id, ts, lat=0.5, lon=0.5):
    answers = []
    for q in schema.questions:
        if q.kind is QuestionKind.SCORED and q.id in options:
            answers.append(Chosen(options[q.id]))
        else:
            answers.append(SKIPPED)
    return Report(
        report_id=report_id,
        user_id=user_id,
        latitude=lat,
        longitude=lon,
        timestamp=ts,
        answers=tuple(answers),
    )
