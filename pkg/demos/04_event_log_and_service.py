# The whole backend in one process: every accepted write lands in an
# append-only JSONL log, detection fires per closed window, malicious users
# are purged and locked out, and replaying the log reconstructs everything.

import tempfile
from pathlib import Path

from floodsense import UserProfile, aggregate_region, purge_rewrite
from floodsense.service import CrowdServer, ServiceConfig
from floodsense.store import BlacklistedUser, read_events
from floodsense.domain import RegionGrid, default_schema

from conftest_shim import make_report  # small local helper, see below

workdir = Path(tempfile.mkdtemp(prefix="floodsense-demo-"))
log_path = workdir / "events.jsonl"

clock = {"now": 0.0}
config = ServiceConfig(
    log_path=str(log_path),
    grid=RegionGrid(0.0, 2.0, 0.0, 2.0, 2, 2),
    admin_token="demo-token",
)
server = CrowdServer(config, now_fn=lambda: clock["now"])
schema = default_schema()

honest = {q.id: (q.option_count + 1) // 2 for q in schema.scored_questions}
extreme = {q.id: q.option_count for q in schema.scored_questions}

users = [f"resident-{i}" for i in range(9)] + ["troll"]
for uid in users:
    server.register_user(UserProfile(user_id=uid, identity=f"registered {uid}"))
    options = extreme if uid == "troll" else honest
    ack, _ = server.submit_report(
        make_report(schema, uid, options=options, report_id=f"{uid}-p0", ts=100.0)
    )
print("last acknowledgment:", ack)

clock["now"] = 3700.0  # the hour closed; the timer tick runs detection
for summary in server.detect_due():
    flagged = [a["user_id"] for a in summary["assessments"] if a["verdict"] == "Malicious"]
    print(f"window (region={summary['region']}, period={summary['period']}) "
          f"executed={summary['executed']} flagged={flagged}")

print("troll status:", server.user_status("troll")["status"])
try:
    server.submit_report(make_report(schema, "troll", options=honest, report_id="sneak", ts=3800.0))
except BlacklistedUser as err:
    print("resubmission refused:", err)

report = aggregate_region(server.ledger, 0)
q1 = report.questions[0]
print(f"aggregate region 0, question 1: histogram={q1.histogram} mode={q1.mode}")

# ---- the log itself -----------------------------------------------------------
print("\nlog kinds, in order:")
for event in read_events(log_path):
    print(f"  seq={event.seq:<3} {event.kind}")

# ---- replay after a crash ------------------------------------------------------
revived = CrowdServer(config, now_fn=lambda: clock["now"])
same = aggregate_region(revived.ledger, 0).to_json_text() == report.to_json_text()
print("\nreplayed state aggregates identically:", same)

# ---- purge compaction -----------------------------------------------------------
rewritten = workdir / "compacted.jsonl"
tombstones = purge_rewrite(log_path, "troll", rewritten)
print(f"purge_rewrite tombstoned {tombstones} report(s); compacted log at {rewritten}")
