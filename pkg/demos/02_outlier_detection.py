# The detection core, worked by hand: per-question statistics, the
# two-standard-deviation valid interval, per-user outlier ratios, the
# malicious verdict, and the five-participant gate.

from floodsense import Chosen, Report, run_detection
from floodsense.sim import uniform_schema
from floodsense.trust import build_window, question_stats, valid_interval

schema = uniform_schema(questions=15, option_count=10)

# Nine residents report option 5 on every question; one reports option 10.
def report_for(user_id, option):
    return Report(
        report_id=f"{user_id}-r0",
        user_id=user_id,
        latitude=0.5,
        longitude=0.5,
        timestamp=0,
        answers=tuple(Chosen(option) for _ in range(15)),
    )

reports = {f"honest{i}": [report_for(f"honest{i}", 5)] for i in range(9)}
reports["deviant"] = [report_for("deviant", 10)]

# The window statistics are the same on every question:
values = [5.0] * 9 + [10.0]
mean, std = question_stats(values)
lo, hi = valid_interval(mean, std)
print(f"per-question values: {values}")
print(f"mean={mean}  std={std}  valid interval=[{lo}, {hi}]")
print("10 sits outside the interval; 5 sits inside.\n")

window = run_detection(build_window(region=0, period=0, reports_by_user=reports, schema=schema))
print(f"window executed: {window.executed} ({len(window.rows)} participants)")
for a in window.assessments:
    print(
        f"  {a.user_id:<9} answered={a.answered:>2} outliers={a.outliers:>2} "
        f"ratio={a.ratio:.2f} -> {a.verdict.value}"
    )

# ---- the participation gate --------------------------------------------------
# With fewer than five users the interval is mathematically toothless:
# max |x - mean| <= sqrt(N-1) * std, which stays within 2*std for N <= 5.
small = {uid: reports[uid] for uid in list(reports)[:4]}
gated = run_detection(build_window(0, 1, small, schema))
print(f"\n4-user window executed: {gated.executed} (rows stay unvetted)")

# Even at exactly five participants nothing can be flagged:
five = {uid: reports[uid] for uid in ["honest0", "honest1", "honest2", "honest3", "deviant"]}
at_gate = run_detection(build_window(0, 2, five, schema))
print(f"5-user window executed: {at_gate.executed}")
print("outliers at N=5:", sum(a.outliers for a in at_gate.assessments), "(provably zero)")

# ---- the one-half boundary ----------------------------------------------------
# A user is malicious only when strictly more than half of their answered
# questions are outliers; exactly one half stays acceptable.
for answered, outliers in ((2, 1), (15, 7), (15, 8)):
    ratio = outliers / answered
    verdict = "Malicious" if ratio > 0.5 else "NonMalicious"
    print(f"answered={answered:>2} outliers={outliers:>2} ratio={ratio:.3f} -> {verdict}")
