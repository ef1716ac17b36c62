"""Summarise a seizure diary into occurrence periods and test a therapy change.

Seizures closer together than the gap threshold (24 h by default) form one
period. A period with a single seizure is isolated; more than one makes a
cluster. Splitting the diary at the therapy change date compares seizures per
period before and after.

Run:  python3 demos/04_diary_statistics.py
"""

from datetime import timedelta

from chronostim.diary import compare_epochs, group_periods, interruption_rate, parse_diary
from chronostim.harness import POLICY_PRESETS, SeizureModelConfig, simulate_days

# Eight weeks with the clock schedule alone, then eight weeks with carer taps.
model = SeizureModelConfig(base_rate=0.5, cluster_gain=8.0)
before = POLICY_PRESETS["neutral"]
after = POLICY_PRESETS["chronotherapy"]
r1 = simulate_days(56, before.model(model), before.schedule, before.adaptive, before.tap_policy, seed=11)
r2 = simulate_days(56, after.model(model), after.schedule, after.adaptive, after.tap_policy, seed=12,
                   start=r1.start + timedelta(days=56))

# Round-trip through the diary CSV, as a carer's spreadsheet would arrive.
events = parse_diary(r1.to_diary_csv()) + parse_diary(r2.to_diary_csv())
split = r2.start

for p in group_periods(events)[:6]:
    print(f"{p.start:%Y-%m-%d %H:%M}  {p.kind}  {p.count} seizure(s) over {p.duration_h:.1f} h")

report = compare_epochs(events, split=split)
print(f"\nperiods before/after: {report.pre.n_periods} / {report.post.n_periods}")
print(f"seizures per period:   {report.pre.seizures_per_period.mean:.2f} / "
      f"{report.post.seizures_per_period.mean:.2f}")
test = report.seizures_test
print(f"one-tailed p (fewer after): {test.p_one_tailed:.3g} ({test.method})")
print(f"interruption rate after: {interruption_rate([e for e in events if e.timestamp >= split]).rate:.2f}")
