"""Walk the adaptive controller through a day with a nap and a carer tap.

The clock schedule switches between day and night programs. A long spell of
stillness puts the device into sleep mode, and a firm tap on the implant gives
a one-minute high-frequency boost.

Run:  python3 demos/02_scheduler_day.py
"""

from datetime import datetime, timedelta

from chronostim.scheduler import AdaptiveConfig, default_schedule, run_schedule
from chronostim.telemetry import accel_profile, synth_accel

start = datetime(2021, 6, 1, 6, 0)
duration = 18 * 3600.0

# Nap at 10:00 for an hour, a tap at 14:00.
events = accel_profile("nap-tap", duration, nap_at=4 * 3600.0, tap_at=8 * 3600.0)
trace = synth_accel(events, seed=1, start_time=start, duration=duration)

run = run_schedule(trace, default_schedule(), AdaptiveConfig(), start, duration)

print(f"{'time':<10}{'from':<12}{'to':<12}{'cause':<22}program")
for e in run.log:
    p = e.program
    print(f"{e.timestamp:%H:%M:%S}  {e.from_mode.value:<12}{e.to_mode.value:<12}{e.cause.value:<22}"
          f"{p.frequency:g} Hz, {p.amplitude:g} mA")

minutes = {}
for a, b in zip(run.timeline, run.timeline[1:] + [None]):
    end = b.timestamp if b else start + timedelta(seconds=duration)
    minutes[a.mode.value] = minutes.get(a.mode.value, 0) + (end - a.timestamp).total_seconds() / 60
print("\nMinutes per mode:", {k: round(v) for k, v in minutes.items()})
