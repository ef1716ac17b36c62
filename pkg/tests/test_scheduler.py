import json
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chronostim.errors import ConfigurationError, InputError
from chronostim.scheduler import (BOOST_PROGRAM, DAY_PROGRAM, NIGHT_PROGRAM, SLEEP_PROGRAM, Activity,
                                  AdaptiveConfig, Cause, ClockSchedule, DeviceMode, ScheduleSegment,
                                  StimProgram, classify_activity, default_schedule, detect_taps, engage_fallback,
                                  initial_state, load_adaptive, load_schedule, parse_hhmm, program_at,
                                  run_decisions, run_schedule, step_state, timeline_to_csv)
from chronostim.telemetry import AccelEvent, AccelTrace, synth_accel

DAY0 = datetime(2021, 1, 1)
CFG = AdaptiveConfig()
SCHED = default_schedule()
A, I = Activity.ACTIVE, Activity.INACTIVE


def at(hhmm, seconds=0):
    return DAY0 + timedelta(seconds=parse_hhmm(hhmm) + seconds)


# -- sensing ------------------------------------------------------------------

def test_classify_constant_window_inactive():
    w = AccelTrace(50.0, np.tile([0.0, 0.0, 1.0], (500, 1)))
    assert classify_activity(w, CFG) is Activity.INACTIVE


def test_classify_walking_active():
    tr = synth_accel([AccelEvent(0, 10, "active")], seed=0)
    mag = np.linalg.norm(tr.samples, axis=1)
    assert np.std(mag) > CFG.activity_stddev_threshold
    assert classify_activity(tr, CFG) is Activity.ACTIVE


def test_classify_threshold_inclusive():
    # |a| alternates 1 +/- d, so its SD is exactly d.
    d = 0.05
    z = np.where(np.arange(500) % 2 == 0, 1 + d, 1 - d)
    w = AccelTrace(50.0, np.column_stack([np.zeros(500), np.zeros(500), z]))
    sd = float(np.std(w.magnitude()))
    assert classify_activity(w, AdaptiveConfig(activity_stddev_threshold=sd)) is Activity.INACTIVE
    assert classify_activity(w, AdaptiveConfig(activity_stddev_threshold=sd * 0.999)) is Activity.ACTIVE


def test_classify_short_window():
    with pytest.raises(InputError):
        classify_activity(AccelTrace(50.0, np.ones((100, 3))), CFG)


def spikes(times_and_g, seconds=10.0):
    z = np.ones(int(seconds * 50))
    for t, g in times_and_g:
        z[int(t * 50)] = g
    return AccelTrace(50.0, np.column_stack([np.zeros_like(z), np.zeros_like(z), z]), DAY0)


def test_tap_detection():
    assert detect_taps(spikes([(3.0, 7.5)]), CFG) == [DAY0 + timedelta(seconds=3)]
    assert detect_taps(spikes([(3.0, 6.0)]), CFG) == []
    assert len(detect_taps(spikes([(3.0, 8.0), (3.5, 8.0)]), CFG)) == 1
    assert len(detect_taps(spikes([(3.0, 8.0), (5.5, 8.0)]), CFG)) == 2
    assert detect_taps(spikes([(3.0, 7.0)]), CFG) == [DAY0 + timedelta(seconds=3)]  # threshold inclusive


def test_tap_axis_configurable():
    tr = spikes([(2.0, 9.0)])
    assert detect_taps(tr, AdaptiveConfig(tap_axis="x")) == []


# -- step_state ---------------------------------------------------------------

def test_night_basal_unchanged_when_active():
    s = initial_state(SCHED, at("23:00"))
    assert s.mode is DeviceMode.BASAL_NIGHT and s.active_program.amplitude == 0.7
    s2, entry = step_state(s, at("23:00", 10), A, False, SCHED, CFG)
    assert entry is None and s2.active_program == NIGHT_PROGRAM


def test_inactivity_enters_sleep_after_four_minutes():
    s = initial_state(SCHED, at("12:00"))
    assert s.active_program.amplitude == 0.5
    entry = None
    for k in range(1, 25):
        s, entry = step_state(s, at("12:00", 10 * k), I, False, SCHED, CFG)
        if k < 24:
            assert entry is None
    assert entry.cause is Cause.INACTIVITY_ELAPSED
    assert s.mode is DeviceMode.SLEEP
    assert (s.active_program.frequency, s.active_program.amplitude) == (13.0, 1.3)
    assert entry.timestamp - at("12:00") == timedelta(minutes=4)


def test_tap_enters_boost_from_any_mode():
    for start, prep in [("12:00", []), ("23:00", []), ("12:00", [I] * 24)]:
        s = initial_state(SCHED, at(start))
        k = 0
        for act in prep:
            k += 1
            s, _ = step_state(s, at(start, 10 * k), act, False, SCHED, CFG)
        s, entry = step_state(s, at(start, 10 * (k + 1)), A, True, SCHED, CFG)
        assert s.mode is DeviceMode.BOOST and entry.cause is Cause.TAP
        assert s.active_program == BOOST_PROGRAM
        assert (s.active_program.frequency, s.active_program.amplitude, s.active_program.electrode_mode) == \
            (130.0, 1.5, "bipolar")


def test_boost_expires_to_current_resting_mode():
    s = initial_state(SCHED, at("12:00"))
    s, _ = step_state(s, at("12:00", 10), A, True, SCHED, CFG)
    for k in range(2, 7):
        s, e = step_state(s, at("12:00", 10 * k), A, False, SCHED, CFG)
        assert e is None
    s, e = step_state(s, at("12:00", 70), A, False, SCHED, CFG)
    assert e.cause is Cause.BOOST_EXPIRED and s.mode is DeviceMode.BASAL_DAY


def test_tap_during_boost_restarts_timer():
    s = initial_state(SCHED, at("12:00"))
    s, _ = step_state(s, at("12:00", 10), A, True, SCHED, CFG)
    s, e = step_state(s, at("12:00", 50), A, True, SCHED, CFG)
    assert e is None and s.mode_entered_at == at("12:00", 50)
    s, e = step_state(s, at("12:00", 70), A, False, SCHED, CFG)
    assert e is None
    s, e = step_state(s, at("12:00", 110), A, False, SCHED, CFG)
    assert e.cause is Cause.BOOST_EXPIRED


def test_tap_wins_over_inactivity():
    s = initial_state(SCHED, at("12:00"))
    for k in range(1, 24):
        s, _ = step_state(s, at("12:00", 10 * k), I, False, SCHED, CFG)
    s, e = step_state(s, at("12:00", 240), I, True, SCHED, CFG)
    assert e.cause is Cause.TAP and s.mode is DeviceMode.BOOST


def test_time_backwards_rejected():
    s = initial_state(SCHED, at("12:00"))
    s, _ = step_state(s, at("12:00", 20), A, False, SCHED, CFG)
    with pytest.raises(InputError):
        step_state(s, at("12:00", 10), A, False, SCHED, CFG)


def test_sleep_suppressed_at_night_when_configured():
    cfg = AdaptiveConfig(sleep_at_night=False)
    run = run_decisions([I] * 60, [False] * 60, SCHED, cfg, at("22:00"))
    assert len(run.log) == 0


# -- fallback -----------------------------------------------------------------

def test_fallback_from_boost_and_idempotent():
    s = initial_state(SCHED, at("12:00"))
    s, _ = step_state(s, at("12:00", 10), A, True, SCHED, CFG)
    f1 = engage_fallback(s, CFG, at("12:00", 20))
    f2 = engage_fallback(f1, CFG, at("12:00", 30))
    assert f1.mode is DeviceMode.FALLBACK and f1.active_program == CFG.fallback_program
    assert f2 == f1


def test_fallback_from_night_sleep_ignores_schedule():
    s = initial_state(SCHED, at("23:00"))
    for k in range(1, 30):
        s, _ = step_state(s, at("23:00", 10 * k), I, False, SCHED, CFG)
    assert s.mode is DeviceMode.SLEEP
    f = engage_fallback(s, CFG, at("23:10"))
    assert f.active_program == CFG.fallback_program
    for when, act, tap in [(at("23:20"), A, True), (at("23:30"), I, False)]:
        f, e = step_state(f, when, act, tap, SCHED, CFG)
        assert e is None and f.mode is DeviceMode.FALLBACK


# -- runs ---------------------------------------------------------------------

def test_all_active_day():
    run = run_schedule(None, SCHED, CFG, DAY0, 86400.0)
    assert [(e.timestamp, e.to_mode, e.program.amplitude) for e in run.log] == [
        (at("07:00"), DeviceMode.BASAL_DAY, 0.5), (at("21:00"), DeviceMode.BASAL_NIGHT, 0.7)]
    assert all(e.cause is Cause.SCHEDULE_BOUNDARY for e in run.log)
    assert program_at(run.timeline, at("12:00")).program == DAY_PROGRAM
    assert program_at(run.timeline, at("03:00")).program == NIGHT_PROGRAM


def test_nap_hand_traced():
    # Active 0-2 h, inactive 2 h-2 h 30, active after. Start at 10:00 (day).
    start = at("10:00")
    events = [AccelEvent(0, 7200, "active"), AccelEvent(7200, 9000, "inactive"), AccelEvent(9000, 10800, "active")]
    run = run_schedule(synth_accel(events, seed=3, start_time=start), SCHED, CFG, start, 10800.0)
    assert [(e.cause, e.to_mode) for e in run.log] == [(Cause.INACTIVITY_ELAPSED, DeviceMode.SLEEP),
                                                       (Cause.ACTIVITY_RESUMED, DeviceMode.BASAL_DAY)]
    # first inactive window is [2 h, 2 h + 10 s); four minutes later the decision fires
    assert run.log[0].timestamp == start + timedelta(seconds=7200 + 240)
    assert run.log[1].timestamp == start + timedelta(seconds=9010)
    assert run.log[0].program == SLEEP_PROGRAM


def test_zero_duration():
    run = run_schedule(None, SCHED, CFG, DAY0, 0.0)
    assert len(run.log) == 0 and len(run.timeline) == 1


def test_accel_must_cover_span():
    tr = synth_accel([AccelEvent(0, 60, "active")], start_time=DAY0)
    with pytest.raises(InputError):
        run_schedule(tr, SCHED, CFG, DAY0, 120.0)


def test_fallback_absorbs_run():
    acts = [A] * 100 + [I] * 100
    taps = [False] * 200
    taps[150] = True
    run = run_decisions(acts, taps, SCHED, CFG, at("12:00"), fallback_at=at("12:00", 500))
    assert run.log[-1].cause is Cause.FALLBACK_ENGAGED
    assert all(e.timestamp <= at("12:00", 500) for e in run.log)


def test_determinism():
    tr = synth_accel([AccelEvent(0, 1800, "inactive"), AccelEvent(900, 900, "tap", 8.0)], seed=9, start_time=DAY0)
    a = run_schedule(tr, SCHED, CFG, DAY0, 1800.0)
    b = run_schedule(tr, SCHED, CFG, DAY0, 1800.0)
    assert a.log.to_csv() == b.log.to_csv() and timeline_to_csv(a.timeline) == timeline_to_csv(b.timeline)


@settings(max_examples=60, deadline=None)
@given(seq=st.lists(st.tuples(st.sampled_from([A, I, I, I]), st.integers(0, 30)), min_size=1, max_size=500),
       start_h=st.integers(0, 23))
def test_state_machine_invariants(seq, start_h):
    acts = [a for a, _ in seq]
    taps = [r == 0 for _, r in seq]  # roughly one tap in 30 windows
    start = DAY0 + timedelta(hours=start_h)
    run = run_decisions(acts, taps, SCHED, CFG, start)
    period = timedelta(seconds=CFG.activity_window)
    log = list(run.log)

    for prev, e in zip(log, log[1:]):
        assert prev.timestamp <= e.timestamp
        assert (prev.to_mode, prev.program) != (e.to_mode, e.program)
    for e in log:
        if e.to_mode is DeviceMode.BOOST:
            assert e.cause is Cause.TAP
    # timeline programs are those of the mode in force
    for t in run.timeline:
        if t.mode is DeviceMode.SLEEP:
            assert t.program == SLEEP_PROGRAM
        elif t.mode is DeviceMode.BOOST:
            assert t.program == BOOST_PROGRAM
        else:
            assert t.program == SCHED.segment_at(t.timestamp).program
    # sleep latency relative to the start of the inactivity run
    for e in log:
        if e.to_mode is DeviceMode.SLEEP and e.cause is Cause.INACTIVITY_ELAPSED:
            k = round((e.timestamp - start) / period)  # decision index, 1-based
            j = k
            while j >= 1 and acts[j - 1] is I:
                j -= 1
            run_start = start + j * period  # start of the first inactive window
            latency = (e.timestamp - run_start).total_seconds()
            assert CFG.inactivity_seconds <= latency + 1e-9
            # a boost or the sleep window opening can only delay entry; a plain run fires on time
            if not any(taps[j:k]):
                assert latency <= CFG.inactivity_seconds + CFG.activity_window
    # boost dwell bound, measured from the last tap
    for i, e in enumerate(log):
        if e.to_mode is DeviceMode.BOOST:
            end = log[i + 1].timestamp if i + 1 < len(log) else None
            if end is not None:
                k_end = round((end - start) / period)
                k_last = max(k for k in range(1, k_end + 1) if taps[k - 1])
                dwell_from_tap = (end - (start + k_last * period)).total_seconds()
                assert dwell_from_tap <= CFG.boost_duration + CFG.activity_window


# -- config files -------------------------------------------------------------

def test_schedule_and_config_json(tmp_path):
    (tmp_path / "s.json").write_text(json.dumps(SCHED.to_dict()))
    assert load_schedule(tmp_path / "s.json") == SCHED
    (tmp_path / "a.json").write_text(json.dumps(CFG.to_dict()))
    assert load_adaptive(tmp_path / "a.json") == CFG
    assert SCHED.to_dict()["segments"][0]["program"]["amplitude_ma"] == 0.5


def test_config_validation():
    with pytest.raises(ConfigurationError):
        AdaptiveConfig(inactivity_minutes=0)
    with pytest.raises(ConfigurationError):
        AdaptiveConfig(tap_axis="w")
    with pytest.raises(ConfigurationError):
        AdaptiveConfig.from_dict({"inactivity_mins": 3})
    with pytest.raises(ConfigurationError):
        ClockSchedule(())
    with pytest.raises(ConfigurationError):
        ClockSchedule((ScheduleSegment(3600, DAY_PROGRAM), ScheduleSegment(60, NIGHT_PROGRAM, "night")))
    with pytest.raises(ConfigurationError):
        StimProgram(13, 350, -1)
    with pytest.raises(ConfigurationError):
        ClockSchedule.from_dict({"segments": [{"start": "07:00"}]})
    with pytest.raises(ConfigurationError):
        parse_hhmm("25:00")


def test_schedule_wraps_midnight():
    s = ClockSchedule((ScheduleSegment(parse_hhmm("06:00"), DAY_PROGRAM),
                       ScheduleSegment(parse_hhmm("22:00"), NIGHT_PROGRAM, "night")))
    assert s.segment_at(at("03:00")).program == NIGHT_PROGRAM
    assert s.segment_at(at("06:00")).program == DAY_PROGRAM
