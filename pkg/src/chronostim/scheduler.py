"""Three-layer chronotherapy controller.

Layers, lowest to highest priority:

1. basal stimulation from a 24 h clock schedule (day / night programs),
2. sleep mode, entered after sustained accelerometer inactivity,
3. boost, a short high-frequency burst triggered by a tap on the device.

A fallback program overrides all three and is absorbing. The controller is
evaluated at uniformly spaced decision instants; each instant classifies
the accelerometer window that just ended.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, InputError
from .telemetry import AccelTrace

_EPS = 1e-9


class DeviceMode(str, Enum):
    BASAL_DAY = "BasalDay"
    BASAL_NIGHT = "BasalNight"
    SLEEP = "SleepMode"
    BOOST = "Boost"
    FALLBACK = "Fallback"


class Activity(str, Enum):
    ACTIVE = "Active"
    INACTIVE = "Inactive"


class Cause(str, Enum):
    SCHEDULE_BOUNDARY = "schedule_boundary"
    INACTIVITY_ELAPSED = "inactivity_elapsed"
    ACTIVITY_RESUMED = "activity_resumed"
    TAP = "tap"
    BOOST_EXPIRED = "boost_expired"
    FALLBACK_ENGAGED = "fallback_engaged"


@dataclass(frozen=True)
class StimProgram:
    frequency: float  # Hz
    pulse_width: float  # us
    amplitude: float  # mA
    electrode_mode: str = "monopolar"
    label: str = ""

    def __post_init__(self):
        if not self.frequency > 0:
            raise ConfigurationError(f"program frequency must be positive, got {self.frequency}")
        if not self.pulse_width > 0:
            raise ConfigurationError(f"pulse width must be positive, got {self.pulse_width}")
        if not self.amplitude >= 0:
            raise ConfigurationError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.electrode_mode not in ("bipolar", "monopolar"):
            raise ConfigurationError(f"electrode mode must be bipolar or monopolar, got {self.electrode_mode!r}")

    def to_dict(self) -> dict:
        return {"label": self.label, "frequency_hz": self.frequency, "pulse_width_us": self.pulse_width,
                "amplitude_ma": self.amplitude, "electrode_mode": self.electrode_mode}

    @classmethod
    def from_dict(cls, d: dict) -> "StimProgram":
        try:
            return cls(frequency=float(d["frequency_hz"]), pulse_width=float(d["pulse_width_us"]),
                       amplitude=float(d["amplitude_ma"]), electrode_mode=d.get("electrode_mode", "monopolar"),
                       label=d.get("label", ""))
        except KeyError as exc:
            raise ConfigurationError(f"program is missing {exc.args[0]}") from None


# Settings used on the implanted device.
DAY_PROGRAM = StimProgram(13.0, 350.0, 0.5, label="basal-day")
NIGHT_PROGRAM = StimProgram(13.0, 350.0, 0.7, label="basal-night")
SLEEP_PROGRAM = StimProgram(13.0, 350.0, 1.3, label="sleep")
BOOST_PROGRAM = StimProgram(130.0, 90.0, 1.5, electrode_mode="bipolar", label="boost")
FALLBACK_PROGRAM = StimProgram(13.0, 350.0, 1.3, label="fallback")


def parse_hhmm(text: str) -> int:
    """'HH:MM' (or 'HH:MM:SS') to seconds after midnight."""
    try:
        parts = [int(p) for p in text.split(":")]
    except ValueError:
        raise ConfigurationError(f"bad time of day {text!r}") from None
    if len(parts) not in (2, 3):
        raise ConfigurationError(f"bad time of day {text!r}")
    h, m, s = (parts + [0])[:3]
    if not (0 <= h < 24 and 0 <= m < 60 and 0 <= s < 60):
        raise ConfigurationError(f"bad time of day {text!r}")
    return h * 3600 + m * 60 + s


def format_hhmm(seconds: int) -> str:
    h, rem = divmod(int(seconds), 3600)
    m, s = divmod(rem, 60)
    return f"{h:02d}:{m:02d}" if s == 0 else f"{h:02d}:{m:02d}:{s:02d}"


def seconds_of_day(t: datetime) -> float:
    return t.hour * 3600 + t.minute * 60 + t.second + t.microsecond / 1e6


@dataclass(frozen=True)
class ScheduleSegment:
    start: int  # seconds after midnight
    program: StimProgram
    kind: str = "day"  # "day" | "night"

    def __post_init__(self):
        if self.kind not in ("day", "night"):
            raise ConfigurationError(f"segment kind must be day or night, got {self.kind!r}")
        if not 0 <= self.start < 86400:
            raise ConfigurationError("segment start must fall within one day")

    @property
    def mode(self) -> DeviceMode:
        return DeviceMode.BASAL_DAY if self.kind == "day" else DeviceMode.BASAL_NIGHT


@dataclass(frozen=True)
class ClockSchedule:
    """Basal programs by time of day; the last segment wraps past midnight."""

    segments: tuple[ScheduleSegment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ConfigurationError("schedule needs at least one segment to cover 24 h")
        starts = [s.start for s in self.segments]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigurationError("segment starts must be strictly ascending")

    def segment_at(self, t: datetime) -> ScheduleSegment:
        sod = seconds_of_day(t)
        current = self.segments[-1]
        for seg in self.segments:
            if seg.start <= sod + _EPS:
                current = seg
            else:
                break
        return current

    def to_dict(self) -> dict:
        return {"segments": [{"start": format_hhmm(s.start), "kind": s.kind, "program": s.program.to_dict()}
                             for s in self.segments]}

    @classmethod
    def from_dict(cls, d: dict) -> "ClockSchedule":
        try:
            segs = [ScheduleSegment(parse_hhmm(s["start"]), StimProgram.from_dict(s["program"]), s.get("kind", "day"))
                    for s in d["segments"]]
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed schedule: {exc}") from None
        return cls(tuple(segs))


def default_schedule(day_start: str = "07:00", night_start: str = "21:00") -> ClockSchedule:
    return ClockSchedule((ScheduleSegment(parse_hhmm(day_start), DAY_PROGRAM, "day"),
                          ScheduleSegment(parse_hhmm(night_start), NIGHT_PROGRAM, "night")))


@dataclass(frozen=True)
class AdaptiveConfig:
    inactivity_minutes: float = 4.0
    activity_window: float = 10.0  # s; also the decision period
    activity_stddev_threshold: float = 0.05  # g
    tap_axis: str = "z"
    tap_threshold: float = 7.0  # g
    tap_debounce: float = 2.0  # s
    sleep_program: StimProgram = SLEEP_PROGRAM
    boost_program: StimProgram = BOOST_PROGRAM
    boost_duration: float = 60.0  # s
    fallback_program: StimProgram = FALLBACK_PROGRAM
    sleep_at_night: bool = True

    def __post_init__(self):
        for name in ("inactivity_minutes", "activity_window", "activity_stddev_threshold",
                     "tap_threshold", "boost_duration"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.tap_debounce < 0:
            raise ConfigurationError("tap_debounce must be >= 0")
        if self.tap_axis not in ("x", "y", "z"):
            raise ConfigurationError(f"tap axis must be x, y or z, got {self.tap_axis!r}")

    @property
    def inactivity_seconds(self) -> float:
        return self.inactivity_minutes * 60.0

    def to_dict(self) -> dict:
        return {
            "inactivity_minutes": self.inactivity_minutes,
            "activity_window_s": self.activity_window,
            "activity_stddev_threshold_g": self.activity_stddev_threshold,
            "tap_axis": self.tap_axis,
            "tap_threshold_g": self.tap_threshold,
            "tap_debounce_s": self.tap_debounce,
            "boost_duration_s": self.boost_duration,
            "sleep_at_night": self.sleep_at_night,
            "sleep_program": self.sleep_program.to_dict(),
            "boost_program": self.boost_program.to_dict(),
            "fallback_program": self.fallback_program.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdaptiveConfig":
        keys = {"inactivity_minutes": "inactivity_minutes", "activity_window_s": "activity_window",
                "activity_stddev_threshold_g": "activity_stddev_threshold", "tap_axis": "tap_axis",
                "tap_threshold_g": "tap_threshold", "tap_debounce_s": "tap_debounce",
                "boost_duration_s": "boost_duration", "sleep_at_night": "sleep_at_night"}
        unknown = set(d) - set(keys) - {"sleep_program", "boost_program", "fallback_program"}
        if unknown:
            raise ConfigurationError(f"unknown adaptive config fields: {sorted(unknown)}")
        kwargs = {attr: d[k] for k, attr in keys.items() if k in d}
        for name in ("sleep_program", "boost_program", "fallback_program"):
            if name in d:
                kwargs[name] = StimProgram.from_dict(d[name])
        return cls(**kwargs)


@dataclass(frozen=True)
class DeviceState:
    mode: DeviceMode
    mode_entered_at: datetime
    active_program: StimProgram
    inactivity_since: datetime | None = None
    last_tap_at: datetime | None = None
    updated_at: datetime | None = None


class EventEntry(NamedTuple):
    timestamp: datetime
    from_mode: DeviceMode
    to_mode: DeviceMode
    cause: Cause
    program: StimProgram


@dataclass
class EventLog:
    entries: list[EventEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def append(self, entry: EventEntry) -> None:
        self.entries.append(entry)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["timestamp", "from", "to", "cause", "program_label"])
        for e in self.entries:
            w.writerow([e.timestamp.isoformat(), e.from_mode.value, e.to_mode.value, e.cause.value, e.program.label])
        return buf.getvalue()


class TimelineEntry(NamedTuple):
    timestamp: datetime
    program: StimProgram
    mode: DeviceMode


def timeline_to_csv(timeline: Sequence[TimelineEntry]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp", "mode", "program_label", "frequency_hz", "pulse_width_us", "amplitude_ma",
                "electrode_mode"])
    for t, p, m in timeline:
        w.writerow([t.isoformat(), m.value, p.label, f"{p.frequency:g}", f"{p.pulse_width:g}", f"{p.amplitude:g}",
                    p.electrode_mode])
    return buf.getvalue()


# -- sensing ------------------------------------------------------------------

def classify_activity(window: AccelTrace, config: AdaptiveConfig) -> Activity:
    """Inactive iff the SD of |a| over the window is <= the threshold."""
    need = int(round(config.activity_window * window.sample_rate))
    if len(window.samples) < max(need, 2):
        raise InputError(f"activity window has {len(window.samples)} samples, needs {need}")
    sd = float(np.std(window.magnitude()))
    return Activity.INACTIVE if sd <= config.activity_stddev_threshold else Activity.ACTIVE


def detect_taps(trace: AccelTrace, config: AdaptiveConfig) -> list[datetime]:
    axis = "xyz".index(config.tap_axis)
    hits = np.flatnonzero(trace.samples[:, axis] >= config.tap_threshold)
    taps: list[float] = []
    for i in hits:
        t = i / trace.sample_rate
        if taps and t - taps[-1] < config.tap_debounce:
            continue
        taps.append(t)
    return [trace.start_time + timedelta(seconds=t) for t in taps]


# -- state machine ------------------------------------------------------------

def basal_for(schedule: ClockSchedule, t: datetime) -> tuple[DeviceMode, StimProgram]:
    seg = schedule.segment_at(t)
    return seg.mode, seg.program


def initial_state(schedule: ClockSchedule, start: datetime) -> DeviceState:
    mode, program = basal_for(schedule, start)
    return DeviceState(mode, start, program, updated_at=start)


def _sleep_allowed(schedule: ClockSchedule, now: datetime, config: AdaptiveConfig) -> bool:
    return config.sleep_at_night or schedule.segment_at(now).kind == "day"


def _sleep_due(inactive_since: datetime | None, now: datetime, schedule: ClockSchedule,
               config: AdaptiveConfig) -> bool:
    if inactive_since is None:
        return False
    elapsed = (now - inactive_since).total_seconds()
    return elapsed + _EPS >= config.inactivity_seconds and _sleep_allowed(schedule, now, config)


def step_state(state: DeviceState, now: datetime, activity: Activity, tap: bool,
               schedule: ClockSchedule, config: AdaptiveConfig) -> tuple[DeviceState, EventEntry | None]:
    """Advance the controller to decision instant ``now``.

    ``now`` is the end of the accelerometer window that produced
    ``activity`` and ``tap``. Priority is Boost > SleepMode > Basal; a tap
    during Boost restarts the boost timer; Fallback ignores everything.
    """
    last = state.updated_at or state.mode_entered_at
    if now < last or now < state.mode_entered_at:
        raise InputError(f"time moved backwards: {now.isoformat()} < {last.isoformat()}")
    activity = Activity(activity)

    if activity is Activity.INACTIVE:
        inactive_since = state.inactivity_since or now - timedelta(seconds=config.activity_window)
    else:
        inactive_since = None
    state = replace(state, inactivity_since=inactive_since, updated_at=now,
                    last_tap_at=now if tap else state.last_tap_at)

    def go(mode: DeviceMode, program: StimProgram, cause: Cause):
        if mode is state.mode and program == state.active_program:
            return state, None
        entry = EventEntry(now, state.mode, mode, cause, program)
        return replace(state, mode=mode, mode_entered_at=now, active_program=program), entry

    def resting():
        if activity is Activity.INACTIVE and _sleep_due(inactive_since, now, schedule, config):
            return DeviceMode.SLEEP, config.sleep_program
        return basal_for(schedule, now)

    mode = state.mode
    if mode is DeviceMode.FALLBACK:
        return state, None
    if tap:
        if mode is DeviceMode.BOOST:
            return replace(state, mode_entered_at=now), None
        return go(DeviceMode.BOOST, config.boost_program, Cause.TAP)
    if mode is DeviceMode.BOOST:
        if (now - state.mode_entered_at).total_seconds() + _EPS >= config.boost_duration:
            return go(*resting(), Cause.BOOST_EXPIRED)
        return state, None
    if mode is DeviceMode.SLEEP:
        if activity is Activity.ACTIVE:
            return go(*basal_for(schedule, now), Cause.ACTIVITY_RESUMED)
        if not _sleep_allowed(schedule, now, config):
            return go(*basal_for(schedule, now), Cause.SCHEDULE_BOUNDARY)
        return state, None
    target_mode, target_program = resting()
    if target_mode is DeviceMode.SLEEP:
        return go(target_mode, target_program, Cause.INACTIVITY_ELAPSED)
    return go(target_mode, target_program, Cause.SCHEDULE_BOUNDARY)


def engage_fallback(state: DeviceState, config: AdaptiveConfig, now: datetime) -> DeviceState:
    """Revert to the open-loop fallback program; idempotent."""
    if state.mode is DeviceMode.FALLBACK and state.active_program == config.fallback_program:
        return state
    return replace(state, mode=DeviceMode.FALLBACK, mode_entered_at=now,
                   active_program=config.fallback_program, updated_at=now)


# -- folding over time --------------------------------------------------------

class ScheduleRun(NamedTuple):
    log: EventLog
    timeline: list[TimelineEntry]
    final_state: DeviceState


def decision_count(duration: float, period: float) -> int:
    return int(np.floor(duration / period + _EPS))


def run_decisions(activities: Sequence[Activity], taps: Sequence[bool], schedule: ClockSchedule,
                  config: AdaptiveConfig, start: datetime, fallback_at: datetime | None = None,
                  state: DeviceState | None = None) -> ScheduleRun:
    """Fold :func:`step_state` over pre-classified decision windows.

    Decision k (1-based) happens at ``start + k * activity_window`` using
    ``activities[k-1]`` and ``taps[k-1]``.
    """
    if len(activities) != len(taps):
        raise InputError("activity and tap sequences differ in length")
    state = initial_state(schedule, start) if state is None else state
    log = EventLog()
    timeline = [TimelineEntry(start, state.active_program, state.mode)]
    period = timedelta(seconds=config.activity_window)
    for k, (activity, tap) in enumerate(zip(activities, taps), start=1):
        now = start + k * period
        if fallback_at is not None and now >= fallback_at and state.mode is not DeviceMode.FALLBACK:
            before = state
            state = engage_fallback(state, config, now)
            entry = EventEntry(now, before.mode, state.mode, Cause.FALLBACK_ENGAGED, state.active_program)
        else:
            state, entry = step_state(state, now, activity, tap, schedule, config)
        if entry is not None:
            log.append(entry)
            timeline.append(TimelineEntry(now, entry.program, entry.to_mode))
    return ScheduleRun(log, timeline, state)


def windowed_inputs(accel: AccelTrace | None, config: AdaptiveConfig, start: datetime,
                    n: int) -> tuple[list[Activity], list[bool]]:
    """Activity class and tap flag for each of ``n`` decision windows."""
    if accel is None:
        return [Activity.ACTIVE] * n, [False] * n
    offset = (start - accel.start_time).total_seconds()
    span = offset + n * config.activity_window
    if offset < -_EPS or span > accel.duration + _EPS:
        raise InputError("accelerometer trace does not cover the simulated span")
    tap_times = [(t - accel.start_time).total_seconds() for t in detect_taps(accel, config)]
    activities, taps = [], []
    for k in range(n):
        t0 = offset + k * config.activity_window
        t1 = t0 + config.activity_window
        activities.append(classify_activity(accel.window(t0, t1), config))
        taps.append(any(t0 - _EPS <= t < t1 - _EPS for t in tap_times))
    return activities, taps


def run_schedule(accel: AccelTrace | None, schedule: ClockSchedule, config: AdaptiveConfig,
                 start: datetime, duration: float, fallback_at: datetime | None = None) -> ScheduleRun:
    """Simulate the controller over ``duration`` seconds.

    Without an accelerometer trace the subject is taken to be permanently
    active and never taps.
    """
    if not isinstance(schedule, ClockSchedule) or not schedule.segments:
        raise ConfigurationError("schedule must cover 24 h")
    if duration < 0:
        raise ConfigurationError("duration must be >= 0")
    n = decision_count(duration, config.activity_window)
    activities, taps = windowed_inputs(accel, config, start, n)
    return run_decisions(activities, taps, schedule, config, start, fallback_at)


def program_at(timeline: Sequence[TimelineEntry], t: datetime) -> TimelineEntry:
    """Timeline entry in force at ``t`` (piecewise constant, right-open)."""
    lo, hi = 0, len(timeline)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if timeline[mid].timestamp <= t:
            lo = mid
        else:
            hi = mid
    return timeline[lo]


def load_schedule(path) -> ClockSchedule:
    with open(path) as fh:
        return ClockSchedule.from_dict(json.load(fh))


def load_adaptive(path) -> AdaptiveConfig:
    with open(path) as fh:
        return AdaptiveConfig.from_dict(json.load(fh))
