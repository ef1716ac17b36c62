"""Stochastic seizure process driven by the controller's stimulation timeline.

This is a modelling device for comparing stimulation policies end to end,
not a predictive model of any patient. Seizures follow an inhomogeneous
Poisson process with multiplicative self-excitation::

    rate(t) = base_rate * circadian[hour(t)] * entrainment(program(t)) * (1 + excitation(t))

where each uninterrupted seizure adds ``cluster_gain`` to ``excitation``,
which then decays at ``cluster_decay`` per hour. Events are drawn by
thinning. A carer tap policy can answer a seizure with a boost burst; a
successful interruption cancels that seizure's excitation jump.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from functools import lru_cache
from typing import Sequence

import numpy as np

from .circlemap import CircleMapConfig, initial_phases, iterate_windings, summarize_trials, winding_number
from .diary import (DEFAULT_GAP_HOURS, DiaryEvent, MannWhitneyResult, OccurrencePeriod, diary_to_csv,
                    group_periods, mann_whitney_one_tailed)
from .errors import ConfigurationError
from .scheduler import (Activity, AdaptiveConfig, ClockSchedule, DeviceMode, StimProgram, TimelineEntry,
                        decision_count, default_schedule, parse_hhmm, program_at, run_decisions)
from .streams import subseed, substream
from .telemetry import EPOCH
from .tongues import RationalLock, classify_array, classify_lock, contiguous_runs, default_tolerance

# -- entrainment --------------------------------------------------------------


@dataclass(frozen=True)
class EntrainmentModel:
    """How a stimulation program is mapped onto the circle map.

    ``coupling_per_ma`` converts device amplitude to the dimensionless
    coupling; there is no physiological basis for its value, it is a knob.
    Widths are measured with more pulses than the 50-pulse tongue plots so
    that narrow subharmonic tongues are not inflated by the winding
    resolution 1/N.
    """

    coupling_per_ma: float = 0.5
    max_q: int = 6
    n_pulses: int = 400
    n_trials: int = 20
    narrowness_ratio: float = 0.1
    sweep_steps: int = 201
    seed: int = 0

    def __post_init__(self):
        if not self.coupling_per_ma >= 0:
            raise ConfigurationError("coupling_per_ma must be >= 0")
        if self.max_q < 1 or self.n_pulses < 1 or self.n_trials < 1 or self.sweep_steps < 2:
            raise ConfigurationError("entrainment model sizes must be positive")

    @property
    def tol(self) -> float:
        return default_tolerance(self.n_pulses)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _row_windings(f0: np.ndarray, fs: float, coupling: float, model: EntrainmentModel) -> np.ndarray:
    theta0 = np.stack([initial_phases(model.seed, k, model.n_trials) for k in range(len(f0))])
    per_trial = iterate_windings(theta0, (f0 / fs)[:, None], coupling, model.n_pulses)
    return summarize_trials(per_trial)[0]


def _lock_runs(f0: np.ndarray, windings: np.ndarray, model: EntrainmentModel):
    P, Q = classify_array(windings, model.max_q, model.tol)
    for p, q in sorted({(int(a), int(b)) for a, b in zip(P[Q > 0], Q[Q > 0])}):
        for a, b in contiguous_runs((P == p) & (Q == q)):
            yield RationalLock(p, q), float(f0[a]), float(f0[b]), float(f0[b] - f0[a])


@lru_cache(maxsize=256)
def entrainment_class(program: StimProgram, healthy_f0: float, pathological_band: tuple[float, float],
                      model: EntrainmentModel = EntrainmentModel()) -> str:
    """'harmful', 'protective' or 'neutral' for a program.

    Harmful when some p:q run (q <= max_q) touching the pathological band is
    at least ``narrowness_ratio`` times as wide as the 1:1 tongue at the same
    coupling; protective when the healthy rhythm locks 1:1. Harmful wins.
    """
    coupling = program.amplitude * model.coupling_per_ma
    if coupling == 0:
        return "neutral"
    fs = program.frequency
    lo, hi = pathological_band

    around = np.linspace(0.5 * fs, 1.5 * fs, model.sweep_steps)
    w11 = max((w for lock, _, _, w in _lock_runs(around, _row_windings(around, fs, coupling, model), model)
               if lock == RationalLock(1, 1)), default=0.0)
    pad = 0.5 * (hi - lo)
    band = np.linspace(max(lo - pad, 1e-3), hi + pad, model.sweep_steps)
    harmful = any(b >= lo and a <= hi and w >= model.narrowness_ratio * w11
                  for _, a, b, w in _lock_runs(band, _row_windings(band, fs, coupling, model), model))
    if harmful:
        return "harmful"
    cfg = CircleMapConfig(f0=healthy_f0, fs=fs, coupling=coupling, n_pulses=model.n_pulses,
                          n_trials=model.n_trials, seed=model.seed)
    if classify_lock(winding_number(cfg).mean, model.max_q, model.tol) == RationalLock(1, 1):
        return "protective"
    return "neutral"


def entrainment_factor(program: StimProgram, healthy_f0: float, pathological_band: Sequence[float],
                       model: EntrainmentModel = EntrainmentModel(), protective: float = 0.5,
                       harmful: float = 2.0) -> float:
    cls = entrainment_class(program, float(healthy_f0), tuple(float(b) for b in pathological_band), model)
    return {"harmful": harmful, "protective": protective, "neutral": 1.0}[cls]


# -- configuration ------------------------------------------------------------

# Seizures cluster around sleep: night hours weigh most, daytime least.
DEFAULT_CIRCADIAN = (2.0,) * 6 + (1.5,) + (0.5,) * 6 + (1.0,) * 2 + (0.5,) * 6 + (1.0,) + (2.0,) * 2


@dataclass(frozen=True)
class SeizureModelConfig:
    base_rate: float = 0.15  # events / day
    circadian_profile: tuple[float, ...] = DEFAULT_CIRCADIAN
    cluster_gain: float = 30.0
    cluster_decay: float = 0.5  # 1 / h
    entrainment_protective: float = 0.5
    entrainment_harmful: float = 2.0
    interruption_success_prob: float = 0.64
    healthy_f0: float = 12.0
    pathological_band: tuple[float, float] = (2.0, 3.0)
    entrainment: EntrainmentModel = EntrainmentModel()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "circadian_profile", tuple(float(v) for v in self.circadian_profile))
        object.__setattr__(self, "pathological_band", tuple(float(v) for v in self.pathological_band))
        if not self.base_rate >= 0:
            raise ConfigurationError("base_rate must be >= 0")
        if len(self.circadian_profile) != 24 or min(self.circadian_profile) <= 0:
            raise ConfigurationError("circadian profile needs 24 positive hourly multipliers")
        if self.cluster_gain < 0 or not self.cluster_decay > 0:
            raise ConfigurationError("cluster_gain must be >= 0 and cluster_decay > 0")
        if not (self.entrainment_protective > 0 and self.entrainment_harmful > 0):
            raise ConfigurationError("entrainment multipliers must be positive")
        if not 0 <= self.interruption_success_prob <= 1:
            raise ConfigurationError("interruption_success_prob must be in [0, 1]")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["circadian_profile"] = list(self.circadian_profile)
        d["pathological_band"] = list(self.pathological_band)
        d["entrainment"] = self.entrainment.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SeizureModelConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown seizure model fields: {sorted(unknown)}")
        d = dict(d)
        if "entrainment" in d:
            d["entrainment"] = EntrainmentModel(**d["entrainment"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    def factor(self, program: StimProgram) -> float:
        return entrainment_factor(program, self.healthy_f0, self.pathological_band, self.entrainment,
                                  self.entrainment_protective, self.entrainment_harmful)


@dataclass(frozen=True)
class TapPolicy:
    kind: str = "none"  # "none" | "tap_on_seizure"
    reaction_delay_s: float = 0.0
    notice_prob: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "tap_on_seizure"):
            raise ConfigurationError(f"unknown tap policy {self.kind!r}")
        if self.reaction_delay_s < 0 or not 0 <= self.notice_prob <= 1:
            raise ConfigurationError("bad tap policy parameters")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "reaction_delay_s": self.reaction_delay_s, "notice_prob": self.notice_prob}


@dataclass(frozen=True)
class ActivityProfile:
    """Daily inactive intervals ('HH:MM', 'HH:MM'); active otherwise. Intervals may wrap midnight."""

    inactive: tuple[tuple[str, str], ...] = (("22:00", "06:30"), ("13:00", "14:00"))

    def inactive_mask(self, seconds_of_day: np.ndarray) -> np.ndarray:
        mask = np.zeros(seconds_of_day.shape, dtype=bool)
        for a, b in self.inactive:
            s, e = parse_hhmm(a), parse_hhmm(b)
            if s <= e:
                mask |= (seconds_of_day >= s) & (seconds_of_day < e)
            else:
                mask |= (seconds_of_day >= s) | (seconds_of_day < e)
        return mask

    def decisions(self, start: datetime, n: int, period: float) -> list[Activity]:
        """Activity of each decision window [t - period, t); inactive only if the whole window is."""
        sod0 = start.hour * 3600 + start.minute * 60 + start.second + start.microsecond / 1e6
        w0 = (sod0 + np.arange(n) * period) % 86400.0
        w1 = (w0 + period - 1e-6) % 86400.0
        quiet = self.inactive_mask(w0) & self.inactive_mask(w1)
        return [Activity.INACTIVE if q else Activity.ACTIVE for q in quiet]


@lru_cache(maxsize=32)
def baseline_timeline(schedule: ClockSchedule, adaptive: AdaptiveConfig, activity: ActivityProfile,
                      start: datetime, days: int) -> tuple[TimelineEntry, ...]:
    """Controller timeline with no taps, shared by every replicate of a policy."""
    n = decision_count(days * 86400.0, adaptive.activity_window)
    acts = activity.decisions(start, n, adaptive.activity_window)
    return tuple(run_decisions(acts, [False] * n, schedule, adaptive, start).timeline)


def boost_decision_time(tap_at: datetime, start: datetime, period: float) -> datetime:
    """Decision instant at which a tap is acted on (end of its window)."""
    k = math.floor((tap_at - start).total_seconds() / period + 1e-9) + 1
    return start + timedelta(seconds=k * period)


def overlay_boosts(baseline: Sequence[TimelineEntry], boost_starts: Sequence[datetime],
                   adaptive: AdaptiveConfig, end: datetime | None = None) -> list[TimelineEntry]:
    """Insert boost bursts into a tap-free timeline.

    A tap during a burst restarts the timer, so overlapping bursts merge.
    When a burst ends the controller returns to whatever the tap-free run
    would be doing at that instant.
    """
    dur = timedelta(seconds=adaptive.boost_duration)
    spans: list[list[datetime]] = []
    for b in sorted(boost_starts):
        if spans and b < spans[-1][1]:
            spans[-1][1] = max(spans[-1][1], b + dur)
        else:
            spans.append([b, b + dur])
    out: list[TimelineEntry] = []
    i = 0
    for b0, b1 in spans:
        while i < len(baseline) and baseline[i].timestamp < b0:
            out.append(baseline[i])
            i += 1
        out.append(TimelineEntry(b0, adaptive.boost_program, DeviceMode.BOOST))
        while i < len(baseline) and baseline[i].timestamp <= b1:
            i += 1
        if end is None or b1 <= end:
            resume = program_at(baseline, b1)
            out.append(TimelineEntry(b1, resume.program, resume.mode))
    out.extend(baseline[i:])
    # Drop entries that repeat the program and mode already in force.
    dedup = [out[0]] if out else []
    for e in out[1:]:
        if (e.program, e.mode) != (dedup[-1].program, dedup[-1].mode):
            dedup.append(e)
    return dedup


# -- simulation ---------------------------------------------------------------

@dataclass(frozen=True)
class SeizureRecord:
    timestamp: datetime
    during_mode: DeviceMode
    interruption_attempted: bool
    interruption_success: bool


@dataclass
class SimResult:
    start: datetime
    days: int
    seizures: list[SeizureRecord]
    periods: list[OccurrencePeriod]
    timeline: list[TimelineEntry]
    gap_threshold_h: float = DEFAULT_GAP_HOURS

    @property
    def attempts(self) -> int:
        return sum(s.interruption_attempted for s in self.seizures)

    @property
    def successes(self) -> int:
        return sum(s.interruption_success for s in self.seizures)

    def diary_events(self) -> list[DiaryEvent]:
        return [DiaryEvent(s.timestamp, False, s.interruption_attempted, s.interruption_success, s.during_mode.value)
                for s in self.seizures]

    def to_dict(self) -> dict:
        return {
            "start": self.start.isoformat(),
            "days": self.days,
            "gap_threshold_h": self.gap_threshold_h,
            "attempts": self.attempts,
            "successes": self.successes,
            "seizures": [{"timestamp": s.timestamp.isoformat(), "mode": s.during_mode.value,
                          "interruption_attempted": s.interruption_attempted,
                          "interruption_success": s.interruption_success} for s in self.seizures],
            "periods": [{"start": p.start.isoformat(), "end": p.end.isoformat(), "count": p.count,
                         "duration_h": p.duration_h, "kind": p.kind} for p in self.periods],
            "modes": [{"timestamp": e.timestamp.isoformat(), "mode": e.mode.value, "program_label": e.program.label,
                       "amplitude_ma": e.program.amplitude, "frequency_hz": e.program.frequency}
                      for e in self.timeline],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_diary_csv(self) -> str:
        return diary_to_csv(self.diary_events())


def _timeline_hours(timeline: Sequence[TimelineEntry], start: datetime) -> np.ndarray:
    return np.array([(e.timestamp - start).total_seconds() / 3600.0 for e in timeline])


def simulate_days(days: int, model: SeizureModelConfig = SeizureModelConfig(),
                  schedule: ClockSchedule | None = None, adaptive: AdaptiveConfig = AdaptiveConfig(),
                  carer_tap_policy: TapPolicy = TapPolicy(), seed: int = 0, start: datetime = EPOCH,
                  activity: ActivityProfile = ActivityProfile(),
                  gap_threshold_h: float = DEFAULT_GAP_HOURS) -> SimResult:
    """One replicate of the seizure process over ``days`` days."""
    if int(days) != days or days < 1:
        raise ConfigurationError("days must be an integer >= 1")
    schedule = default_schedule() if schedule is None else schedule
    baseline = baseline_timeline(schedule, adaptive, activity, start, int(days))
    base_hours = _timeline_hours(baseline, start)
    base_factor = np.array([model.factor(e.program) for e in baseline])
    boost_factor = model.factor(adaptive.boost_program)
    circ = np.asarray(model.circadian_profile)

    rng = substream(seed, 7)
    horizon = days * 24.0
    base_h = model.base_rate / 24.0
    top = base_h * circ.max() * max(1.0, model.entrainment_protective, model.entrainment_harmful, boost_factor)
    period = adaptive.activity_window
    boost_len = adaptive.boost_duration / 3600.0

    seizures: list[SeizureRecord] = []
    boosts: list[datetime] = []
    boost_spans: list[tuple[float, float]] = []
    excitation, t_exc = 0.0, 0.0
    t = 0.0
    sod0 = (start - start.replace(hour=0, minute=0, second=0, microsecond=0)).total_seconds() / 3600.0
    while top > 0:
        exc_now = excitation * math.exp(-model.cluster_decay * (t - t_exc))
        bound = top * (1.0 + exc_now)
        t += rng.exponential(1.0 / bound)
        if t > horizon:
            break
        exc_t = excitation * math.exp(-model.cluster_decay * (t - t_exc))
        in_boost = bool(boost_spans) and boost_spans[-1][0] <= t < boost_spans[-1][1]
        if in_boost:
            factor, mode = boost_factor, DeviceMode.BOOST
        else:
            k = int(np.searchsorted(base_hours, t, side="right")) - 1
            factor, mode = base_factor[k], baseline[k].mode
        hour = int((sod0 + t) % 24.0)
        rate = base_h * circ[hour] * factor * (1.0 + exc_t)
        if rng.random() * bound > rate:
            continue
        when = start + timedelta(hours=t)
        attempted = success = False
        if carer_tap_policy.kind == "tap_on_seizure" and rng.random() < carer_tap_policy.notice_prob:
            attempted = True
            success = bool(rng.random() < model.interruption_success_prob)
            b0 = boost_decision_time(when + timedelta(seconds=carer_tap_policy.reaction_delay_s), start, period)
            boosts.append(b0)
            h0 = (b0 - start).total_seconds() / 3600.0
            if boost_spans and h0 < boost_spans[-1][1]:
                boost_spans[-1] = (boost_spans[-1][0], max(boost_spans[-1][1], h0 + boost_len))
            else:
                boost_spans.append((h0, h0 + boost_len))
        seizures.append(SeizureRecord(when, mode, attempted, success))
        excitation, t_exc = exc_t + (0.0 if success else model.cluster_gain), t

    end = start + timedelta(days=int(days))
    timeline = overlay_boosts(baseline, boosts, adaptive, end) if boosts else list(baseline)
    events = [DiaryEvent(s.timestamp, False, s.interruption_attempted, s.interruption_success) for s in seizures]
    return SimResult(start, int(days), seizures, group_periods(events, gap_threshold_h), timeline, gap_threshold_h)


# -- policy comparison --------------------------------------------------------

@dataclass(frozen=True)
class Policy:
    name: str = "policy"
    schedule: ClockSchedule = field(default_factory=default_schedule)
    adaptive: AdaptiveConfig = AdaptiveConfig()
    tap_policy: TapPolicy = TapPolicy()
    model_overrides: tuple[tuple[str, object], ...] = ()

    def model(self, base: SeizureModelConfig) -> SeizureModelConfig:
        return replace(base, **dict(self.model_overrides))

    def to_dict(self) -> dict:
        return {"name": self.name, "schedule": self.schedule.to_dict(), "adaptive": self.adaptive.to_dict(),
                "tap_policy": self.tap_policy.to_dict(), "model_overrides": dict(self.model_overrides)}

    @classmethod
    def from_dict(cls, d: dict) -> "Policy":
        overrides = d.get("model_overrides", {})
        unknown = set(overrides) - set(SeizureModelConfig.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown model overrides: {sorted(unknown)}")
        return cls(name=d.get("name", "policy"),
                   schedule=ClockSchedule.from_dict(d["schedule"]) if "schedule" in d else default_schedule(),
                   adaptive=AdaptiveConfig.from_dict(d.get("adaptive", {})),
                   tap_policy=TapPolicy(**d.get("tap_policy", {})),
                   model_overrides=tuple(sorted(overrides.items())))


def _low_frequency_schedule() -> ClockSchedule:
    sched = default_schedule()
    return ClockSchedule(tuple(replace(s, program=replace(s.program, frequency=2.0, label=s.program.label + "-2hz"))
                               for s in sched.segments))


POLICY_PRESETS = {
    # Clock schedule + inactivity sleep mode + carer taps on every seizure.
    "chronotherapy": Policy("chronotherapy", tap_policy=TapPolicy("tap_on_seizure", reaction_delay_s=30.0)),
    "chronotherapy-no-tap": Policy("chronotherapy-no-tap"),
    # Same controller, entrainment assumed to have no effect.
    "neutral": Policy("neutral", model_overrides=(("entrainment_protective", 1.0),)),
    # Basal programs moved to 2 Hz.
    "low-frequency-2hz": Policy("low-frequency-2hz", schedule=_low_frequency_schedule()),
}


def resolve_policy(name_or_dict) -> Policy:
    if isinstance(name_or_dict, dict):
        return Policy.from_dict(name_or_dict)
    try:
        return POLICY_PRESETS[name_or_dict]
    except KeyError:
        raise ConfigurationError(f"unknown policy {name_or_dict!r}; presets: {sorted(POLICY_PRESETS)}") from None


@dataclass(frozen=True)
class PolicyStats:
    name: str
    seizure_counts: tuple[int, ...]
    period_counts: tuple[int, ...]
    mean_seizures: float
    sd_seizures: float
    mean_periods: float
    sd_periods: float
    mean_seizures_per_period: float
    mean_period_duration_h: float
    attempts: int
    successes: int

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["seizure_counts"] = list(self.seizure_counts)
        d["period_counts"] = list(self.period_counts)
        return d


@dataclass(frozen=True)
class PolicyComparison:
    a: PolicyStats
    b: PolicyStats
    test: MannWhitneyResult
    n_reps: int
    days: int
    seed: int

    def to_dict(self) -> dict:
        return {"policy_a": self.a.to_dict(), "policy_b": self.b.to_dict(), "test": self.test.to_dict(),
                "n_reps": self.n_reps, "days": self.days, "seed": self.seed,
                "metric": "seizures per replicate", "alternative": "policy_a fewer than policy_b"}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _replicate(args):
    policy, model, days, seed, start, activity = args
    r = simulate_days(days, policy.model(model), policy.schedule, policy.adaptive, policy.tap_policy, seed, start,
                      activity)
    durations = [p.duration_h for p in r.periods]
    return len(r.seizures), len(r.periods), durations, r.attempts, r.successes


def _stats(name: str, results) -> PolicyStats:
    counts = np.array([r[0] for r in results], dtype=float)
    periods = np.array([r[1] for r in results], dtype=float)
    durations = [d for r in results for d in r[2]]
    total_periods = periods.sum()
    return PolicyStats(
        name=name,
        seizure_counts=tuple(int(c) for c in counts),
        period_counts=tuple(int(p) for p in periods),
        mean_seizures=float(counts.mean()),
        sd_seizures=float(counts.std(ddof=1)) if len(counts) > 1 else 0.0,
        mean_periods=float(periods.mean()),
        sd_periods=float(periods.std(ddof=1)) if len(periods) > 1 else 0.0,
        mean_seizures_per_period=float(counts.sum() / total_periods) if total_periods else 0.0,
        mean_period_duration_h=float(np.mean(durations)) if durations else 0.0,
        attempts=int(sum(r[3] for r in results)),
        successes=int(sum(r[4] for r in results)),
    )


def compare_policies(policy_a: Policy, policy_b: Policy, n_reps: int, seed: int = 0, days: int = 30,
                     model: SeizureModelConfig = SeizureModelConfig(), start: datetime = EPOCH,
                     activity: ActivityProfile = ActivityProfile(), workers: int = 1) -> PolicyComparison:
    """Run ``n_reps`` independent replicates per policy and test A < B on seizure counts."""
    if n_reps < 2:
        raise ConfigurationError("n_reps must be >= 2")
    tasks = [(pol, model, days, subseed(seed, side, i), start, activity)
             for side, pol in enumerate((policy_a, policy_b)) for i in range(n_reps)]
    # Each worker rebuilds the entrainment and timeline caches, so oversubscribing only adds that cost.
    workers = min(workers, os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_replicate(t) for t in tasks]
    sa, sb = _stats(policy_a.name, results[:n_reps]), _stats(policy_b.name, results[n_reps:])
    test = mann_whitney_one_tailed(sa.seizure_counts, sb.seizure_counts, "x_less")
    return PolicyComparison(sa, sb, test, n_reps, days, seed)
