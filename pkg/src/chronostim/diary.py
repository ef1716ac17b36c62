"""Seizure diaries: parsing, occurrence periods, summaries and rank tests.

A seizure occurrence period is a maximal run of seizures whose consecutive
gaps are shorter than ``gap_threshold_h``. A period with one seizure is an
isolated seizure (IS, duration 0 h); more than one is a cluster (CS).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.stats import norm, rankdata

from .errors import DiaryParseError, DiaryValidationError, InputError

DIARY_HEADER = ["timestamp", "se", "interruption_attempted", "interruption_success", "note"]
DEFAULT_GAP_HOURS = 24.0
EXACT_MAX_TOTAL = 14


@dataclass(frozen=True)
class DiaryEvent:
    timestamp: datetime
    is_status_epilepticus: bool = False
    interruption_attempted: bool = False
    interruption_success: bool = False
    note: str = ""

    def __post_init__(self):
        if self.interruption_success and not self.interruption_attempted:
            raise ValueError("interruption_success requires interruption_attempted")


def _flag(value: str, line: int, name: str) -> bool:
    value = value.strip()
    if value not in ("0", "1"):
        raise DiaryParseError(line, f"{name} must be 0 or 1, got {value!r}")
    return value == "1"


def parse_diary(text: str) -> list[DiaryEvent]:
    """Parse diary CSV; events come back sorted by time (stable for ties)."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DiaryParseError(1, "empty diary") from None
    if [h.strip() for h in header] != DIARY_HEADER:
        raise DiaryParseError(1, f"expected header {','.join(DIARY_HEADER)}")
    events = []
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 4 or len(row) > 5:
            raise DiaryParseError(line, f"expected 5 fields, got {len(row)}")
        try:
            ts = datetime.fromisoformat(row[0].strip())
        except ValueError:
            raise DiaryParseError(line, f"bad timestamp {row[0]!r}") from None
        se = _flag(row[1], line, "se")
        attempted = _flag(row[2], line, "interruption_attempted")
        success = _flag(row[3], line, "interruption_success")
        if success and not attempted:
            raise DiaryValidationError(line, "interruption_success=1 without interruption_attempted")
        events.append(DiaryEvent(ts, se, attempted, success, row[4] if len(row) > 4 else ""))
    events.sort(key=lambda e: e.timestamp)
    return events


def diary_to_csv(events: Sequence[DiaryEvent]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DIARY_HEADER)
    for e in events:
        w.writerow([e.timestamp.isoformat(), int(e.is_status_epilepticus), int(e.interruption_attempted),
                    int(e.interruption_success), e.note])
    return buf.getvalue()


@dataclass(frozen=True)
class OccurrencePeriod:
    events: tuple[DiaryEvent, ...]

    @property
    def start(self) -> datetime:
        return self.events[0].timestamp

    @property
    def end(self) -> datetime:
        return self.events[-1].timestamp

    @property
    def duration_h(self) -> float:
        return (self.end - self.start).total_seconds() / 3600.0

    @property
    def count(self) -> int:
        return len(self.events)

    @property
    def kind(self) -> str:
        return "CS" if self.duration_h > 0 else "IS"


def group_periods(events: Sequence[DiaryEvent], gap_threshold_h: float = DEFAULT_GAP_HOURS) -> list[OccurrencePeriod]:
    if not gap_threshold_h > 0:
        raise InputError("gap threshold must be positive")
    periods: list[list[DiaryEvent]] = []
    for e in events:
        if periods and (e.timestamp - periods[-1][-1].timestamp).total_seconds() / 3600.0 < gap_threshold_h:
            periods[-1].append(e)
        else:
            periods.append([e])
    return [OccurrencePeriod(tuple(p)) for p in periods]


@dataclass(frozen=True)
class Stat:
    mean: float
    sd: float
    min: float
    max: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "Stat":
        a = np.asarray(values, dtype=float)
        sd = float(a.std(ddof=1)) if len(a) > 1 else 0.0
        return cls(float(a.mean()), sd, float(a.min()), float(a.max()))


@dataclass(frozen=True)
class PeriodSummary:
    n_periods: int
    seizures_per_period: Stat
    duration_h: Stat
    sd_defined: bool  # False when n_periods == 1 and the SDs are reported as 0

    def to_dict(self) -> dict:
        return {"n_periods": self.n_periods, "sd_defined": self.sd_defined,
                "seizures_per_period": vars(self.seizures_per_period), "duration_h": vars(self.duration_h)}


def summarize_periods(periods: Sequence[OccurrencePeriod]) -> PeriodSummary:
    """Mean, sample SD (n - 1) and range of seizure counts and durations."""
    if not periods:
        raise InputError("no occurrence periods to summarize")
    return PeriodSummary(len(periods), Stat.of([p.count for p in periods]),
                         Stat.of([p.duration_h for p in periods]), len(periods) > 1)


# -- Mann-Whitney U -----------------------------------------------------------

@dataclass(frozen=True)
class MannWhitneyResult:
    u_x: float
    u_y: float
    p_one_tailed: float
    method: str  # "exact_enumeration" | "normal_approx_tie_corrected"
    alternative: str = "x_less"
    p_exact: Fraction | None = None

    def to_dict(self) -> dict:
        return {"u_x": self.u_x, "u_y": self.u_y, "p_one_tailed": self.p_one_tailed, "method": self.method,
                "alternative": self.alternative}


@lru_cache(maxsize=None)
def _u_counts(n: int, m: int) -> tuple[int, ...]:
    """Number of x/y labelings of n + m distinct values giving each U_x.

    Recurrence on the largest value: it belongs to x (adds m to U_x) or to y.
    """
    if n == 0 or m == 0:
        return (1,)
    with_x = _u_counts(n - 1, m)
    with_y = _u_counts(n, m - 1)
    out = [0] * (n * m + 1)
    for u, c in enumerate(with_x):
        out[u + m] += c
    for u, c in enumerate(with_y):
        out[u] += c
    return tuple(out)


def u_statistics(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, np.ndarray]:
    """U_x = #{x_i > y_j} + 0.5 #{x_i == y_j}, via midranks."""
    n, m = len(x), len(y)
    ranks = rankdata(np.concatenate([np.asarray(x, float), np.asarray(y, float)]))
    u_x = float(ranks[:n].sum() - n * (n + 1) / 2.0)
    return u_x, n * m - u_x, ranks


def mann_whitney_one_tailed(x: Sequence[float], y: Sequence[float], alternative: str = "x_less") -> MannWhitneyResult:
    """One-tailed Mann-Whitney U test.

    Small tie-free samples (n + m <= 14) use the exact null distribution of
    U over all C(n+m, n) labelings; otherwise midranks with a tie-corrected
    normal approximation and continuity correction. When every value is
    tied the statistic carries no information and p is reported as 0.5.
    """
    if alternative not in ("x_less", "x_greater"):
        raise ValueError("alternative must be 'x_less' or 'x_greater'")
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise InputError("both samples must be non-empty")
    u_x, u_y, ranks = u_statistics(x, y)
    tied = len(np.unique(ranks)) < n + m

    if not tied and n + m <= EXACT_MAX_TOTAL:
        counts = _u_counts(n, m)
        total = math.comb(n + m, n)
        k = int(round(u_x))
        tail = sum(counts[: k + 1]) if alternative == "x_less" else sum(counts[k:])
        p = Fraction(tail, total)
        return MannWhitneyResult(u_x, u_y, float(p), "exact_enumeration", alternative, p)

    N = n + m
    _, t = np.unique(ranks, return_counts=True)
    tie_term = float((t ** 3 - t).sum()) / (N * (N - 1)) if N > 1 else 0.0
    var = n * m / 12.0 * ((N + 1) - tie_term)
    if var <= 0:
        p = 0.5
    else:
        mu = n * m / 2.0
        if alternative == "x_less":
            p = float(norm.cdf((u_x - mu + 0.5) / math.sqrt(var)))
        else:
            p = float(norm.sf((u_x - mu - 0.5) / math.sqrt(var)))
    return MannWhitneyResult(u_x, u_y, min(1.0, max(0.0, p)), "normal_approx_tie_corrected", alternative)


# -- interruptions ------------------------------------------------------------

@dataclass(frozen=True)
class InterruptionRate:
    attempts: int
    successes: int
    rate: float | None  # None when there were no attempts

    def to_dict(self) -> dict:
        return {"attempts": self.attempts, "successes": self.successes,
                "rate": "undefined" if self.rate is None else self.rate}


def interruption_rate(events: Sequence[DiaryEvent]) -> InterruptionRate:
    attempts = sum(1 for e in events if e.interruption_attempted)
    successes = sum(1 for e in events if e.interruption_success)
    return InterruptionRate(attempts, successes, successes / attempts if attempts else None)


# -- reports ------------------------------------------------------------------

INSUFFICIENT = "insufficient data"


@dataclass
class EpochComparison:
    """Summaries before/after a split and rank tests on the period metrics."""

    gap_threshold_h: float
    split: datetime | None
    alternative: str
    overall: PeriodSummary
    pre: PeriodSummary | None = None
    post: PeriodSummary | None = None
    seizures_test: MannWhitneyResult | str = INSUFFICIENT
    duration_test: MannWhitneyResult | str = INSUFFICIENT
    interruptions: InterruptionRate | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def t(v):
            return v if isinstance(v, str) else v.to_dict()
        return {
            "gap_threshold_h": self.gap_threshold_h,
            "split": None if self.split is None else self.split.isoformat(),
            "alternative": self.alternative,
            "overall": self.overall.to_dict(),
            "pre": None if self.pre is None else self.pre.to_dict(),
            "post": None if self.post is None else self.post.to_dict(),
            "seizures_per_period_test": t(self.seizures_test),
            "duration_test": t(self.duration_test),
            "interruption_rate": None if self.interruptions is None else self.interruptions.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def compare_epochs(events: Sequence[DiaryEvent], split: datetime | None = None,
                   gap_threshold_h: float = DEFAULT_GAP_HOURS, alternative: str = "x_less") -> EpochComparison:
    """Period statistics overall and, with a split, post- (x) versus pre-split (y).

    Periods are assigned to the epoch containing their first seizure. Tests
    need at least two periods on each side.
    """
    if not events:
        raise InputError("diary has no events")
    periods = group_periods(events, gap_threshold_h)
    report = EpochComparison(gap_threshold_h, split, alternative, summarize_periods(periods),
                             interruptions=interruption_rate(events))
    if split is None:
        return report
    pre = [p for p in periods if p.start < split]
    post = [p for p in periods if p.start >= split]
    if not pre:
        raise InputError("pre-split epoch is empty")
    if not post:
        raise InputError("post-split epoch is empty")
    report.pre, report.post = summarize_periods(pre), summarize_periods(post)
    if len(pre) >= 2 and len(post) >= 2:
        report.seizures_test = mann_whitney_one_tailed([p.count for p in post], [p.count for p in pre], alternative)
        report.duration_test = mann_whitney_one_tailed([p.duration_h for p in post], [p.duration_h for p in pre],
                                                       alternative)
    return report
