"""Synthetic field-potential and accelerometer traces, and their spectra.

The LFP generator is a sum of sinusoids on top of 1/f^alpha noise; the
accelerometer generator renders labelled intervals (inactive, active, tap)
as three-axis samples in g. Spectral estimation is Welch's method with a
Hann window.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

import numpy as np
from scipy import signal

from .errors import ConfigurationError, InputError
from .streams import substream

DEFAULT_LFP_RATE = 250.0
DEFAULT_ACCEL_RATE = 50.0
GRAVITY_G = 1.0
EPOCH = datetime(2021, 1, 1)


@dataclass(frozen=True)
class TimeSeries:
    sample_rate: float
    samples: np.ndarray
    start_time: datetime = EPOCH

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ConfigurationError("sample rate must be positive")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.sample_rate


@dataclass(frozen=True)
class SyntheticLfpSpec:
    state_label: str
    components: tuple[tuple[float, float], ...] = ()  # (Hz, amplitude)
    noise_exponent: float = 1.0
    noise_gain: float = 0.3


LFP_PRESETS = {
    # Restful alert state: dominant ~13 Hz thalamocortical rhythm.
    "restful": SyntheticLfpSpec("restful", ((13.0, 1.0),), noise_exponent=1.0, noise_gain=0.4),
    "active": SyntheticLfpSpec("active", ((13.0, 0.4), (20.0, 0.3)), noise_exponent=1.0, noise_gain=0.5),
    # Seizure: large 2 Hz rhythm with a weak harmonic.
    "seizure": SyntheticLfpSpec("seizure", ((2.0, 3.0), (4.0, 0.6)), noise_exponent=1.0, noise_gain=0.5),
}


def powerlaw_noise(n: int, sample_rate: float, exponent: float, rng: np.random.Generator,
                   corner_hz: float = 1.0) -> np.ndarray:
    """Zero-mean, unit-variance noise with power ~ 1/f^exponent above ``corner_hz``.

    The spectrum is flat below the corner so the variance is not dominated by
    the few lowest FFT bins.
    """
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    scale = np.zeros_like(f)
    scale[1:] = np.maximum(f[1:], corner_hz) ** (-exponent / 2.0)
    noise = np.fft.irfft(spectrum * scale, n=n)
    sd = noise.std()
    return noise / sd if sd > 0 else noise


def synth_lfp(spec: SyntheticLfpSpec, duration: float, sample_rate: float = DEFAULT_LFP_RATE,
              seed: int = 0, start_time: datetime = EPOCH) -> TimeSeries:
    if not duration > 0:
        raise ConfigurationError("duration must be positive")
    nyquist = sample_rate / 2.0
    for freq, _ in spec.components:
        if not 0 < freq < nyquist:
            raise ConfigurationError(f"component at {freq} Hz is outside (0, {nyquist}) Hz")
    n = int(round(duration * sample_rate))
    rng = substream(seed, 0)
    t = np.arange(n) / sample_rate
    x = np.zeros(n)
    phases = rng.uniform(0, 2 * np.pi, size=len(spec.components))
    for (freq, amp), ph in zip(spec.components, phases):
        x += amp * np.sin(2 * np.pi * freq * t + ph)
    if spec.noise_gain:
        x += spec.noise_gain * powerlaw_noise(n, sample_rate, spec.noise_exponent, substream(seed, 1))
    return TimeSeries(sample_rate, x, start_time)


@dataclass(frozen=True)
class PowerSpectrum:
    freqs: np.ndarray
    power: np.ndarray
    resolution: float

    def total_power(self) -> float:
        return float(self.power.sum() * self.resolution)

    def band_slice(self, band: Sequence[float]) -> np.ndarray:
        lo, hi = band
        return (self.freqs >= lo) & (self.freqs <= hi)


def welch_psd(ts: TimeSeries, segment_length: int = 512, overlap_fraction: float = 0.5) -> PowerSpectrum:
    """One-sided Welch PSD (Hann window), units^2 / Hz.

    Segments are mean-removed before windowing so the DC level cannot leak
    into neighbouring bins; the removed mean power is then placed in the DC
    bin. The spectrum therefore integrates to the mean square of the series,
    which is its variance for zero-mean signals.
    """
    x = ts.samples
    if segment_length < 2 or len(x) < segment_length:
        raise InputError(f"series of {len(x)} samples is shorter than one {segment_length}-sample segment")
    if not 0 <= overlap_fraction < 1:
        raise ConfigurationError("overlap fraction must be in [0, 1)")
    noverlap = int(overlap_fraction * segment_length)
    freqs, power = signal.welch(x, fs=ts.sample_rate, window="hann", nperseg=segment_length,
                                noverlap=noverlap, detrend="constant", return_onesided=True,
                                scaling="density", average="mean")
    resolution = ts.sample_rate / segment_length
    power = power.copy()
    power[0] += float(np.mean(x)) ** 2 / resolution
    return PowerSpectrum(freqs, power, resolution)


def dominant_peaks(ps: PowerSpectrum, band: Sequence[float], min_prominence_ratio: float = 3.0,
                   median_halfwidth_hz: float = 4.0) -> list[tuple[float, float]]:
    """Local maxima in ``band`` standing ``min_prominence_ratio`` above the local median.

    The local median is taken over +/- ``median_halfwidth_hz`` around each
    peak. Peaks are returned as (Hz, power), strongest first.
    """
    lo, hi = band
    inside = np.flatnonzero(ps.band_slice(band))
    if not lo < hi or inside.size == 0:
        raise InputError(f"band [{lo}, {hi}] Hz contains no spectral bins")
    peaks, _ = signal.find_peaks(ps.power)
    half = max(1, int(round(median_halfwidth_hz / ps.resolution)))
    out = []
    for k in peaks:
        if not lo <= ps.freqs[k] <= hi:
            continue
        neighbourhood = ps.power[max(0, k - half): k + half + 1]
        median = float(np.median(neighbourhood))
        if ps.power[k] > min_prominence_ratio * median:
            out.append((float(ps.freqs[k]), float(ps.power[k])))
    out.sort(key=lambda fp: -fp[1])
    return out


# -- accelerometer ------------------------------------------------------------

@dataclass(frozen=True)
class AccelTrace:
    sample_rate: float
    samples: np.ndarray  # (n, 3) in g
    start_time: datetime = EPOCH

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ConfigurationError("sample rate must be positive")
        samples = np.asarray(self.samples, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.sample_rate

    def magnitude(self) -> np.ndarray:
        return np.linalg.norm(self.samples, axis=1)

    def window(self, t0: float, t1: float) -> "AccelTrace":
        """Samples with time in [t0, t1) seconds from start."""
        i0 = max(0, int(np.ceil(t0 * self.sample_rate - 1e-9)))
        i1 = max(i0, int(np.ceil(t1 * self.sample_rate - 1e-9)))
        return AccelTrace(self.sample_rate, self.samples[i0:i1], self.start_time)


@dataclass(frozen=True)
class AccelEvent:
    start: float  # s from trace start
    end: float
    kind: str  # "inactive" | "active" | "tap"
    magnitude_g: float = 0.0

    def __post_init__(self):
        if self.kind not in ("inactive", "active", "tap"):
            raise ConfigurationError(f"unknown accelerometer event kind {self.kind!r}")
        if self.end < self.start:
            raise InputError("event ends before it starts")


INACTIVE_NOISE_G = 0.005
WALK_AMPLITUDE_G = 0.3
WALK_FREQ_HZ = 1.8


def synth_accel(events: Sequence[AccelEvent], sample_rate: float = DEFAULT_ACCEL_RATE, seed: int = 0,
                start_time: datetime = EPOCH, duration: float | None = None) -> AccelTrace:
    """Render labelled intervals as a three-axis trace.

    Gaps between events are inactive. A tap is a single-sample z-axis spike
    at the event start, drawn on top of whatever surrounds it.
    """
    spans = sorted((e for e in events if e.kind != "tap"), key=lambda e: e.start)
    for a, b in zip(spans, spans[1:]):
        if b.start < a.end:
            raise InputError(f"events overlap: [{a.start}, {a.end}) and [{b.start}, {b.end})")
    if any(e.start < 0 for e in events):
        raise InputError("events must start at t >= 0")
    end = max((e.end for e in events), default=0.0)
    if duration is not None:
        end = duration
    n = int(round(end * sample_rate))
    rng = substream(seed, 2)
    t = np.arange(n) / sample_rate
    xyz = INACTIVE_NOISE_G * rng.standard_normal((n, 3))
    xyz[:, 2] += GRAVITY_G
    for e in spans:
        if e.kind != "active":
            continue
        sel = (t >= e.start) & (t < e.end)
        ph = rng.uniform(0, 2 * np.pi, size=3)
        tt = t[sel]
        # Gait bounce dominates the vertical axis; sway on the others.
        xyz[sel, 2] += WALK_AMPLITUDE_G * np.sin(2 * np.pi * WALK_FREQ_HZ * tt + ph[2])
        xyz[sel, 0] += 0.5 * WALK_AMPLITUDE_G * np.sin(2 * np.pi * WALK_FREQ_HZ / 2 * tt + ph[0])
        xyz[sel, 1] += 0.3 * WALK_AMPLITUDE_G * np.sin(2 * np.pi * 2.7 * tt + ph[1])
    for e in events:
        if e.kind == "tap":
            i = int(round(e.start * sample_rate))
            if i < n:
                xyz[i, 2] = e.magnitude_g
    return AccelTrace(sample_rate, xyz, start_time)


ACCEL_PROFILES = ("all-active", "nap", "tap", "nap-tap")


def accel_profile(name: str, duration: float, tap_g: float = 7.5, nap_at: float = 6 * 3600.0,
                  nap_length: float = 3600.0, tap_at: float = 4 * 3600.0) -> list[AccelEvent]:
    """Labelled events for a named test day; offsets are seconds from the trace start."""
    if name not in ACCEL_PROFILES:
        raise ConfigurationError(f"unknown accelerometer profile {name!r}; choose from {', '.join(ACCEL_PROFILES)}")
    if duration <= 0:
        return []
    events = []
    if "nap" in name and nap_at < duration:
        nap_end = min(nap_at + nap_length, duration)
        events += [AccelEvent(0.0, nap_at, "active"), AccelEvent(nap_at, nap_end, "inactive")]
        if nap_end < duration:
            events.append(AccelEvent(nap_end, duration, "active"))
    else:
        events.append(AccelEvent(0.0, duration, "active"))
    if "tap" in name and tap_at < duration:
        events.append(AccelEvent(tap_at, tap_at, "tap", tap_g))
    return events


# -- trace files --------------------------------------------------------------

def lfp_to_csv(ts: TimeSeries) -> str:
    buf = io.StringIO()
    buf.write("t,v\n")
    for t, v in zip(ts.times, ts.samples):
        buf.write(f"{t:.9g},{v:.9g}\n")
    return buf.getvalue()


def accel_to_csv(trace: AccelTrace) -> str:
    buf = io.StringIO()
    buf.write("t,x,y,z\n")
    for t, (x, y, z) in zip(trace.times, trace.samples):
        buf.write(f"{t:.9g},{x:.9g},{y:.9g},{z:.9g}\n")
    return buf.getvalue()


def trace_sidecar(trace, kind: str) -> dict:
    return {"kind": kind, "sample_rate": trace.sample_rate, "start_time": trace.start_time.isoformat()}


def _read_columns(text: str, header: list[str]) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0]] != header:
        raise InputError(f"expected header {','.join(header)}")
    try:
        return np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise InputError(f"non-numeric trace value: {exc}") from None


def _rate_from_times(t: np.ndarray) -> float:
    if len(t) < 2:
        raise InputError("need at least two samples to infer the sample rate")
    return float(1.0 / np.median(np.diff(t)))


def lfp_from_csv(text: str, sidecar: dict | None = None) -> TimeSeries:
    data = _read_columns(text, ["t", "v"])
    rate = sidecar["sample_rate"] if sidecar else _rate_from_times(data[:, 0])
    start = datetime.fromisoformat(sidecar["start_time"]) if sidecar else EPOCH
    return TimeSeries(rate, data[:, 1], start)


def accel_from_csv(text: str, sidecar: dict | None = None) -> AccelTrace:
    data = _read_columns(text, ["t", "x", "y", "z"])
    rate = sidecar["sample_rate"] if sidecar else _rate_from_times(data[:, 0])
    start = datetime.fromisoformat(sidecar["start_time"]) if sidecar else EPOCH
    return AccelTrace(rate, data[:, 1:], start)


def write_trace(trace, csv_path, json_path=None) -> None:
    kind = "accel" if isinstance(trace, AccelTrace) else "lfp"
    with open(csv_path, "w", newline="") as fh:
        fh.write(accel_to_csv(trace) if kind == "accel" else lfp_to_csv(trace))
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(trace_sidecar(trace, kind), fh, indent=2, sort_keys=True)
            fh.write("\n")
