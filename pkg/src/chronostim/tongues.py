"""Arnold-tongue sweeps over the sine circle map.

Two grid views are supported:

* ``fs_vs_amplitude``: fixed natural frequency, x = stimulation frequency,
  y = coupling.
* ``f0_vs_equivalent_amplitude``: fixed stimulation frequency, x = natural
  frequency, y = equivalent amplitude ``I * f0 / f_max``. Each cell is
  simulated with the coupling that produces the requested equivalent
  amplitude at its own ``f0``, so low natural frequencies are driven harder.

Cells are independent and seeded by their flat index, which makes a sweep
reproducible cell by cell and independent of how rows are split across
worker processes.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .circlemap import CircleMapConfig, initial_phases, iterate_windings, summarize_trials, winding_number
from .errors import ConfigurationError


class GridMode(str, Enum):
    FS_VS_AMPLITUDE = "fs_vs_amplitude"
    F0_VS_EQUIVALENT = "f0_vs_equivalent_amplitude"


@dataclass(frozen=True)
class SweepAxis:
    """Uniform axis with inclusive endpoints.

    A single-point axis (``steps == 1`` and ``min == max``) is accepted so a
    grid can be one row or one column wide.
    """

    min: float
    max: float
    steps: int

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigurationError(f"axis steps must be a positive integer, got {self.steps}")
        if self.steps == 1:
            if self.min != self.max:
                raise ConfigurationError("a single-step axis needs min == max")
        elif not self.min < self.max:
            raise ConfigurationError(f"axis needs min < max, got [{self.min}, {self.max}]")

    @property
    def values(self) -> np.ndarray:
        if self.steps == 1:
            return np.array([float(self.min)])
        return np.linspace(self.min, self.max, int(self.steps))

    @property
    def spacing(self) -> float:
        return 0.0 if self.steps == 1 else (self.max - self.min) / (self.steps - 1)

    def to_dict(self) -> dict:
        return {"min": self.min, "max": self.max, "steps": self.steps}


def equivalent_amplitude(coupling: float, f0: float, f_max: float) -> float:
    """Coupling rescaled by ``f0 / f_max`` (compensates 1/f oscillation power)."""
    if not f0 > 0 or not f_max > 0:
        raise ConfigurationError("f0 and f_max must be positive")
    if coupling < 0:
        raise ConfigurationError("coupling must be >= 0")
    return coupling * f0 / f_max


def coupling_from_equivalent(equivalent, f0, f_max):
    """Inverse of :func:`equivalent_amplitude`; works elementwise on arrays."""
    if np.any(np.asarray(f0) <= 0) or np.any(np.asarray(f_max) <= 0):
        raise ConfigurationError("f0 and f_max must be positive")
    return equivalent * f_max / f0


@dataclass(frozen=True)
class TongueGrid:
    mode: GridMode
    x_axis: SweepAxis
    y_axis: SweepAxis
    fixed_frequency: float
    f_max: float | None = None
    sim: CircleMapConfig = field(default_factory=lambda: CircleMapConfig(f0=1.0, fs=1.0))
    winding: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", GridMode(self.mode))
        if not self.fixed_frequency > 0:
            raise ConfigurationError("fixed frequency must be positive")
        if self.x_axis.min <= 0:
            raise ConfigurationError("frequency axis must be strictly positive")
        if self.y_axis.min < 0:
            raise ConfigurationError("amplitude axis must be non-negative")
        if self.mode is GridMode.F0_VS_EQUIVALENT:
            if self.f_max is None:
                object.__setattr__(self, "f_max", float(self.x_axis.max))
            if not self.f_max > 0:
                raise ConfigurationError("f_max must be positive")
        if self.winding is not None and self.winding.shape != self.shape:
            raise ConfigurationError(f"winding matrix shape {self.winding.shape} != {self.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.y_axis.steps), int(self.x_axis.steps))

    @property
    def seed(self) -> int:
        return self.sim.seed

    def parameter_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(f0, fs, coupling) matrices, one entry per cell."""
        X, Y = np.meshgrid(self.x_axis.values, self.y_axis.values)
        if self.mode is GridMode.FS_VS_AMPLITUDE:
            f0 = np.full_like(X, self.fixed_frequency)
            return f0, X, Y
        fs = np.full_like(X, self.fixed_frequency)
        return X, fs, coupling_from_equivalent(Y, X, self.f_max)

    def cell_config(self, row: int, col: int) -> tuple[CircleMapConfig, int]:
        """Standalone config and stream index reproducing one cell."""
        x = float(self.x_axis.values[col])
        y = float(self.y_axis.values[row])
        if self.mode is GridMode.FS_VS_AMPLITUDE:
            cfg = self.sim.with_(f0=float(self.fixed_frequency), fs=x, coupling=y)
        else:
            cfg = self.sim.with_(f0=x, fs=float(self.fixed_frequency),
                                 coupling=float(coupling_from_equivalent(y, x, self.f_max)))
        return cfg, row * self.shape[1] + col

    def spec_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "x_axis": self.x_axis.to_dict(),
            "y_axis": self.y_axis.to_dict(),
            "fixed_frequency": self.fixed_frequency,
            "f_max": self.f_max,
            "n_pulses": self.sim.n_pulses,
            "n_trials": self.sim.n_trials,
            "seed": self.sim.seed,
        }

    @classmethod
    def from_spec(cls, spec: dict) -> "TongueGrid":
        return cls(
            mode=GridMode(spec["mode"]),
            x_axis=SweepAxis(**spec["x_axis"]),
            y_axis=SweepAxis(**spec["y_axis"]),
            fixed_frequency=spec["fixed_frequency"],
            f_max=spec.get("f_max"),
            sim=CircleMapConfig(f0=1.0, fs=1.0, n_pulses=spec.get("n_pulses", 50),
                                n_trials=spec.get("n_trials", 20), seed=spec.get("seed", 0)),
        )


def fs_amplitude_grid(f0: float = 13.0, fs_axis: SweepAxis = SweepAxis(6.0, 30.0, 241),
                      coupling_axis: SweepAxis = SweepAxis(0.0, 1.0, 101),
                      n_pulses: int = 50, n_trials: int = 20, seed: int = 0) -> TongueGrid:
    return TongueGrid(GridMode.FS_VS_AMPLITUDE, fs_axis, coupling_axis, f0,
                      sim=CircleMapConfig(f0=f0, fs=f0, n_pulses=n_pulses, n_trials=n_trials, seed=seed))


def f0_equivalent_grid(fs: float = 13.0, f0_axis: SweepAxis = SweepAxis(1.0, 26.0, 251),
                       equivalent_axis: SweepAxis = SweepAxis(0.0, 1.0, 101), f_max: float | None = None,
                       n_pulses: int = 50, n_trials: int = 20, seed: int = 0) -> TongueGrid:
    return TongueGrid(GridMode.F0_VS_EQUIVALENT, f0_axis, equivalent_axis, fs,
                      f_max=f0_axis.max if f_max is None else f_max,
                      sim=CircleMapConfig(f0=fs, fs=fs, n_pulses=n_pulses, n_trials=n_trials, seed=seed))


def _sweep_rows(grid: TongueGrid, r0: int, r1: int) -> np.ndarray:
    f0, fs, coupling = (a[r0:r1] for a in grid.parameter_arrays())
    ny, nx = f0.shape
    if ny == 0:
        return np.empty((0, nx))
    T = grid.sim.n_trials
    theta0 = np.empty((ny, nx, T))
    for i in range(ny):
        for j in range(nx):
            theta0[i, j] = initial_phases(grid.sim.seed, (r0 + i) * grid.shape[1] + j, T)
    per_trial = iterate_windings(theta0, (f0 / fs)[..., None], coupling[..., None], grid.sim.n_pulses)
    mean, _ = summarize_trials(per_trial)
    return mean


def _row_chunks(n_rows: int, workers: int) -> list[tuple[int, int]]:
    n = max(1, min(workers, n_rows))
    edges = np.linspace(0, n_rows, n + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _sweep_chunk(args):
    grid, r0, r1 = args
    return _sweep_rows(grid, r0, r1)


def sweep(grid: TongueGrid, workers: int = 1) -> TongueGrid:
    """Fill the winding matrix. ``workers > 1`` splits rows across processes."""
    ny, _ = grid.shape
    empty = replace(grid, winding=None)
    chunks = _row_chunks(ny, workers)
    if workers <= 1 or len(chunks) == 1:
        parts = [_sweep_rows(empty, a, b) for a, b in chunks]
    else:
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(_sweep_chunk, [(empty, a, b) for a, b in chunks]))
    return replace(grid, winding=np.vstack(parts))


def cell_winding(grid: TongueGrid, row: int, col: int) -> float:
    cfg, index = grid.cell_config(row, col)
    return winding_number(cfg, cell_index=index).mean


# -- classification -----------------------------------------------------------

@dataclass(frozen=True)
class RationalLock:
    """p oscillator cycles per q stimulation pulses."""

    p: int
    q: int

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ConfigurationError("lock integers must be positive")
        if math.gcd(self.p, self.q) != 1:
            raise ConfigurationError(f"{self.p}:{self.q} is not reduced")

    @property
    def value(self) -> float:
        return self.p / self.q

    def __str__(self):
        return f"{self.p}:{self.q}"


def default_tolerance(n_pulses: int) -> float:
    """Half the winding resolution of an N-pulse estimate."""
    return 1.0 / (2 * n_pulses)


def classify_lock(winding: float, max_q: int = 6, tol: float = 0.01) -> RationalLock | None:
    """Lowest-denominator reduced p/q within ``tol`` of ``winding``.

    Denominators are scanned in increasing order (Farey order); for each q
    only the nearest numerator can win, which also settles ties on equal
    denominators toward the smaller distance.
    """
    if max_q < 1 or not tol > 0:
        raise ConfigurationError("need max_q >= 1 and tol > 0")
    if not math.isfinite(winding):
        return None
    for q in range(1, max_q + 1):
        p = int(np.rint(winding * q))
        if p >= 1 and math.gcd(p, q) == 1 and abs(winding - p / q) <= tol:
            return RationalLock(p, q)
    return None


def classify_array(winding: np.ndarray, max_q: int = 6, tol: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`classify_lock`; returns (p, q) arrays, 0 where unlocked."""
    if max_q < 1 or not tol > 0:
        raise ConfigurationError("need max_q >= 1 and tol > 0")
    w = np.asarray(winding, dtype=float)
    P = np.zeros(w.shape, dtype=int)
    Q = np.zeros(w.shape, dtype=int)
    finite = np.isfinite(w)
    for q in range(1, max_q + 1):
        p = np.where(finite, np.rint(np.where(finite, w, 0.0) * q), 0).astype(int)
        ok = (Q == 0) & finite & (p >= 1) & (np.gcd(p, q) == 1) & (np.abs(w - p / q) <= tol)
        P[ok] = p[ok]
        Q[ok] = q
    return P, Q


def contiguous_runs(mask_row: np.ndarray) -> list[tuple[int, int]]:
    """(first, last) column indices of each run of True values."""
    idx = np.flatnonzero(mask_row)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.r_[idx[0], idx[breaks + 1]]
    ends = np.r_[idx[breaks], idx[-1]]
    return [(int(a), int(b)) for a, b in zip(starts, ends)]


def run_width(x: np.ndarray, run: tuple[int, int]) -> float:
    """Frequency extent between the first and last cell centres of a run.

    A lone cell has zero measurable width: the tongue is narrower than the
    grid resolution.
    """
    return float(x[run[1]] - x[run[0]])


@dataclass
class TongueRegion:
    lock: RationalLock
    cell_mask: np.ndarray
    width_by_row: np.ndarray  # Hz, longest contiguous run per row
    area: int  # cells

    @property
    def rows(self) -> np.ndarray:
        return np.flatnonzero(self.cell_mask.any(axis=1))


def tongue_regions(grid: TongueGrid, max_q: int = 6, tol: float | None = None) -> list[TongueRegion]:
    """Group classified cells into 4-connected regions, largest first."""
    if grid.winding is None:
        raise ConfigurationError("grid has not been swept")
    tol = default_tolerance(grid.sim.n_pulses) if tol is None else tol
    P, Q = classify_array(grid.winding, max_q, tol)
    x = grid.x_axis.values
    regions = []
    for p, q in sorted({(int(p), int(q)) for p, q in zip(P[Q > 0], Q[Q > 0])}):
        labels, n = ndimage.label((P == p) & (Q == q))
        for k in range(1, n + 1):
            mask = labels == k
            widths = np.array([max((run_width(x, r) for r in contiguous_runs(row)), default=0.0)
                               for row in mask])
            regions.append(TongueRegion(RationalLock(p, q), mask, widths, int(mask.sum())))
    regions.sort(key=lambda r: (-r.area, r.lock.q, r.lock.p))
    return regions


def largest_region(regions: Iterable[TongueRegion], lock: RationalLock) -> TongueRegion | None:
    return max((r for r in regions if r.lock == lock), key=lambda r: r.area, default=None)


def row_lock_runs(grid: TongueGrid, row: int, max_q: int = 6, tol: float | None = None
                  ) -> list[tuple[RationalLock, float, float, float]]:
    """Every run of identically classified cells in one row.

    Returns (lock, x_first, x_last, width) tuples in column order.
    """
    tol = default_tolerance(grid.sim.n_pulses) if tol is None else tol
    P, Q = classify_array(grid.winding[row], max_q, tol)
    x = grid.x_axis.values
    out = []
    for p, q in sorted({(int(p), int(q)) for p, q in zip(P[Q > 0], Q[Q > 0])}):
        for run in contiguous_runs((P == p) & (Q == q)):
            out.append((RationalLock(p, q), float(x[run[0]]), float(x[run[1]]), run_width(x, run)))
    out.sort(key=lambda t: t[1])
    return out


# -- stimulation frequency selection -----------------------------------------

@dataclass
class CandidateReport:
    fs: float
    healthy_lock_ok: bool
    one_to_one_width: float
    threshold: float
    offending_locks: list[tuple[RationalLock, float]]
    admissible: bool
    reason: str

    def to_dict(self) -> dict:
        return {"fs_hz": self.fs, "healthy_lock_ok": self.healthy_lock_ok, "one_to_one_width_hz": self.one_to_one_width,
                "threshold_hz": self.threshold, "admissible": self.admissible, "reason": self.reason,
                "in_band_locks": _locks_to_list(self.offending_locks)}


@dataclass
class StimFrequencyChoice:
    chosen_fs: float | None
    healthy_lock_ok: bool
    offending_locks: list[tuple[RationalLock, float]]
    rationale: str
    candidates: list[CandidateReport] = field(default_factory=list)

    @property
    def found(self) -> bool:
        return self.chosen_fs is not None

    def to_dict(self) -> dict:
        return {"chosen_fs_hz": self.chosen_fs, "healthy_lock_ok": self.healthy_lock_ok,
                "offending_locks": _locks_to_list(self.offending_locks), "rationale": self.rationale,
                "candidates": [c.to_dict() for c in self.candidates]}


def _locks_to_list(locks) -> list[dict]:
    return [{"lock": str(lock), "width_hz": w} for lock, w in locks]


def _candidate_values(candidates) -> list[float]:
    if isinstance(candidates, SweepAxis):
        return [float(v) for v in candidates.values]
    return [float(v) for v in candidates]


def evaluate_candidate(fs: float, healthy_peak: float, band: Sequence[float], eval_equiv_amplitude: float,
                       max_q: int = 6, narrowness_ratio: float = 0.1, f_max: float | None = None,
                       f0_resolution: float = 0.1, n_pulses: int = 50, n_trials: int = 20,
                       seed: int = 0, tol: float | None = None) -> CandidateReport:
    """Check one stimulation frequency against the entrainment criteria.

    The natural-frequency row is laid out as in the fixed-fs tongue view:
    ``f_max`` defaults to ``2 * fs`` and the axis runs from
    ``min(1, band_lo / 2)`` to ``f_max`` at ``f0_resolution`` spacing.
    """
    lo, hi = band
    f_max = 2.0 * fs if f_max is None else f_max
    tol = default_tolerance(n_pulses) if tol is None else tol
    f_lo = min(1.0, lo / 2.0)
    steps = int(round((f_max - f_lo) / f0_resolution)) + 1
    row = sweep(f0_equivalent_grid(fs, SweepAxis(f_lo, f_max, steps),
                           SweepAxis(eval_equiv_amplitude, eval_equiv_amplitude, 1),
                           f_max=f_max, n_pulses=n_pulses, n_trials=n_trials, seed=seed))

    healthy_cfg = CircleMapConfig(f0=healthy_peak, fs=fs,
                                  coupling=float(coupling_from_equivalent(eval_equiv_amplitude, healthy_peak, f_max)),
                                  n_pulses=n_pulses, n_trials=n_trials, seed=seed)
    healthy_lock = classify_lock(winding_number(healthy_cfg).mean, max_q, tol)
    healthy_ok = healthy_lock == RationalLock(1, 1)

    runs = row_lock_runs(row, 0, max_q, tol)
    w11 = max((w for lock, _, _, w in runs if lock == RationalLock(1, 1)), default=0.0)
    threshold = narrowness_ratio * w11
    touching = [(lock, w) for lock, a, b, w in runs if b >= lo and a <= hi]
    offending = [(lock, w) for lock, w in touching if not w < threshold]

    reasons = []
    if not healthy_ok:
        got = "unlocked" if healthy_lock is None else str(healthy_lock)
        reasons.append(f"{healthy_peak:g} Hz is {got}, not 1:1")
    if offending:
        reasons.append("locks in band too wide: " + ", ".join(f"{l} ({w:.3g} Hz >= {threshold:.3g} Hz)"
                                                             for l, w in offending))
    return CandidateReport(fs=fs, healthy_lock_ok=healthy_ok, one_to_one_width=w11, threshold=threshold,
                           offending_locks=touching, admissible=healthy_ok and not offending,
                           reason="; ".join(reasons) or "admissible")


def select_stim_frequency(healthy_peak: float, pathological_band: Sequence[float], candidates,
                          eval_equiv_amplitude: float = 0.4, max_q: int = 6, narrowness_ratio: float = 0.1,
                          tuning_target: float | None = None, **kwargs) -> StimFrequencyChoice:
    """Pick the admissible stimulation frequency closest to the tuning target.

    A candidate is admissible when ``healthy_peak`` sits in its 1:1 tongue
    at the evaluation amplitude and every p:q run (q <= max_q) touching the
    pathological band is narrower than ``narrowness_ratio`` times the 1:1
    width of the same row. ``tuning_target`` (the measured dominant rhythm)
    defaults to ``healthy_peak``.
    """
    lo, hi = pathological_band
    if not lo < hi:
        raise ConfigurationError("pathological band must be [lo, hi] with lo < hi")
    if lo <= healthy_peak <= hi:
        raise ConfigurationError("healthy rhythm lies inside the pathological band")
    values = _candidate_values(candidates)
    if not values or min(values) <= 0:
        raise ConfigurationError("candidate frequencies must be positive")
    target = healthy_peak if tuning_target is None else tuning_target

    reports = [evaluate_candidate(fs, healthy_peak, (lo, hi), eval_equiv_amplitude, max_q,
                                  narrowness_ratio, **kwargs) for fs in values]
    ok = [r for r in reports if r.admissible]
    if not ok:
        return StimFrequencyChoice(
            chosen_fs=None, healthy_lock_ok=False, offending_locks=[],
            rationale="no safe frequency: " + "; ".join(f"{r.fs:g} Hz: {r.reason}" for r in reports),
            candidates=reports)
    best = min(ok, key=lambda r: (abs(r.fs - target), r.fs))
    return StimFrequencyChoice(
        chosen_fs=best.fs, healthy_lock_ok=best.healthy_lock_ok, offending_locks=best.offending_locks,
        rationale=(f"{best.fs:g} Hz is the admissible candidate nearest {target:g} Hz; "
                   f"{healthy_peak:g} Hz locks 1:1 and in-band locks stay below "
                   f"{best.threshold:.3g} Hz ({narrowness_ratio:g} x 1:1 width {best.one_to_one_width:.3g} Hz)"),
        candidates=reports)


# -- serialization ------------------------------------------------------------

def grid_to_csv(grid: TongueGrid) -> str:
    if grid.winding is None:
        raise ConfigurationError("grid has not been swept")
    lines = ["x,y,winding"]
    xs, ys = grid.x_axis.values, grid.y_axis.values
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            lines.append(f"{x:.9g},{y:.9g},{grid.winding[i, j]:.9g}")
    return "\n".join(lines) + "\n"


def grid_from_csv(text: str, spec: dict) -> TongueGrid:
    grid = TongueGrid.from_spec(spec)
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    w = np.array([float(r[2]) for r in rows]).reshape(grid.shape)
    return replace(grid, winding=w)


def write_grid(grid: TongueGrid, csv_path, json_path=None) -> None:
    with open(csv_path, "w", newline="") as fh:
        fh.write(grid_to_csv(grid))
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(grid.spec_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
