"""Arnold-tongue entrainment analysis and chronotherapy scheduling toolkit."""

__version__ = "0.1.0"

from .circlemap import CircleMapConfig, WindingEstimate, trajectory, winding_number
from .diary import compare_epochs, group_periods, mann_whitney_one_tailed, parse_diary
from .errors import ConfigurationError, DiaryParseError, DiaryValidationError, InputError
from .harness import Policy, SeizureModelConfig, TapPolicy, compare_policies, entrainment_factor, simulate_days
from .scheduler import AdaptiveConfig, ClockSchedule, StimProgram, default_schedule, run_schedule
from .telemetry import dominant_peaks, synth_accel, synth_lfp, welch_psd
from .tongues import fs_amplitude_grid, f0_equivalent_grid, select_stim_frequency, sweep, tongue_regions

__all__ = [
    "AdaptiveConfig", "CircleMapConfig", "ClockSchedule", "ConfigurationError", "DiaryParseError",
    "DiaryValidationError", "InputError", "Policy", "SeizureModelConfig", "StimProgram", "TapPolicy",
    "WindingEstimate", "compare_epochs", "compare_policies", "default_schedule", "dominant_peaks",
    "entrainment_factor", "fs_amplitude_grid", "f0_equivalent_grid", "group_periods", "mann_whitney_one_tailed", "parse_diary",
    "run_schedule", "select_stim_frequency", "simulate_days", "sweep", "synth_accel", "synth_lfp",
    "tongue_regions", "trajectory", "welch_psd", "winding_number",
]
