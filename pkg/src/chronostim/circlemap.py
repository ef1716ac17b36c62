"""Sine circle map driven by a periodic pulse train.

Each stimulation pulse advances the oscillator phase by
``2*pi*f0/fs + I*sin(theta)``. Phases are never reduced modulo 2*pi: the
winding number is read off the cumulative phase, ``(theta_N - theta_0) /
(2*pi*N)``, and averaged over trials started from uniformly random phases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError
from .streams import keyed_stream

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class CircleMapConfig:
    """Oscillator (``f0``) driven at ``fs`` with dimensionless coupling ``I``."""

    f0: float
    fs: float
    coupling: float = 0.0
    n_pulses: int = 50
    n_trials: int = 20
    seed: int = 0

    def __post_init__(self):
        if not (self.f0 > 0 and math.isfinite(self.f0)):
            raise ConfigurationError(f"natural frequency must be positive, got {self.f0}")
        if not (self.fs > 0 and math.isfinite(self.fs)):
            raise ConfigurationError(f"stimulation frequency must be positive, got {self.fs}")
        if not (self.coupling >= 0 and math.isfinite(self.coupling)):
            raise ConfigurationError(f"coupling must be >= 0, got {self.coupling}")
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 1:
            raise ConfigurationError(f"n_pulses must be an integer >= 1, got {self.n_pulses}")
        if int(self.n_trials) != self.n_trials or self.n_trials < 1:
            raise ConfigurationError(f"n_trials must be an integer >= 1, got {self.n_trials}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def ratio(self) -> float:
        return self.f0 / self.fs

    def with_(self, **changes) -> "CircleMapConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class PhaseTrajectory:
    phases: np.ndarray  # theta_0 .. theta_N, unwrapped

    def __len__(self):
        return len(self.phases)


@dataclass(frozen=True)
class WindingEstimate:
    mean: float
    std_dev: float
    per_trial: np.ndarray


def step(theta: float, config: CircleMapConfig) -> float:
    """One pulse of the map; returns the unwrapped next phase."""
    return theta + TWO_PI * config.ratio + config.coupling * math.sin(theta)


def trajectory(theta0: float, config: CircleMapConfig) -> PhaseTrajectory:
    phases = np.empty(config.n_pulses + 1)
    phases[0] = theta0
    for i in range(config.n_pulses):
        phases[i + 1] = step(phases[i], config)
    return PhaseTrajectory(phases)


def initial_phases(seed: int, cell_index: int, n_trials: int) -> np.ndarray:
    """theta_0 for each trial, uniform on [0, 2*pi).

    Trial t takes the t-th draw of the Philox stream keyed by
    ``(seed, cell_index)``, so the value depends only on (seed, cell, t).
    """
    return keyed_stream(seed, cell_index).random(n_trials) * TWO_PI


def iterate_windings(theta0, ratio, coupling, n_pulses: int) -> np.ndarray:
    """Per-trial winding numbers for broadcastable arrays of parameters.

    ``theta0`` has trials on its last axis; ``ratio`` and ``coupling`` must
    broadcast against it (typically shape ``(..., 1)``). All arithmetic is
    elementwise, so a cell's result does not depend on what else is in the
    batch.
    """
    theta0 = np.asarray(theta0, dtype=float)
    advance = TWO_PI * np.asarray(ratio, dtype=float)
    coupling = np.asarray(coupling, dtype=float)
    theta = theta0
    for _ in range(n_pulses):
        theta = theta + advance + coupling * np.sin(theta)
    return (theta - theta0) / (TWO_PI * n_pulses)


def summarize_trials(per_trial: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population SD over the last axis."""
    n = per_trial.shape[-1]
    mean = per_trial.sum(axis=-1) / n
    dev = per_trial - mean[..., None]
    std = np.sqrt((dev * dev).sum(axis=-1) / n)
    return mean, std


def winding_number(config: CircleMapConfig, cell_index: int = 0) -> WindingEstimate:
    """Trial-averaged winding number after ``n_pulses`` pulses.

    ``cell_index`` selects the random stream; grid sweeps pass the flat
    cell index so every cell can be recomputed on its own.
    """
    theta0 = initial_phases(config.seed, cell_index, config.n_trials)
    per_trial = iterate_windings(theta0[None, :], config.ratio, config.coupling, config.n_pulses)
    mean, std = summarize_trials(per_trial)
    return WindingEstimate(mean=float(mean[0]), std_dev=float(std[0]), per_trial=per_trial[0])
