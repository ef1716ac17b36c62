import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chronostim.circlemap import (CircleMapConfig, initial_phases, iterate_windings, step, trajectory,
                                  winding_number)
from chronostim.errors import ConfigurationError


def oracle_winding(f0, fs, coupling, n_pulses, theta0s):
    # Straight loop, written independently of the vectorised path.
    out = []
    for th0 in theta0s:
        th = th0
        for _ in range(n_pulses):
            th = th + 2.0 * math.pi * f0 / fs + coupling * math.sin(th)
        out.append((th - th0) / (2.0 * math.pi * n_pulses))
    return out


def test_step_examples():
    assert step(0.0, CircleMapConfig(13, 13, 0.0)) == pytest.approx(2 * math.pi, abs=1e-15)
    assert step(math.pi, CircleMapConfig(13, 13, 0.5)) == pytest.approx(3 * math.pi, abs=1e-15)
    assert step(math.pi / 2, CircleMapConfig(13, 26, 0.8)) == pytest.approx(math.pi / 2 + math.pi + 0.8, abs=1e-15)


@pytest.mark.parametrize("kwargs", [dict(f0=0, fs=13), dict(f0=13, fs=-1), dict(f0=13, fs=13, coupling=-0.1),
                                    dict(f0=13, fs=13, n_pulses=0), dict(f0=13, fs=13, n_trials=0),
                                    dict(f0=float("nan"), fs=13), dict(f0=13, fs=13, seed=-1)])
def test_invalid_config(kwargs):
    with pytest.raises(ConfigurationError):
        CircleMapConfig(**kwargs)


def test_trajectory_is_unwrapped():
    traj = trajectory(0.3, CircleMapConfig(13, 6.5, 0.3, n_pulses=50))
    assert len(traj) == 51
    assert traj.phases[-1] > 50 * 2 * math.pi  # roughly 2 turns per pulse, never reduced
    assert np.all(np.diff(traj.phases) > 0)


def test_winding_examples():
    assert winding_number(CircleMapConfig(13, 13, 0.0)).mean == 1.0
    assert winding_number(CircleMapConfig(13, 26, 0.0)).mean == 0.5
    assert winding_number(CircleMapConfig(13, 13, 0.5)).mean == pytest.approx(1.0, abs=2 / 50)
    assert winding_number(CircleMapConfig(13, 6.5, 0.3)).mean == pytest.approx(2.0, abs=2 / 50)


def test_matches_brute_force_oracle():
    cfg = CircleMapConfig(13, 20, 0.8, seed=7)
    est = winding_number(cfg, cell_index=3)
    expected = oracle_winding(13, 20, 0.8, 50, initial_phases(7, 3, 20))
    np.testing.assert_allclose(est.per_trial, expected, rtol=0, atol=1e-13)
    assert est.mean == pytest.approx(np.mean(expected), abs=1e-13)
    assert est.std_dev == pytest.approx(np.std(expected), abs=1e-13)


def test_estimate_shape_and_population_sd():
    est = winding_number(CircleMapConfig(13, 17, 0.9, n_trials=7))
    assert est.per_trial.shape == (7,)
    assert est.mean == pytest.approx(est.per_trial.mean(), abs=1e-15)
    assert est.std_dev == pytest.approx(est.per_trial.std(ddof=0), abs=1e-15)


def test_initial_phases_depend_only_on_key():
    a = initial_phases(5, 11, 20)
    b = initial_phases(5, 11, 8)
    np.testing.assert_array_equal(a[:8], b)
    assert np.all((a >= 0) & (a < 2 * math.pi))
    assert not np.array_equal(a, initial_phases(5, 12, 20))
    assert not np.array_equal(a, initial_phases(6, 11, 20))


def test_lock_flatness_inside_one_to_one():
    assert winding_number(CircleMapConfig(13, 13, 0.5)).std_dev <= 1 / 50


def test_monotone_in_f0_in_invertible_regime():
    f0 = np.linspace(1, 26, 200)
    for coupling in (0.2, 0.5, 0.9):
        theta0 = np.stack([initial_phases(0, k, 20) for k in range(len(f0))])
        w = iterate_windings(theta0, (f0 / 13.0)[:, None], coupling, 50).mean(axis=1)
        assert np.all(np.diff(w) >= -2 / 50)


def test_determinism():
    cfg = CircleMapConfig(11.3, 17.9, 0.77, seed=123)
    a, b = winding_number(cfg), winding_number(cfg)
    assert a.mean == b.mean and a.std_dev == b.std_dev
    np.testing.assert_array_equal(a.per_trial, b.per_trial)


freqs = st.floats(0.5, 60.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(f0=freqs, fs=freqs, seed=st.integers(0, 2**64 - 1))
def test_zero_coupling_identity(f0, fs, seed):
    assert abs(winding_number(CircleMapConfig(f0, fs, 0.0, seed=seed)).mean - f0 / fs) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(f0=freqs, fs=freqs, coupling=st.floats(0.0, 1.0))
def test_shift_identity(f0, fs, coupling):
    base = winding_number(CircleMapConfig(f0, fs, coupling)).mean
    shifted = winding_number(CircleMapConfig(f0 + fs, fs, coupling)).mean
    assert abs(shifted - base - 1.0) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(f0=freqs, fs=freqs, coupling=st.floats(0.0, 1.5), k=st.integers(-4, 4))
def test_scale_invariance_exact_for_binary_scales(f0, fs, coupling, k):
    c = 2.0 ** k  # keeps f0/fs bit-identical, so the result must be too
    a = winding_number(CircleMapConfig(f0, fs, coupling)).mean
    b = winding_number(CircleMapConfig(c * f0, c * fs, coupling)).mean
    assert a == b
