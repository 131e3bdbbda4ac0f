import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmpm.classical import integrate_classical
from cmpm.hamiltonian import kerr_spec
from cmpm.measurement import (
    MeasurementScheme,
    max_adjacent_jump,
    measurement_grid,
    realization_seed,
    run_ensemble,
    run_protocol,
)

KERR = kerr_spec(1, 0, 1)


def kerr_step(alpha, t):
    return alpha * np.exp(-1j * t) * np.exp(abs(alpha) ** 2 * (np.exp(-2j * t) - 1))


def test_grid_requires_integer_multiple():
    assert measurement_grid(0.01, 0.12, 200).size == 2401
    with pytest.raises(ValueError):
        measurement_grid(0.03, 0.1, 10)


def test_scheme_validation():
    with pytest.raises(ValueError):
        MeasurementScheme(tau=0)
    with pytest.raises(ValueError):
        MeasurementScheme(tau=0.1, delta_alpha=-1)
    with pytest.raises(ValueError):
        MeasurementScheme(tau=0.1, timing="random")


def test_harmonic_cmpm_follows_circle():
    spec = kerr_spec(1, 1, 0)
    traj = run_protocol(spec, 2 + 1j, MeasurementScheme(tau=0.25), 2.0, 48)
    assert np.max(np.abs(traj.centroids - (2 + 1j) * np.exp(-1j * traj.tgrid))) < 1e-8


def test_cmpm_matches_iterated_closed_form():
    scheme = MeasurementScheme(tau=0.01, record_substeps=4)
    traj = run_protocol(KERR, 5, scheme, 0.05, 128)
    alpha = 5 + 0j
    for k in range(5):
        s = traj.tgrid[4 * k : 4 * k + 5] - 0.01 * k
        assert np.allclose(traj.centroids[4 * k : 4 * k + 5], kerr_step(alpha, s), atol=1e-9)
        alpha = kerr_step(alpha, 0.01)
    assert np.allclose(traj.collapse_sources, traj.collapse_targets)
    assert traj.collapse_times.size == 4


def test_cmpm_converges_to_classical():
    devs = []
    for tau in (0.02, 0.01, 0.005):
        traj = run_protocol(KERR, 5, MeasurementScheme(tau=tau), 0.2, 128)
        cl = integrate_classical(KERR, 5, traj.tgrid)
        devs.append(np.max(np.abs(traj.centroids - cl.alpha)))
    assert devs[0] > devs[1] > devs[2]


def test_jump_targets_within_precision():
    scheme = MeasurementScheme(tau=0.01, delta_alpha=0.1, jump=True, seed=3)
    traj = run_protocol(KERR, 5, scheme, 0.1, 160)
    assert np.all(np.abs(traj.collapse_targets - traj.collapse_sources) <= 0.1)
    assert np.any(traj.collapse_targets != traj.collapse_sources)


def test_zero_precision_jump_is_plain_cmpm():
    base = MeasurementScheme(tau=0.01, record_substeps=5, seed=11)
    a = run_protocol(KERR, 4, base, 0.05, 128)
    b = run_protocol(KERR, 4, dataclasses.replace(base, jump=True), 0.05, 128)
    assert np.array_equal(a.centroids, b.centroids)


@given(st.integers(0, 10_000))
@settings(max_examples=5, deadline=None)
def test_protocol_deterministic(seed):
    scheme = MeasurementScheme(tau=0.01, delta_alpha=0.1, jump=True, seed=seed, record_substeps=5)
    a = run_protocol(KERR, 3, scheme, 0.04, 96)
    b = run_protocol(KERR, 3, scheme, 0.04, 96)
    assert np.array_equal(a.centroids, b.centroids)


def test_poisson_timing():
    scheme = MeasurementScheme(tau=0.01, timing="poisson", seed=2, record_substeps=5)
    traj = run_protocol(KERR, 3, scheme, 0.2, 96)
    assert np.all(np.diff(traj.collapse_times) > 0)
    assert 5 < traj.collapse_times.size < 40


def test_record_jitter_changes_records_only():
    base = MeasurementScheme(tau=0.01, delta_alpha=0.1, jump=True, seed=4, record_substeps=5)
    plain = run_protocol(KERR, 3, base, 0.05, 96)
    jit = run_protocol(KERR, 3, dataclasses.replace(base, record_jitter=0.002), 0.05, 96)
    assert np.array_equal(plain.collapse_targets, jit.collapse_targets)
    assert not np.array_equal(plain.centroids, jit.centroids)


def test_ensemble_of_one_is_protocol():
    scheme = MeasurementScheme(tau=0.01, delta_alpha=0.1, jump=True, seed=5, record_substeps=5)
    ens = run_ensemble(KERR, 3, scheme, 0.05, 96, 1)
    single = run_protocol(KERR, 3, dataclasses.replace(scheme, seed=realization_seed(5, 0)), 0.05, 96)
    assert np.array_equal(ens.members[0], single.centroids)
    assert np.array_equal(ens.x_mean, single.x)


def test_ensemble_without_noise_has_identical_members():
    ens = run_ensemble(KERR, 3, MeasurementScheme(tau=0.01, seed=1, record_substeps=5), 0.05, 96, 4)
    assert all(np.array_equal(m, ens.members[0]) for m in ens.members)
    assert np.allclose(ens.x_mean, ens.members[0].real, atol=1e-15)


def test_ensemble_split_by_first_index():
    scheme = MeasurementScheme(tau=0.01, delta_alpha=0.1, jump=True, seed=6, record_substeps=5)
    whole = run_ensemble(KERR, 3, scheme, 0.03, 96, 4)
    head = run_ensemble(KERR, 3, scheme, 0.03, 96, 2)
    tail = run_ensemble(KERR, 3, scheme, 0.03, 96, 2, first_index=2)
    assert np.array_equal(whole.members, np.vstack([head.members, tail.members]))


def test_ensemble_worker_independent():
    scheme = MeasurementScheme(tau=0.01, delta_alpha=0.1, jump=True, seed=7, record_substeps=5)
    serial = run_ensemble(KERR, 3, scheme, 0.03, 96, 3)
    pooled = run_ensemble(KERR, 3, scheme, 0.03, 96, 3, workers=2)
    assert np.array_equal(serial.members, pooled.members)


def test_max_adjacent_jump():
    assert max_adjacent_jump([0, 1, 0.5, 3]) == 2.5
    assert max_adjacent_jump([1.0]) == 0.0
