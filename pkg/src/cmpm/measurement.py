"""Continuous position-momentum measurement by repeated coherent-state collapse.

Between measurements the state evolves unitarily.  At each measurement the
centroid ``<a>`` is read out and the state is replaced by the coherent state at
that centroid (CMPM).  With ``jump=True`` the target is additionally displaced
by a random offset within the precision ``delta_alpha`` (CMPMJ).
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .classical import coverage_fraction, sample_offsets
from .evolution import Propagator, evolve_with_records
from .fock import StateVector, coherent_state, expect_a
from .hamiltonian import HamiltonianSpec

QUANTUM_STREAM = 0

__all__ = [
    "MeasurementScheme",
    "QuantumTrajectory",
    "EnsembleResult",
    "measurement_grid",
    "realization_seed",
    "run_protocol",
    "run_ensemble",
    "coverage_fraction",
    "max_adjacent_jump",
]


@dataclass(frozen=True)
class MeasurementScheme:
    """Protocol parameters.

    ``timing="grid"`` measures at every multiple of ``tau``; ``"poisson"`` draws
    exponential waiting times with mean ``tau``.  ``record_jitter`` resamples each
    record at ``t + u``, ``u`` uniform on ``[-record_jitter, record_jitter]``.
    """

    tau: float
    delta_alpha: float = 0.0
    jump: bool = False
    seed: int = 0
    record_substeps: int = 10
    noise: str = "disc"
    timing: str = "grid"
    record_jitter: float = 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.delta_alpha < 0:
            raise ValueError("delta_alpha must be non-negative")
        if self.record_substeps < 1:
            raise ValueError("record_substeps must be >= 1")
        if self.timing not in ("grid", "poisson"):
            raise ValueError(f"unknown timing {self.timing!r}")
        if self.noise not in ("disc", "gaussian"):
            raise ValueError(f"unknown noise model {self.noise!r}")
        if self.record_jitter < 0:
            raise ValueError("record_jitter must be non-negative")


@dataclass(frozen=True)
class QuantumTrajectory:
    tgrid: np.ndarray
    centroids: np.ndarray
    collapse_times: np.ndarray
    collapse_sources: np.ndarray
    collapse_targets: np.ndarray
    final_state: StateVector

    @property
    def x(self) -> np.ndarray:
        return self.centroids.real

    @property
    def p(self) -> np.ndarray:
        return self.centroids.imag


@dataclass(frozen=True)
class EnsembleResult:
    tgrid: np.ndarray
    x_mean: np.ndarray
    p_mean: np.ndarray
    seeds: tuple[int, ...]
    members: np.ndarray

    @property
    def R(self) -> int:
        return len(self.seeds)


def measurement_grid(tau: float, total_time: float, substeps: int) -> np.ndarray:
    """Record times: ``substeps`` samples per interval, ``total_time / tau`` intervals."""
    n = int(round(total_time / tau))
    if n < 1 or abs(n * tau - total_time) > 1e-9 * max(1.0, total_time):
        raise ValueError(f"total_time={total_time} must be a positive integer multiple of tau={tau}")
    return np.linspace(0.0, total_time, n * substeps + 1)


def realization_seed(seed: int, index: int) -> int:
    """Seed of realization ``index`` derived from the scheme seed."""
    ss = np.random.SeedSequence(seed, spawn_key=(QUANTUM_STREAM, index))
    return int(ss.generate_state(1, np.uint64)[0])


def _measurement_times(scheme: MeasurementScheme, tgrid: np.ndarray, rng) -> np.ndarray:
    total = tgrid[-1]
    if scheme.timing == "grid":
        # interior interval boundaries, taken from the grid so they match bitwise
        return tgrid[scheme.record_substeps:-1:scheme.record_substeps]
    times = []
    t = rng.exponential(scheme.tau)
    while t < total:
        times.append(t)
        t += rng.exponential(scheme.tau)
    return np.asarray(times, dtype=float)


def run_protocol(
    spec: HamiltonianSpec,
    alpha0: complex,
    scheme: MeasurementScheme,
    T: float,
    dim: int,
) -> QuantumTrajectory:
    """One measured trajectory on ``[0, T]``."""
    if T < scheme.tau:
        raise ValueError("total time must be at least one measurement interval")
    tgrid = measurement_grid(scheme.tau, T, scheme.record_substeps)
    rng = np.random.default_rng(scheme.seed)
    prop = Propagator(spec, dim)
    state = coherent_state(alpha0, dim)
    meas = _measurement_times(scheme, tgrid, rng)

    centroids = np.empty(tgrid.size, dtype=complex)
    centroids[0] = expect_a(state)
    sources, targets = [], []
    starts, start_states = [0.0], [state]
    t_c, i = 0.0, 1
    ends = [*meas, tgrid[-1]]
    for n_seg, t_end in enumerate(ends):
        j = int(np.searchsorted(tgrid, t_end, side="right"))
        durations = tgrid[i:j] - t_c
        needs_end = durations.size == 0 or tgrid[j - 1] != t_end
        if needs_end:
            durations = np.append(durations, t_end - t_c)
        seg = evolve_with_records(prop, state, durations)
        centroids[i:j] = seg.centroids[: j - i]
        seg.final_state.check_representable()
        i = j
        if n_seg == len(ends) - 1:
            state = seg.final_state
            break
        source = seg.centroids[-1]
        offset = sample_offsets(rng, scheme.delta_alpha, (), scheme.noise) if scheme.jump else 0j
        target = source + offset
        if scheme.noise == "disc" and abs(target - source) > scheme.delta_alpha * (1 + 1e-12):
            raise AssertionError("collapse target outside the measurement precision")
        sources.append(source)
        targets.append(target)
        state = coherent_state(target, dim)
        t_c = t_end
        starts.append(t_c)
        start_states.append(state)

    if scheme.record_jitter > 0:
        centroids = _jittered_records(prop, tgrid, np.asarray(starts), start_states, scheme.record_jitter, rng)

    return QuantumTrajectory(
        tgrid=tgrid,
        centroids=centroids,
        collapse_times=np.asarray(meas, dtype=float),
        collapse_sources=np.asarray(sources, dtype=complex),
        collapse_targets=np.asarray(targets, dtype=complex),
        final_state=state,
    )


def _jittered_records(prop, tgrid, starts, start_states, jitter, rng) -> np.ndarray:
    """Centroid at ``clip(t + u, 0, T)`` for every grid time, from the collapse history."""
    s = np.clip(tgrid + rng.uniform(-jitter, jitter, tgrid.size), 0.0, tgrid[-1])
    seg_of = np.searchsorted(starts, s, side="left") - 1
    seg_of = np.maximum(seg_of, 0)
    out = np.empty(tgrid.size, dtype=complex)
    for k in np.unique(seg_of):
        idx = np.flatnonzero(seg_of == k)
        order = idx[np.argsort(s[idx], kind="stable")]
        seg = evolve_with_records(prop, start_states[k], s[order] - starts[k])
        out[order] = seg.centroids
    return out


def _run_member(args):
    spec, alpha0, scheme, T, dim = args
    return run_protocol(spec, alpha0, scheme, T, dim).centroids


def run_ensemble(
    spec: HamiltonianSpec,
    alpha0: complex,
    scheme: MeasurementScheme,
    T: float,
    dim: int,
    R: int,
    *,
    workers: int = 1,
    first_index: int = 0,
) -> EnsembleResult:
    """``R`` independent realizations and their mean records.

    Realization ``k`` uses ``realization_seed(scheme.seed, first_index + k)``, so
    the output does not depend on ``workers``.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    seeds = tuple(realization_seed(scheme.seed, first_index + k) for k in range(R))
    jobs = [(spec, alpha0, dataclasses.replace(scheme, seed=s), T, dim) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_member, jobs))
    else:
        rows = [_run_member(job) for job in jobs]
    members = np.vstack(rows)
    tgrid = measurement_grid(scheme.tau, T, scheme.record_substeps)
    mean = members.mean(axis=0)
    return EnsembleResult(tgrid, mean.real, mean.imag, seeds, members)


def max_adjacent_jump(x) -> float:
    """Largest absolute change between consecutive records."""
    x = np.asarray(x, dtype=float)
    return float(np.max(np.abs(np.diff(x)))) if x.size > 1 else 0.0
