"""Classical centroid dynamics and ensemble error bands.

The centroid obeys ``i hbar d(alpha)/dt = dH_cls/d conj(alpha)``.  Bands are
built from ensembles whose members carry amplitude imprecision (a random offset
of size ``delta_alpha``) and, optionally, sampling-time jitter ``delta_t``.
When ``reset_interval`` is given, every member is also re-displaced by a fresh
offset at each measurement time, which is the classical counterpart of the
jump protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, GridMismatchError
from .hamiltonian import HamiltonianSpec, classical_gradient, classical_symbol

ENERGY_TOL = 1e-8
MAX_REFINEMENTS = 3
# largest rotation angle per RK4 step
_MAX_PHASE_STEP = 0.01
CLASSICAL_STREAM = 1
MIN_ENSEMBLE = 100


@dataclass(frozen=True)
class ClassicalTrajectory:
    tgrid: np.ndarray
    alpha: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.alpha.real

    @property
    def p(self) -> np.ndarray:
        return self.alpha.imag


@dataclass(frozen=True)
class ClassicalBand:
    """Pointwise ensemble statistics on a shared time grid."""

    tgrid: np.ndarray
    x_mean: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray
    p_mean: np.ndarray
    p_lo: np.ndarray
    p_hi: np.ndarray

    @property
    def halfwidth(self) -> np.ndarray:
        return 0.5 * (self.x_hi - self.x_lo)


def _velocity(spec: HamiltonianSpec, alpha):
    return (-1j / spec.hbar) * classical_gradient(spec, alpha)


def rk4_flow(spec: HamiltonianSpec, alpha, duration, steps: int):
    """Advance ``alpha`` by ``duration`` (scalar or per-element) in ``steps`` RK4 steps."""
    alpha = np.asarray(alpha, dtype=complex)
    h = np.asarray(duration, dtype=float) / steps
    for _ in range(steps):
        k1 = _velocity(spec, alpha)
        k2 = _velocity(spec, alpha + 0.5 * h * k1)
        k3 = _velocity(spec, alpha + 0.5 * h * k2)
        k4 = _velocity(spec, alpha + h * k3)
        alpha = alpha + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return alpha


def _base_step(spec: HamiltonianSpec, alpha0, times: np.ndarray) -> float:
    gaps = np.diff(np.unique(times))
    span = float(np.max(np.abs(times))) if times.size else 0.0
    h = gaps.min() / 4 if gaps.size else max(span, 1.0)
    a = np.atleast_1d(np.asarray(alpha0, dtype=complex))
    rate = np.abs(classical_gradient(spec, a)) / (spec.hbar * np.maximum(np.abs(a), 1.0))
    rate = max(float(np.max(rate)), abs(spec.omega))
    if rate > 0:
        h = min(h, _MAX_PHASE_STEP / rate)
    return h


def _energy_ok(spec: HamiltonianSpec, before, after) -> bool:
    e0 = classical_symbol(spec, before)
    e1 = classical_symbol(spec, after)
    return bool(np.all(np.abs(e1 - e0) <= ENERGY_TOL * np.abs(e0) + 1e-14))


def integrate_classical(spec: HamiltonianSpec, alpha0: complex, tgrid) -> ClassicalTrajectory:
    """Integrate the centroid from ``alpha0`` at t=0 and sample it on ``tgrid``."""
    times = np.asarray(tgrid, dtype=float).ravel()
    if times.size and (np.any(np.diff(times) < 0) or times[0] < 0):
        raise ValueError("tgrid must be non-negative and sorted")
    base = _base_step(spec, alpha0, times)
    for refinement in range(MAX_REFINEMENTS + 1):
        h = base / 2**refinement
        out = np.empty(times.size, dtype=complex)
        current, now, ok = complex(alpha0), 0.0, True
        for i, t in enumerate(times):
            if t > now:
                nxt = complex(rk4_flow(spec, current, t - now, math.ceil((t - now) / h)))
                ok = ok and _energy_ok(spec, current, nxt)
                current, now = nxt, t
            out[i] = current
        if ok and (times.size == 0 or _energy_ok(spec, complex(alpha0), out[-1])):
            return ClassicalTrajectory(times, out)
    raise ConvergenceError(f"classical energy drift above {ENERGY_TOL:g} after {MAX_REFINEMENTS} refinements")


def sample_offsets(rng: np.random.Generator, radius: float, size, noise: str = "disc") -> np.ndarray:
    """Random complex offsets of scale ``radius``.

    ``"disc"`` draws uniformly on ``|eta| <= radius``; ``"gaussian"`` draws a
    complex normal with the same second moment ``E|eta|^2 = radius^2 / 2``.
    Both use two uniforms/normals per offset and scale linearly in ``radius``.
    """
    if noise == "disc":
        u = rng.random((*np.atleast_1d(size), 2)) if size != () else rng.random(2)
        return radius * np.sqrt(u[..., 0]) * np.exp(2j * np.pi * u[..., 1])
    if noise == "gaussian":
        g = rng.standard_normal((*np.atleast_1d(size), 2)) if size != () else rng.standard_normal(2)
        return 0.5 * radius * (g[..., 0] + 1j * g[..., 1])
    raise ValueError(f"unknown noise model {noise!r}")


def member_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for classical ensemble member ``index``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(CLASSICAL_STREAM, index)))


def _node_times(tgrid: np.ndarray, resets: np.ndarray, delta_t: float) -> np.ndarray:
    nodes = [tgrid, resets, [0.0]]
    if delta_t > 0:
        gaps = np.diff(np.unique(tgrid))
        spacing = gaps.min() if gaps.size else delta_t / 16
        n_ext = math.ceil(delta_t / spacing) + 1
        ext = spacing * np.arange(1, n_ext + 1)
        nodes += [-ext, tgrid.max() + ext]
    return np.unique(np.concatenate([np.asarray(n, dtype=float) for n in nodes]))


def _member_values(spec, alpha0, offsets0, reset_offsets, jitter, tgrid, nodes, reset_index, h):
    """Centroids of a chunk of members at ``tgrid + jitter``; None on energy failure."""
    m = offsets0.size
    n_nodes = nodes.size
    zero = int(np.searchsorted(nodes, 0.0))
    pre = np.empty((m, n_nodes), dtype=complex)
    post = np.empty((m, n_nodes), dtype=complex)
    pre[:, zero] = post[:, zero] = alpha0 + offsets0

    for k in range(zero + 1, n_nodes):
        dt = nodes[k] - nodes[k - 1]
        pre[:, k] = rk4_flow(spec, post[:, k - 1], dt, math.ceil(dt / h))
        if not _energy_ok(spec, post[:, k - 1], pre[:, k]):
            return None
        j = reset_index.get(k)
        post[:, k] = pre[:, k] + reset_offsets[:, j] if j is not None else pre[:, k]
    for k in range(zero - 1, -1, -1):
        dt = nodes[k] - nodes[k + 1]
        pre[:, k] = post[:, k] = rk4_flow(spec, pre[:, k + 1], dt, math.ceil(-dt / h))
        if not _energy_ok(spec, pre[:, k + 1], pre[:, k]):
            return None

    if jitter is None:
        return pre[:, np.searchsorted(nodes, tgrid)]

    s = tgrid[None, :] + jitter
    k = np.searchsorted(nodes, s)
    k = np.minimum(k, n_nodes - 1)
    exact = nodes[k] == s
    rows = np.broadcast_to(np.arange(m)[:, None], s.shape)
    forward = s > 0
    anchor_idx = np.where(forward, k - 1, k)
    anchor_idx = np.where(exact, k, anchor_idx)
    anchor_t = nodes[anchor_idx]
    anchor = np.where(forward & ~exact, post[rows, anchor_idx], pre[rows, anchor_idx])
    duration = np.where(exact, 0.0, s - anchor_t)
    steps = max(1, math.ceil(float(np.max(np.abs(duration))) / h))
    return rk4_flow(spec, anchor, duration, steps)


def ensemble_band(
    spec: HamiltonianSpec,
    alpha0: complex,
    delta_alpha: float,
    delta_t: float,
    M: int,
    tgrid,
    seed: int,
    *,
    reset_interval: float | None = None,
    noise: str = "disc",
    envelope: str = "sigma2",
    chunk: int | None = None,
) -> ClassicalBand:
    """Classical error band from an ``M``-member ensemble.

    Each member starts at ``alpha0 + eta``.  With ``reset_interval`` set, a fresh
    offset is added at every multiple of the interval.  With ``delta_t > 0``
    the value reported at grid time ``t`` is the member's centroid at ``t + u``,
    ``u`` uniform on ``[-delta_t, delta_t]``, drawn per member and grid point.

    Random draws per member, in order: the initial offset, one offset per reset,
    then the jitter samples.  The band is ``mean +/- 2 std`` (``envelope="sigma2"``)
    or the ``min``/``max`` envelope (``envelope="minmax"``).
    """
    if M < MIN_ENSEMBLE:
        raise ValueError(f"ensemble size must be >= {MIN_ENSEMBLE}, got {M}")
    if delta_alpha < 0 or delta_t < 0:
        raise ValueError("imprecisions must be non-negative")
    if envelope not in ("sigma2", "minmax"):
        raise ValueError(f"unknown envelope {envelope!r}")
    tgrid = np.asarray(tgrid, dtype=float).ravel()
    if tgrid.size == 0 or np.any(np.diff(tgrid) < 0) or tgrid[0] < 0:
        raise ValueError("tgrid must be non-empty, non-negative and sorted")

    horizon = tgrid.max() + delta_t
    if reset_interval is not None:
        if reset_interval <= 0:
            raise ValueError("reset_interval must be positive")
        n_resets = int(np.floor(horizon / reset_interval + 1e-9))
        resets = reset_interval * np.arange(1, n_resets + 1)
        # reset times that coincide with grid points must be bitwise equal to them
        snap = np.searchsorted(tgrid, resets)
        for i, j in enumerate(snap):
            for cand in (j - 1, j):
                if 0 <= cand < tgrid.size and abs(tgrid[cand] - resets[i]) <= 1e-9 * max(1.0, resets[i]):
                    resets[i] = tgrid[cand]
        resets = resets[resets <= horizon]
    else:
        resets = np.zeros(0)
    nodes = _node_times(tgrid, resets, delta_t)
    reset_index = {int(np.searchsorted(nodes, r)): j for j, r in enumerate(resets)}

    draws0 = np.empty(M, dtype=complex)
    draws_reset = np.empty((M, resets.size), dtype=complex)
    jitter = np.empty((M, tgrid.size)) if delta_t > 0 else None
    for i in range(M):
        rng = member_rng(seed, i)
        draws0[i] = sample_offsets(rng, delta_alpha, (), noise)
        if resets.size:
            draws_reset[i] = sample_offsets(rng, delta_alpha, resets.size, noise)
        if jitter is not None:
            jitter[i] = rng.uniform(-delta_t, delta_t, tgrid.size)

    if chunk is None:
        chunk = M if jitter is None else 250
    base = _base_step(spec, alpha0 + draws0, tgrid)
    for refinement in range(MAX_REFINEMENTS + 1):
        h = base / 2**refinement
        values = np.empty((M, tgrid.size), dtype=complex)
        ok = True
        for start in range(0, M, chunk):
            sl = slice(start, min(M, start + chunk))
            out = _member_values(
                spec, alpha0, draws0[sl], draws_reset[sl],
                None if jitter is None else jitter[sl], tgrid, nodes, reset_index, h,
            )
            if out is None:
                ok = False
                break
            values[sl] = out
        if ok:
            break
    else:
        raise ConvergenceError(f"ensemble energy drift above {ENERGY_TOL:g} after {MAX_REFINEMENTS} refinements")

    def stats(v):
        mean = v.mean(axis=0)
        if envelope == "minmax":
            return mean, v.min(axis=0), v.max(axis=0)
        sd = v.std(axis=0)
        return mean, mean - 2 * sd, mean + 2 * sd

    xm, xl, xh = stats(values.real)
    pm, pl, ph = stats(values.imag)
    # keep lo <= mean <= hi exact under rounding
    xl, xh = np.minimum(xl, xm), np.maximum(xh, xm)
    pl, ph = np.minimum(pl, pm), np.maximum(ph, pm)
    return ClassicalBand(tgrid, xm, xl, xh, pm, pl, ph)


def coverage_fraction(x, band: ClassicalBand, tgrid=None) -> float:
    """Fraction of grid points with ``x_lo <= x <= x_hi``."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != band.x_lo.shape:
        raise GridMismatchError(f"record length {x.size} != band length {band.x_lo.size}")
    if tgrid is not None and not np.array_equal(np.asarray(tgrid, dtype=float), band.tgrid):
        raise GridMismatchError("record and band time grids differ")
    return float(np.mean((band.x_lo <= x) & (x <= band.x_hi)))
