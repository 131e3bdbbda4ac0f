"""Scenario runner: flat key = value configs in, CSV trajectories and a summary out."""

from __future__ import annotations

import dataclasses
import logging
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classical import ClassicalBand, ensemble_band, integrate_classical
from .errors import TruncationError
from .fock import check_coherent_representable, coherent_state, overlap_fidelity
from .hamiltonian import kerr_classical_spec, kerr_spec
from .measurement import (
    MeasurementScheme,
    coverage_fraction,
    max_adjacent_jump,
    measurement_grid,
    run_ensemble,
    run_protocol,
)
from .semiclassical import SemiclassicalFrame, first_order_correction_norm, propagate_usc

log = logging.getLogger(__name__)

OUTDIR_ENV = "CMPM_OUTDIR"
TRAJECTORY_HEADER = "t,x_q,p_q,x_cl,x_lo,x_hi"
BAND_HEADER = "t,x_cl,x_lo,x_hi,p_cl,p_lo,p_hi"


class ConfigError(ValueError):
    """Raised for unparseable config files and unknown scenarios."""


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    hbar: float = 1.0
    omega: float = 0.0
    lam: float = 1.0
    alpha0_re: float = 5.0
    alpha0_im: float = 0.0
    delta_alpha: float = 0.1
    delta_t: float = 0.0
    tau: float = 0.01
    total_time: float = 0.12
    dim: int = 160
    realizations: int = 1
    classical_ensemble: int = 1000
    seed: int = 12345
    outdir: str | None = None
    record_substeps: int = 200
    jump: bool = True
    band_delta_alpha: float | None = None
    band_resets: bool = True
    band_envelope: str = "sigma2"
    noise: str = "disc"
    classical_ordering: str = "normal"
    measurement_timing: str = "grid"
    jitter_quantum: bool = False
    saved_realizations: int = 10
    workers: int = 1
    taus: tuple[float, ...] = ()
    correction_norm: str = "fro"

    @property
    def alpha0(self) -> complex:
        return complex(self.alpha0_re, self.alpha0_im)

    @property
    def band_alpha(self) -> float:
        return self.delta_alpha if self.band_delta_alpha is None else self.band_delta_alpha


# config-file key -> dataclass field
_KEY_ALIASES = {"lambda": "lam"}
_FIELD_KEYS = {v: k for k, v in _KEY_ALIASES.items()}
_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}

SCENARIOS: dict[str, dict] = {
    "fig2a": dict(delta_alpha=0.1, realizations=100),
    "fig2b": dict(delta_alpha=0.1, realizations=1),
    "fig2c": dict(delta_alpha=0.1, realizations=100),
    "fig2d": dict(delta_alpha=0.01, band_delta_alpha=0.1, realizations=1),
    "fig3": dict(delta_alpha=0.1, delta_t=0.05, realizations=1),
    "converge": dict(
        delta_alpha=0.0, jump=False, total_time=0.2, record_substeps=10, dim=128,
        taus=(0.02, 0.01, 0.005, 0.0025),
    ),
    "dyson": dict(delta_alpha=0.0, jump=False, dim=128, taus=(0.02, 0.01, 0.005)),
}

SCENARIO_HELP = {
    "fig2a": "single CMPMJ realization and the mean of R realizations (delta_alpha=0.1)",
    "fig2b": "single realization against the classical error band",
    "fig2c": "ensemble mean against the classical error band",
    "fig2d": "single realization at delta_alpha=0.01 against the delta_alpha=0.1 band",
    "fig3": "fig2b with sampling-time imprecision delta_t=0.05 in the band",
    "converge": "CMPM deviation from the classical trajectory as tau shrinks",
    "dyson": "first-order Dyson norm and exact/semiclassical fidelity gap versus tau",
}


def default_config(scenario: str, **overrides) -> ScenarioConfig:
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    return ScenarioConfig(scenario=scenario, **{**SCENARIOS[scenario], **overrides})


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_value(name: str, text: str):
    if name == "taus":
        return tuple(float(v) for v in text.replace(" ", "").split(",") if v)
    if name in ("outdir",):
        return text
    if name == "band_delta_alpha":
        return None if text.lower() in ("", "none") else float(text)
    kind = _FIELDS[name].type
    if kind in ("bool",):
        return _parse_bool(text)
    if kind in ("int",):
        return int(text)
    if kind in ("float",):
        return float(text)
    return text


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        entries[key.lower()] = value
    return entries


def build_config(entries: dict[str, str]) -> tuple[ScenarioConfig, list[str]]:
    """Resolve raw entries against scenario defaults; returns (config, parse problems)."""
    scenario = entries.get("scenario")
    if not scenario:
        raise ConfigError("config must set 'scenario'")
    problems = []
    overrides = {}
    for key, text in entries.items():
        if key == "scenario":
            continue
        name = _KEY_ALIASES.get(key, key)
        # "lam" is only the internal field name; the file key is "lambda"
        if name not in _FIELDS or key in _FIELD_KEYS:
            problems.append(f"unknown key {key!r}")
            continue
        try:
            overrides[name] = _parse_value(name, text)
        except ValueError as exc:
            problems.append(f"{key}: cannot parse {text!r} ({exc})")
    return default_config(scenario, **overrides), problems


def load_config(path: str | os.PathLike) -> tuple[ScenarioConfig, list[str]]:
    return build_config(parse_config_text(Path(path).read_text()))


def validate_config(config: ScenarioConfig) -> list[str]:
    """All precondition violations for ``config``; empty when it is runnable."""
    v = []
    if config.scenario not in SCENARIOS:
        v.append(f"unknown scenario {config.scenario!r}")
    if not config.hbar > 0:
        v.append("hbar must be positive")
    if not config.tau > 0:
        v.append("tau must be positive")
    if not config.total_time > 0:
        v.append("total_time must be positive")
    if config.dim < 16:
        v.append("dim must be >= 16")
    else:
        try:
            check_coherent_representable(config.alpha0, config.dim)
        except TruncationError as exc:
            v.append(f"truncation: {exc}")
    for name in ("delta_alpha", "delta_t"):
        if getattr(config, name) < 0:
            v.append(f"{name} must be non-negative")
    if config.band_delta_alpha is not None and config.band_delta_alpha < 0:
        v.append("band_delta_alpha must be non-negative")
    if config.realizations < 1:
        v.append("realizations must be >= 1")
    if config.classical_ensemble < 100:
        v.append("classical_ensemble must be >= 100")
    if config.record_substeps < 1:
        v.append("record_substeps must be >= 1")
    if config.saved_realizations < 0:
        v.append("saved_realizations must be >= 0")
    if config.workers < 1:
        v.append("workers must be >= 1")
    choices = {
        "band_envelope": ("sigma2", "minmax"),
        "noise": ("disc", "gaussian"),
        "classical_ordering": ("normal", "naive"),
        "measurement_timing": ("grid", "poisson"),
        "correction_norm": ("fro", "spectral"),
    }
    for name, allowed in choices.items():
        if getattr(config, name) not in allowed:
            v.append(f"{name} must be one of {', '.join(allowed)}")
    intervals = [config.tau]
    if config.scenario in ("converge", "dyson"):
        if not config.taus:
            v.append("taus must list at least one interval")
        if any(t <= 0 for t in config.taus):
            v.append("taus must be positive")
        intervals = list(config.taus) if config.scenario == "converge" else []
    if config.total_time > 0:
        for tau in intervals:
            if tau > 0 and not _is_multiple(config.total_time, tau):
                v.append(f"total_time={config.total_time} is not an integer multiple of tau={tau}")
    return v


def _is_multiple(total: float, tau: float) -> bool:
    n = round(total / tau)
    return n >= 1 and abs(n * tau - total) <= 1e-9 * max(1.0, total)


def resolve_outdir(config: ScenarioConfig) -> Path:
    if config.outdir:
        return Path(config.outdir)
    base = os.environ.get(OUTDIR_ENV)
    return Path(base) / config.scenario if base else Path("cmpm_runs") / config.scenario


def config_echo(config: ScenarioConfig) -> dict[str, str]:
    echo = {}
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        key = _FIELD_KEYS.get(f.name, f.name)
        if f.name == "outdir":
            value = str(resolve_outdir(config))
        echo[key] = _fmt_value(value)
    return echo


@dataclass
class RunSummary:
    scenario: str
    metrics: dict[str, object]
    config: dict[str, str]
    wall_clock: float = 0.0
    files: list[str] = field(default_factory=list)

    def to_text(self, include_wall_clock: bool = True) -> str:
        lines = [f"scenario = {self.scenario}"]
        lines += [f"{k} = {_fmt_value(v)}" for k, v in self.metrics.items()]
        lines += [f"config.{k} = {v}" for k, v in self.config.items()]
        if include_wall_clock:
            lines.append(f"wall_clock_seconds = {self.wall_clock:.3f}")
        return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _fmt_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return _fmt(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt_value(x) for x in value)
    if value is None:
        return "none"
    return str(value)


def _write_csv(path: Path, header: str, columns) -> None:
    rows = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_trajectory(path: Path, tgrid, centroids, x_cl, x_lo, x_hi) -> None:
    c = np.asarray(centroids)
    _write_csv(path, TRAJECTORY_HEADER, [tgrid, c.real, c.imag, x_cl, x_lo, x_hi])


def _write_band(path: Path, band: ClassicalBand) -> None:
    _write_csv(path, BAND_HEADER, [band.tgrid, band.x_mean, band.x_lo, band.x_hi, band.p_mean, band.p_lo, band.p_hi])


def _specs(config: ScenarioConfig):
    quantum = kerr_spec(config.hbar, config.omega, config.lam)
    classical = kerr_classical_spec(config.hbar, config.omega, config.lam, config.classical_ordering)
    return quantum, classical


def _scheme(config: ScenarioConfig, tau: float | None = None) -> MeasurementScheme:
    return MeasurementScheme(
        tau=config.tau if tau is None else tau,
        delta_alpha=config.delta_alpha,
        jump=config.jump,
        seed=config.seed,
        record_substeps=config.record_substeps,
        noise=config.noise,
        timing=config.measurement_timing,
        record_jitter=config.delta_t if config.jitter_quantum else 0.0,
    )


def _band(config: ScenarioConfig, spec, tgrid, delta_t: float) -> ClassicalBand:
    return ensemble_band(
        spec, config.alpha0, config.band_alpha, delta_t, config.classical_ensemble, tgrid, config.seed,
        reset_interval=config.tau if config.band_resets and config.jump else None,
        noise=config.noise, envelope=config.band_envelope,
    )


def _run_figure(config: ScenarioConfig, out: Path) -> dict[str, object]:
    quantum, classical = _specs(config)
    ens = run_ensemble(quantum, config.alpha0, _scheme(config), config.total_time, config.dim,
                       config.realizations, workers=config.workers)
    tgrid = ens.tgrid
    band = _band(config, classical, tgrid, config.delta_t)
    metrics: dict[str, object] = {
        "delta_alpha_over_alpha": config.delta_alpha / abs(config.alpha0) if config.alpha0 else float("inf"),
        "band_halfwidth_mean": float(np.mean(band.halfwidth)),
        "band_halfwidth_max": float(np.max(band.halfwidth)),
    }
    for k in range(min(config.saved_realizations, ens.R)):
        _write_trajectory(out / f"real_{k}.csv", tgrid, ens.members[k], band.x_mean, band.x_lo, band.x_hi)
    _write_band(out / "band.csv", band)
    metrics["coverage_real_0"] = coverage_fraction(ens.members[0].real, band)
    single_jumps = [max_adjacent_jump(m.real) for m in ens.members]
    metrics["max_jump_single"] = float(max(single_jumps))
    if ens.R > 1:
        mean = ens.x_mean + 1j * ens.p_mean
        _write_trajectory(out / "mean.csv", tgrid, mean, band.x_mean, band.x_lo, band.x_hi)
        metrics["coverage_mean"] = coverage_fraction(ens.x_mean, band)
        metrics["max_jump_mean"] = max_adjacent_jump(ens.x_mean)
        metrics["jump_ratio"] = metrics["max_jump_mean"] / metrics["max_jump_single"]
    if config.delta_t > 0:
        ref = _band(config, classical, tgrid, 0.0)
        _write_band(out / "band_dt0.csv", ref)
        metrics["band_halfwidth_mean_dt0"] = float(np.mean(ref.halfwidth))
        metrics["coverage_real_0_dt0"] = coverage_fraction(ens.members[0].real, ref)
    return metrics


def loglog_slope(taus, values) -> float:
    """Least-squares slope of log(values) against log(taus)."""
    return float(np.polyfit(np.log(taus), np.log(values), 1)[0])


def _run_converge(config: ScenarioConfig, out: Path) -> dict[str, object]:
    quantum, classical = _specs(config)
    frame = SemiclassicalFrame(classical, config.alpha0, config.dim, config.total_time)
    usc_final = propagate_usc(frame, coherent_state(config.alpha0, config.dim), config.total_time)
    metrics: dict[str, object] = {}
    devs, fids = [], []
    for i, tau in enumerate(config.taus):
        traj = run_protocol(quantum, config.alpha0, _scheme(config, tau), config.total_time, config.dim)
        cl = integrate_classical(classical, config.alpha0, traj.tgrid)
        devs.append(float(np.max(np.abs(traj.centroids - cl.alpha))))
        fids.append(overlap_fidelity(traj.final_state, usc_final))
        _write_trajectory(out / f"traj_tau_{i}.csv", traj.tgrid, traj.centroids, cl.x, cl.x, cl.x)
        metrics[f"max_deviation_{i}"] = devs[-1]
        metrics[f"final_fidelity_usc_{i}"] = fids[-1]
    _write_csv(out / "converge.csv", "tau,max_deviation,final_fidelity_usc", [config.taus, devs, fids])
    metrics["deviation_strictly_decreasing"] = bool(np.all(np.diff(devs) < 0))
    metrics["fidelity_increasing"] = bool(np.all(np.diff(fids) > 0))
    if len(devs) > 1:
        metrics["loglog_slope"] = loglog_slope(config.taus, devs)
        metrics["loglog_slope_last_pair"] = loglog_slope(config.taus[-2:], devs[-2:])
    return metrics


def _run_dyson(config: ScenarioConfig, out: Path) -> dict[str, object]:
    quantum, _ = _specs(config)
    frame = SemiclassicalFrame(quantum, config.alpha0, config.dim, max(config.taus))
    rho0 = coherent_state(config.alpha0, config.dim)
    norms, gaps = [], []
    metrics: dict[str, object] = {}
    for i, tau in enumerate(config.taus):
        rep = first_order_correction_norm(frame, rho0, tau, norm=config.correction_norm)
        norms.append(rep.first_order_norm)
        gaps.append(rep.fidelity_gap)
        metrics[f"first_order_norm_{i}"] = rep.first_order_norm
        metrics[f"fidelity_gap_{i}"] = rep.fidelity_gap
    _write_csv(out / "dyson.csv", "tau,first_order_norm,fidelity_gap", [config.taus, norms, gaps])
    ratios = [norms[i] / norms[i + 1] for i in range(len(norms) - 1) if norms[i + 1] > 0]
    if ratios:
        metrics["min_norm_ratio"] = float(min(ratios))
    metrics["gap_strictly_decreasing"] = bool(np.all(np.diff(gaps) < 0))
    return metrics


_RUNNERS = {
    "fig2a": _run_figure,
    "fig2b": _run_figure,
    "fig2c": _run_figure,
    "fig2d": _run_figure,
    "fig3": _run_figure,
    "converge": _run_converge,
    "dyson": _run_dyson,
}


def run_scenario(config: ScenarioConfig) -> RunSummary:
    """Run a validated scenario, writing CSVs and ``summary.txt`` into its outdir.

    Files are produced in a temporary sibling directory and moved into place
    only after the whole run succeeds.
    """
    problems = validate_config(config)
    if problems:
        raise ConfigError("; ".join(problems))
    outdir = resolve_outdir(config)
    outdir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{outdir.name}-", dir=outdir.parent))
    start = time.perf_counter()
    try:
        metrics = _RUNNERS[config.scenario](config, staging)
        summary = RunSummary(config.scenario, metrics, config_echo(config))
        summary.wall_clock = time.perf_counter() - start
        (staging / "summary.txt").write_text(summary.to_text())
        outdir.mkdir(parents=True, exist_ok=True)
        for item in sorted(staging.iterdir()):
            os.replace(item, outdir / item.name)
            summary.files.append(str(outdir / item.name))
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    log.info("%s finished in %.2fs -> %s", config.scenario, summary.wall_clock, outdir)
    return summary
