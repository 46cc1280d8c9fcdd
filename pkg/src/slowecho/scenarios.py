"""Config-driven experiment runs and their artifacts.

Every runner returns in-memory results; ``write_*`` helpers put CSV, JSON
and figures into an output directory. Artifacts carry no timestamps so that
a rerun of the same config reproduces them byte for byte.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (
    EchoEvent,
    FitResult,
    detect_echoes,
    echo_windows,
    fit_exponential,
    group_delay,
    group_velocity,
    optical_depth,
    slow_factor,
    widened,
    window_energy,
)
from .burn import BurnConfig, PopulationMap, burn, predicted_group_delay
from .config import ScenarioConfig
from .errors import AnalysisError, ConfigError, NoPulseError
from .model import Grids, build_weights, render_field, validate_sequence
from .propagation import (
    FieldRecord,
    calibrate_coupling,
    energy_transmission,
    march,
)

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("t_h_us", "hole_depth", "tau_g_us", "v_g_km_s", "eta", "echo_efficiency")
MIN_SWEEP_POINTS = 4


@dataclass
class RunResult:
    record: FieldRecord
    report: dict
    population: Optional[PopulationMap] = None


@dataclass(frozen=True)
class SweepRow:
    t_h_us: float
    hole_depth: float
    tau_g_us: float
    v_g_km_s: float
    eta: float
    echo_efficiency: float

    def values(self) -> tuple:
        return tuple(getattr(self, c) for c in SWEEP_COLUMNS)


@dataclass
class SweepResult:
    rows: list
    fit: Optional[FitResult]
    extra: dict = field(default_factory=dict)


def _weights(cfg: ScenarioConfig):
    return build_weights(cfg.grids, cfg.line_mode, cfg.line_fwhm)


def analyze(record: FieldRecord, cfg: ScenarioConfig, pop: Optional[PopulationMap] = None) -> dict:
    """Optical depth, delay, velocity and echoes of one run, as a flat report."""
    seq = cfg.sequence
    d = seq.get("D")
    if d is None:
        raise AnalysisError("the sequence has no D pulse")
    d_window = (d.t_start_us, d.t_end_us)
    t = record.t_grid
    report = {"optical_depth": optical_depth(record, d_window)}
    e_in = window_energy(t, record.intensity_in, d_window)
    s_d = window_energy(t, record.intensity_out, widened(d_window))
    r = seq.get("R")
    if r is not None and r.t_start_us < widened(d_window)[1]:
        s_d = window_energy(t, record.intensity_out, (d.t_start_us, r.t_start_us))
    report["d_transmitted_fraction"] = s_d / e_in
    report["d_absorbed_fraction"] = 1.0 - s_d / e_in

    exclude = [widened((p.t_start_us, p.t_end_us)) for p in seq.coherent if p is not d]
    try:
        tau = group_delay(record, d_window, exclude=exclude)
    except NoPulseError:
        tau = math.nan
    report["tau_g_us"] = tau
    if tau > 0:
        report["v_g_km_s"] = group_velocity(tau, cfg.medium)
        report["eta"] = slow_factor(report["v_g_km_s"])
    else:
        report["v_g_km_s"] = math.nan
        report["eta"] = math.nan
    if pop is not None and cfg.burn is not None:
        report["tau_g_predicted_us"] = predicted_group_delay(
            pop, cfg.medium, _weights(cfg), cfg.burn.hole_hwhm, strict=False)
        report["hole_depth"] = float(np.mean(pop.hole_depth()))
    else:
        report["tau_g_predicted_us"] = 0.0
        report["hole_depth"] = 0.0

    echoes = detect_echoes(record, seq, tau_g=tau if tau > 0 else 0.0) if r is not None else []
    report["echoes"] = [e.as_dict() for e in echoes]
    primary = [e for e in echoes if e.order == 1]
    report["echo_efficiency"] = primary[0].efficiency if primary else 0.0
    report["echo_efficiency_total"] = float(sum(e.efficiency for e in echoes))
    report["max_population_drift"] = record.max_population_drift
    return report


def simulate(cfg: ScenarioConfig, kappa=None) -> RunResult:
    """Burn (when configured), calibrate, march and analyse one configuration."""
    grids = cfg.grids.check()
    validate_sequence(cfg.sequence, grids)
    weights = _weights(cfg)
    pop = burn(cfg.medium, grids, weights, cfg.burn) if cfg.burn is not None else None
    if kappa is None:
        kappa = calibrate_coupling(cfg.medium, grids, weights)
    record = march(render_field(cfg.sequence, grids), cfg.medium, grids, weights, pop, kappa,
                   probes=cfg.probes)
    report = analyze(record, cfg, pop)
    report["kappa"] = kappa.kappa if hasattr(kappa, "kappa") else float(kappa)
    return RunResult(record, report, pop)


def run_single(cfg: ScenarioConfig, out_dir=None) -> RunResult:
    result = simulate(cfg)
    if out_dir is not None:
        write_run(result, cfg, Path(out_dir), "run")
        write_manifest(cfg, Path(out_dir))
    return result


def _require_burn(cfg: ScenarioConfig):
    if cfg.burn is None:
        raise ConfigError(f"scenario {cfg.scenario} needs a burn configuration")


def run_fig2_pair(cfg: ScenarioConfig, out_dir=None) -> dict:
    """Identical runs with and without the H burn; reports the echo enhancement."""
    _require_burn(cfg)
    plain = simulate(cfg.without_burn())
    holed = simulate(cfg)
    e0 = plain.report["echo_efficiency"]
    e1 = holed.report["echo_efficiency"]
    report = {
        "no_burn": plain.report,
        "with_burn": holed.report,
        "enhancement": e1 / e0 if e0 > 0 else math.inf,
    }
    if out_dir is not None:
        out = Path(out_dir)
        write_run(plain, cfg.without_burn(), out, "no_burn")
        write_run(holed, cfg, out, "with_burn")
        _write_json(out / "fig2_pair.json", report)
        from .plotting import plot_pair
        plot_pair(plain.record, holed.record, cfg.sequence, out / "fig2_pair.svg")
        write_manifest(cfg, out)
    return {"report": report, "runs": (plain, holed)}


def run_backward_control(cfg: ScenarioConfig, out_dir=None) -> dict:
    """Forward-burn, backward-burn and unburned runs on the same grids."""
    _require_burn(cfg)
    fwd_cfg = cfg.with_burn(replace(cfg.burn, burn_direction="forward"))
    bwd_cfg = cfg.with_burn(replace(cfg.burn, burn_direction="backward"))
    runs = {
        "forward": simulate(fwd_cfg),
        "backward": simulate(bwd_cfg),
        "no_burn": simulate(cfg.without_burn()),
    }
    report = {k: v.report["echo_efficiency"] for k, v in runs.items()}
    report["reports"] = {k: v.report for k, v in runs.items()}
    if out_dir is not None:
        out = Path(out_dir)
        for k, v in runs.items():
            write_run(v, {"forward": fwd_cfg, "backward": bwd_cfg}.get(k, cfg.without_burn()),
                      out, k)
        _write_json(out / "backward_control.json", report)
        write_manifest(cfg, out)
    return {"report": report, "runs": runs}


def _sweep_point(cfg: ScenarioConfig, kappa: float) -> dict:
    result = simulate(cfg, kappa)
    rep = dict(result.report)
    if result.population is not None:
        rep["n_g_center_entrance"] = float(result.population.hole_center()[0])
    else:
        rep["n_g_center_entrance"] = 1.0
    return rep


def _map_points(cfgs, kappa, threads: int):
    if threads > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_sweep_point, cfgs, [kappa] * len(cfgs)))
    return [_sweep_point(c, kappa) for c in cfgs]


def _row(t_h, rep) -> SweepRow:
    return SweepRow(t_h, rep["hole_depth"], rep["tau_g_us"], rep["v_g_km_s"], rep["eta"],
                    rep["echo_efficiency"])


def _fit_rows(rows, c_mode) -> Optional[FitResult]:
    pts = [(r.tau_g_us, r.echo_efficiency) for r in rows
           if r.tau_g_us > 0 and r.echo_efficiency > 0]
    if len(pts) < 3:
        return None
    return fit_exponential(pts, c_mode)


def run_fig3_sweep(cfg: ScenarioConfig, out_dir=None, threads: int = 1) -> SweepResult:
    """Sweep the entrance hole depth; fit echo efficiency against group delay."""
    _require_burn(cfg)
    if len(cfg.sweep_values) < MIN_SWEEP_POINTS:
        raise AnalysisError(f"fig3 sweep needs at least {MIN_SWEEP_POINTS} hole depths, "
                            f"got {len(cfg.sweep_values)}")
    kappa = calibrate_coupling(cfg.medium, cfg.grids.check(), _weights(cfg))
    values = sorted(cfg.sweep_values)
    cfgs = [cfg.with_burn(cfg.burn.with_entrance_depth(v, cfg.medium)) for v in values]
    reps = _map_points(cfgs, kappa, threads)
    rows = [_row(cfg.burn.h_pulse.duration_us, rep) for rep in reps]
    valid = [r for r in rows if r.tau_g_us > 0 and r.echo_efficiency > 0]
    if len(valid) < MIN_SWEEP_POINTS:
        raise AnalysisError(f"only {len(valid)} sweep points gave a positive delay and an echo")
    result = SweepResult(rows, _fit_rows(rows, cfg.c_mode),
                         {"entrance_depth": values, "reports": reps})
    if out_dir is not None:
        write_sweep(result, cfg, Path(out_dir), "fig3")
    return result


def run_fig4_scan(cfg: ScenarioConfig, out_dir=None, threads: int = 1) -> SweepResult:
    """Scan the H duration under the damped-Rabi burn model."""
    _require_burn(cfg)
    if cfg.burn.model != "damped_rabi":
        raise ConfigError("the fig4 scan needs burn.model = damped_rabi")
    kappa = calibrate_coupling(cfg.medium, cfg.grids.check(), _weights(cfg))
    values = sorted(cfg.sweep_values)
    cfgs = []
    for t_h in values:
        if t_h <= 0:
            cfgs.append(cfg.without_burn())
        else:
            h = replace(cfg.burn.h_pulse, duration_us=t_h,
                        t_start_us=-cfg.burn.wait_after_h_us - t_h)
            cfgs.append(cfg.with_burn(replace(cfg.burn, h_pulse=h)))
    reps = _map_points(cfgs, kappa, threads)
    rows = [_row(t_h, rep) for t_h, rep in zip(values, reps)]
    n_center = [rep["n_g_center_entrance"] for rep in reps]
    sd = [rep["d_transmitted_fraction"] for rep in reps]
    extrema = check_cosine_extrema(values, n_center, entrance_rabi(cfg))
    result = SweepResult(rows, _fit_rows(rows, cfg.c_mode),
                         {"n_g_center": n_center, "sd_fraction": sd, "extrema": extrema,
                          "reports": reps})
    if out_dir is not None:
        write_sweep(result, cfg, Path(out_dir), "fig4")
        with (Path(out_dir) / "fig4_diagnostics.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_h_us", "n_g_center", "sd_transmitted_fraction"])
            for row in zip(values, n_center, sd):
                w.writerow([repr(float(x)) for x in row])
    if not extrema["ok"]:
        raise AnalysisError(f"hole-centre population extrema misplaced: {extrema}")
    return result


def entrance_rabi(cfg: ScenarioConfig) -> float:
    """H Rabi frequency seen by the first slice after saturable absorption."""
    from .burn import cell_centers, h_intensity_profile
    h = cfg.burn.h_pulse
    z0 = cell_centers(cfg.medium, cfg.grids)[:1]
    i = h_intensity_profile(cfg.medium, h.rabi_peak ** 2, cfg.burn.saturation_intensity(cfg.medium), z0)
    return float(math.sqrt(i[0]))


def check_cosine_extrema(t_h, n_center, rabi) -> dict:
    """Interior extrema of n(T_H) must sit within one scan step of k*pi/rabi."""
    t_h = np.asarray(t_h, dtype=float)
    n = np.asarray(n_center, dtype=float)
    step = float(np.max(np.diff(t_h))) if t_h.size > 1 else math.inf
    found = []
    for i in range(1, n.size - 1):
        is_min = n[i] < n[i - 1] and n[i] <= n[i + 1]
        is_max = n[i] > n[i - 1] and n[i] >= n[i + 1]
        if is_min or is_max:
            k = max(1, round(rabi * t_h[i] / math.pi))
            found.append({"t_h_us": float(t_h[i]), "kind": "min" if is_min else "max",
                          "expected_us": k * math.pi / rabi,
                          "within_step": abs(t_h[i] - k * math.pi / rabi) <= step})
    return {"extrema": found, "step_us": step, "ok": all(e["within_step"] for e in found)}


# artifacts ---------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return _clean(obj.item())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_run(result: RunResult, cfg: ScenarioConfig, out: Path, stem: str):
    from .plotting import plot_trace
    out.mkdir(parents=True, exist_ok=True)
    result.record.to_csv(out / f"{stem}_trace.csv")
    _write_json(out / f"{stem}_report.json", result.report)
    if result.population is not None:
        result.population.to_csv(out / f"{stem}_population.csv")
    if result.record.probes:
        with (out / f"{stem}_probes.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            keys = sorted(result.record.probes)
            w.writerow(["t_us"] + [f"{p}_{k}" for k in keys for p in ("re", "im")])
            for i, t in enumerate(result.record.t_grid):
                vals = [t]
                for k in keys:
                    v = result.record.probes[k][i]
                    vals += [v.real, v.imag]
                w.writerow([repr(float(x)) for x in vals])
    plot_trace(result.record, cfg.sequence, out / f"{stem}_trace.svg",
               echo_windows(cfg.sequence, max(result.report.get("tau_g_us", 0.0) or 0.0, 0.0))
               if cfg.sequence.get("R") else [])


def write_sweep_csv(result: SweepResult, path: Path) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in result.rows:
            w.writerow([repr(float(x)) for x in row.values()])
    return path


def read_points_csv(path) -> list:
    """(tau_g, intensity) pairs from a sweep CSV or any two-column CSV."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise AnalysisError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if "tau_g_us" in header and "echo_efficiency" in header:
        i, j, body = header.index("tau_g_us"), header.index("echo_efficiency"), rows[1:]
    else:
        try:
            float(header[0])
            body = rows
        except ValueError:
            body = rows[1:]
        i, j = 0, 1
    try:
        pts = [(float(r[i]), float(r[j])) for r in body if r]
    except (ValueError, IndexError):
        raise AnalysisError(f"{path}: could not read numeric (tau, intensity) columns") from None
    return [(x, y) for x, y in pts if math.isfinite(x) and math.isfinite(y)]


def write_sweep(result: SweepResult, cfg: ScenarioConfig, out: Path, stem: str):
    from .plotting import plot_sweep
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(result, out / f"{stem}_sweep.csv")
    _write_json(out / f"{stem}_fit.json", result.fit.as_dict() if result.fit else {})
    _write_json(out / f"{stem}_reports.json", result.extra)
    plot_sweep(result, out / f"{stem}_sweep.svg")
    write_manifest(cfg, out)


def convergence_indicator(cfg: ScenarioConfig) -> dict:
    """Relative change of weak-probe transmission when a reduced nz is doubled."""
    weights = _weights(cfg)
    nz0 = max(32, cfg.grids.nz // 4)
    g = replace(cfg.grids, nz=nz0)
    kappa = cfg.medium.optical_depth_d0 / (cfg.medium.length_mm * math.pi * weights.density_at_zero)
    if kappa == 0:
        return {"nz": [nz0, 2 * nz0], "relative_change": 0.0}
    t1 = energy_transmission(cfg.medium, g, weights, kappa)
    t2 = energy_transmission(cfg.medium, replace(g, nz=2 * nz0), weights, kappa)
    return {"nz": [nz0, 2 * nz0], "relative_change": abs(t2 - t1) / t1}


def write_manifest(cfg: ScenarioConfig, out: Path) -> Path:
    import numba
    import scipy
    manifest = {
        "scenario": cfg.scenario,
        "config_sha256": cfg.config_hash,
        "versions": {"slowecho": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "numba": numba.__version__},
        "grids": {"nz": cfg.grids.nz, "n_delta": cfg.grids.n_delta,
                  "delta_max": cfg.grids.delta_max, "dt_us": cfg.grids.dt_us,
                  "nt": cfg.grids.nt},
        "convergence": convergence_indicator(cfg),
    }
    return _write_json(out / "manifest.json", manifest)


def run_scenario(cfg: ScenarioConfig, out_dir=None, threads: int = 1):
    """Dispatch on ``cfg.scenario``."""
    out = out_dir if out_dir is not None else cfg.output_dir
    if cfg.scenario == "single_run":
        return run_single(cfg, out)
    if cfg.scenario == "fig2_pair":
        return run_fig2_pair(cfg, out)
    if cfg.scenario == "backward_control":
        return run_backward_control(cfg, out)
    if cfg.scenario == "fig3_sweep":
        return run_fig3_sweep(cfg, out, threads)
    if cfg.scenario == "fig4_scan":
        return run_fig4_scan(cfg, out, threads)
    raise ConfigError(f"unknown scenario {cfg.scenario!r}")
