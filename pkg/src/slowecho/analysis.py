"""Observables extracted from field records.

Optical depth, group delay and velocity, slow factor, echo detection and the
exponential echo-versus-delay fit. All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import AnalysisError, NoPulseError
from .model import MediumSpec, PulseSequence

C_KM_PER_S = 2.99792458e5
DETECT_SNR = 5.0
MIN_ECHO_FRACTION = 1e-6
ECHO_ORDERS = (1, 2, 3)


@dataclass(frozen=True)
class EchoEvent:
    order: int
    t_center_us: float
    window: tuple
    energy: float
    efficiency: float

    def as_dict(self) -> dict:
        return {"order": self.order, "t_center_us": self.t_center_us,
                "window": list(self.window), "energy": self.energy,
                "efficiency": self.efficiency}


@dataclass(frozen=True)
class FitResult:
    a: float
    b: float
    c: float
    r_squared: float

    def as_dict(self) -> dict:
        return asdict(self)

    def __call__(self, tau):
        return self.a * np.exp(self.b * (np.asarray(tau, dtype=float) - self.c))


def _mask(t, lo, hi):
    return (t >= lo) & (t < hi)


def window_energy(t, intensity, window) -> float:
    m = _mask(t, *window)
    if len(t) < 2:
        return 0.0
    return float(np.sum(intensity[m]) * (t[1] - t[0]))


def centroid(t, intensity, window) -> float:
    m = _mask(t, *window)
    total = float(np.sum(intensity[m]))
    if total <= 0:
        raise NoPulseError(f"no intensity in window {window}")
    return float(np.sum(t[m] * intensity[m]) / total)


def optical_depth(record, window) -> float:
    """-ln(E_out/E_in) with both energies taken over ``window``."""
    e_in = window_energy(record.t_grid, record.intensity_in, window)
    if e_in <= 0:
        raise AnalysisError(f"no input energy in window {window}")
    e_out = window_energy(record.t_grid, record.intensity_out, window)
    if e_out <= 0:
        return math.inf
    return -math.log(e_out / e_in)


def widened(window, factor: float = 4.0) -> tuple:
    lo, hi = window
    return (lo, hi + factor * (hi - lo))


def group_delay(record, pulse_window, exclude: Iterable[tuple] = (),
                metric: str = "centroid") -> float:
    """Delay of the transmitted pulse relative to the input pulse.

    The output is searched in the input window extended by four input
    durations. ``metric`` is ``centroid`` (intensity centroid, the default) or
    ``peak`` (peak sample). The output must stand out: its peak field
    amplitude has to exceed five times the RMS amplitude outside the search
    window and any ``exclude`` windows.
    """
    t = record.t_grid
    search = widened(pulse_window)
    i_out = record.intensity_out
    inside = _mask(t, *search)
    if not np.any(inside):
        raise NoPulseError(f"search window {search} is empty")
    peak = math.sqrt(float(np.max(i_out[inside])))
    noise = ~inside
    for w in exclude:
        noise &= ~_mask(t, *w)
    rms = math.sqrt(float(np.mean(i_out[noise]))) if np.any(noise) else 0.0
    if peak <= 0 or peak <= DETECT_SNR * rms:
        raise NoPulseError(f"output peak {peak:.3g} does not exceed {DETECT_SNR:g}x RMS {rms:.3g}")
    if metric == "centroid":
        return centroid(t, i_out, search) - centroid(t, record.intensity_in, pulse_window)
    if metric == "peak":
        t_in = t[_mask(t, *pulse_window)]
        i_in = record.intensity_in[_mask(t, *pulse_window)]
        return float(t[inside][np.argmax(i_out[inside])] - t_in[np.argmax(i_in)])
    raise ValueError(f"unknown delay metric {metric!r}")


def group_velocity(tau_g: float, medium: MediumSpec | float) -> float:
    """Length over delay; mm/us is numerically km/s."""
    length = medium.length_mm if isinstance(medium, MediumSpec) else float(medium)
    if not tau_g > 0:
        raise AnalysisError(f"group velocity needs a positive delay, got {tau_g}")
    return length / tau_g


def slow_factor(v_g: float) -> float:
    if not v_g > 0:
        raise AnalysisError(f"slow factor needs a positive group velocity, got {v_g}")
    return C_KM_PER_S / v_g


def echo_windows(seq: PulseSequence, tau_g: float = 0.0) -> list:
    """(order, window) for the primary echo and its recursions within the horizon."""
    d, r = seq.get("D"), seq.get("R")
    if d is None:
        raise AnalysisError("echo detection needs a D pulse")
    if r is None:
        return []
    width = 2 * max(p.duration_us for p in seq.coherent) + 2 * max(tau_g, 0.0)
    sep = r.t_center_us - d.t_center_us
    out = []
    for k in ECHO_ORDERS:
        c = r.t_center_us + k * sep
        lo, hi = c - width / 2, min(c + width / 2, seq.t_end_us)
        if lo < hi:
            out.append((k, (lo, hi)))
    return out


def detect_echoes(record, seq: PulseSequence, tau_g: float = 0.0,
                  reference: Optional[np.ndarray] = None) -> list:
    """Echo events in the windows at t_R + k*(t_R - t_D), k = 1, 2, 3.

    Window width is twice the longest pulse plus twice ``tau_g``. Where a
    window overlaps an input pulse the reference field (a kappa = 0 run,
    i.e. the input itself by default) is subtracted before integrating, so the
    event measures only the field radiated by the atoms. Efficiency is echo
    energy over the input D energy; events under 1e-6 of it are dropped.
    """
    d = seq.get("D")
    if d is None:
        raise AnalysisError("echo detection needs a D pulse")
    t = record.t_grid
    e_d = window_energy(t, record.intensity_in, (d.t_start_us, d.t_end_us))
    if e_d <= 0:
        raise AnalysisError("input D pulse carries no energy")
    ref = record.omega_in if reference is None else reference
    events = []
    for k, (lo, hi) in echo_windows(seq, tau_g):
        collides = any(p.t_start_us < hi and p.t_end_us > lo for p in seq.coherent)
        field = record.omega_out - ref if collides else record.omega_out
        intensity = np.abs(field) ** 2
        energy = window_energy(t, intensity, (lo, hi))
        if energy < MIN_ECHO_FRACTION * e_d:
            continue
        events.append(EchoEvent(k, centroid(t, intensity, (lo, hi)), (lo, hi), energy,
                                energy / e_d))
    return events


def fit_exponential(points: Sequence, c_mode="min_tau") -> FitResult:
    """Fit y = A*exp(B*(tau - C)) by linear least squares on ln y.

    ``c_mode`` is ``"min_tau"`` (C = smallest tau) or a fixed C, given as a
    number or ``("fixed", c)``. A and C are not separately identifiable, so C
    is a convention and only A absorbs it.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise AnalysisError(f"exponential fit needs at least 3 points, got {len(pts)}")
    tau = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.any(y <= 0):
        raise AnalysisError("exponential fit needs positive intensities")
    if isinstance(c_mode, tuple):
        c = float(c_mode[1])
    elif c_mode == "min_tau":
        c = float(tau.min())
    elif isinstance(c_mode, (int, float)):
        c = float(c_mode)
    else:
        raise ValueError(f"unknown c_mode {c_mode!r}")
    ly = np.log(y)
    design = np.column_stack([tau - c, np.ones_like(tau)])
    (b, intercept), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - design @ np.array([b, intercept])
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    if ss_tot <= 1e-300:
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return FitResult(float(math.exp(intercept)), float(b), c, r2)
