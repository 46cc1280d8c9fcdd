"""Domain types, discretisation grids and the inhomogeneous line model.

Units are fixed throughout the package: time in microseconds, length in
millimetres, angular frequencies (detunings and Rabi frequencies) in rad/us,
intensities as |Omega|^2 in (rad/us)^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, OverlapError, ResolutionError

PULSE_LABELS = ("H", "D", "R", "custom")
PULSE_SHAPES = ("square", "gaussian")
# gaussian pulses are truncated at +-3 sigma of the field envelope
GAUSS_HALF_WIDTH_SIGMAS = 3.0
PHASE_STEP_BOUND = 0.1


@dataclass(frozen=True)
class MediumSpec:
    length_mm: float = 5.0
    optical_depth_d0: float = 2.2
    t1_opt_us: float = 160.0
    t2_opt_us: float = 40.0
    shelf_branch_b: float = 0.5
    shelf_lifetime_us: float = math.inf
    repump_rate_per_us: float = 0.0

    def __post_init__(self):
        if not self.length_mm > 0:
            raise ConfigError(f"length_mm must be positive, got {self.length_mm}")
        if not self.optical_depth_d0 >= 0:
            raise ConfigError(f"optical_depth_d0 must be >= 0, got {self.optical_depth_d0}")
        if not (self.t1_opt_us > 0 and self.t2_opt_us > 0):
            raise ConfigError("lifetimes must be positive")
        if self.t2_opt_us > 2 * self.t1_opt_us:
            raise ConfigError("t2_opt_us cannot exceed 2 * t1_opt_us")
        if not 0.0 <= self.shelf_branch_b <= 1.0:
            raise ConfigError(f"shelf_branch_b must lie in [0, 1], got {self.shelf_branch_b}")
        if not self.shelf_lifetime_us > 0 or self.repump_rate_per_us < 0:
            raise ConfigError("shelf lifetime must be positive and repump rate non-negative")

    @property
    def rates(self) -> tuple[float, float, float, float]:
        """(1/T1, 1/T2, branching, shelf return rate); infinite times give zero rates."""
        return (
            1.0 / self.t1_opt_us,
            1.0 / self.t2_opt_us,
            self.shelf_branch_b,
            1.0 / self.shelf_lifetime_us + self.repump_rate_per_us,
        )

    def without_decay(self) -> "MediumSpec":
        return replace(self, t1_opt_us=math.inf, t2_opt_us=math.inf)


@dataclass(frozen=True)
class Pulse:
    """One coherent pulse of the schedule.

    ``t_start_us``/``duration_us`` delimit the support of the envelope. Square
    pulses are flat on it; gaussian pulses have a field sigma of duration/6 and
    are centred on it.
    """

    label: str
    t_start_us: float
    duration_us: float
    rabi_peak: float
    detuning: float = 0.0
    shape: str = "square"

    def __post_init__(self):
        if self.label not in PULSE_LABELS:
            raise ConfigError(f"unknown pulse label {self.label!r}")
        if self.shape not in PULSE_SHAPES:
            raise ConfigError(f"unknown pulse shape {self.shape!r}")
        if not self.duration_us > 0:
            raise ConfigError(f"pulse {self.label}: duration must be positive")
        if self.rabi_peak < 0:
            raise ConfigError(f"pulse {self.label}: rabi_peak must be >= 0")

    @classmethod
    def from_area(cls, label, t_start_us, duration_us, area, detuning=0.0, shape="square"):
        return cls(label, t_start_us, duration_us, area / _area_per_peak(shape, duration_us),
                   detuning, shape)

    @property
    def t_end_us(self) -> float:
        return self.t_start_us + self.duration_us

    @property
    def t_center_us(self) -> float:
        return self.t_start_us + 0.5 * self.duration_us

    @property
    def area(self) -> float:
        return self.rabi_peak * _area_per_peak(self.shape, self.duration_us)

    def envelope(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        inside = (t >= self.t_start_us) & (t < self.t_end_us)
        if self.shape == "square":
            env = np.where(inside, self.rabi_peak, 0.0)
        else:
            sigma = self.duration_us / (2 * GAUSS_HALF_WIDTH_SIGMAS)
            x = (t - self.t_center_us) / sigma
            env = np.where(inside, self.rabi_peak * np.exp(-0.5 * x * x), 0.0)
        phase = np.exp(1j * self.detuning * (t - self.t_start_us))
        return env * phase


def _area_per_peak(shape: str, duration: float) -> float:
    if shape == "square":
        return duration
    sigma = duration / (2 * GAUSS_HALF_WIDTH_SIGMAS)
    return sigma * math.sqrt(2 * math.pi) * math.erf(GAUSS_HALF_WIDTH_SIGMAS / math.sqrt(2))


@dataclass(frozen=True)
class PulseSequence:
    pulses: tuple[Pulse, ...]
    t_end_us: float

    def __init__(self, pulses: Sequence[Pulse], t_end_us: float):
        object.__setattr__(self, "pulses", tuple(pulses))
        object.__setattr__(self, "t_end_us", float(t_end_us))

    def get(self, label: str) -> Optional[Pulse]:
        for p in self.pulses:
            if p.label == label:
                return p
        return None

    @property
    def coherent(self) -> tuple[Pulse, ...]:
        """Pulses that are integrated coherently (everything except the H burn)."""
        return tuple(p for p in self.pulses if p.label != "H")

    def expected_echo_time(self) -> Optional[float]:
        d, r = self.get("D"), self.get("R")
        if d is None or r is None:
            return None
        return 2 * r.t_center_us - d.t_center_us

    def scaled(self, factor: float) -> "PulseSequence":
        return PulseSequence([replace(p, rabi_peak=p.rabi_peak * factor) for p in self.pulses],
                             self.t_end_us)


@dataclass(frozen=True)
class Grids:
    nz: int = 128
    n_delta: int = 301
    delta_max: float = 25.0
    dt_us: float = 0.002
    nt: int = 15001

    def __post_init__(self):
        if self.nz < 1 or self.nt < 2:
            raise ConfigError("nz and nt must be positive")
        if not self.dt_us > 0:
            raise ConfigError("dt_us must be positive")

    @classmethod
    def for_horizon(cls, t_end_us: float, dt_us: float = 0.002, **kw) -> "Grids":
        return cls(dt_us=dt_us, nt=int(round(t_end_us / dt_us)) + 1, **kw)

    @property
    def t_end_us(self) -> float:
        return (self.nt - 1) * self.dt_us

    @property
    def t_grid(self) -> np.ndarray:
        return np.arange(self.nt) * self.dt_us

    @property
    def delta_spacing(self) -> float:
        return 2 * self.delta_max / (self.n_delta - 1)

    def deltas(self) -> np.ndarray:
        half = self.n_delta // 2
        return np.arange(-half, half + 1) * self.delta_spacing

    def check(self) -> "Grids":
        """Raise unless the grid satisfies the simulation invariants."""
        if self.nz < 32:
            raise ConfigError(f"nz must be >= 32, got {self.nz}")
        if self.n_delta % 2 == 0:
            raise ConfigError("n_delta must be odd so that detuning 0 lies on the grid")
        if self.dt_us * self.delta_max > PHASE_STEP_BOUND:
            raise ResolutionError(
                f"dt_us*delta_max = {self.dt_us * self.delta_max:.3g} exceeds {PHASE_STEP_BOUND}")
        return self


@dataclass(frozen=True)
class SpectralWeights:
    deltas: np.ndarray
    weights: np.ndarray
    mode: str = "flat"
    fwhm: Optional[float] = field(default=None)

    @property
    def spacing(self) -> float:
        return float(self.deltas[1] - self.deltas[0])

    @property
    def center_index(self) -> int:
        return int(np.argmin(np.abs(self.deltas)))

    @property
    def density_at_zero(self) -> float:
        """Spectral weight per unit detuning at the line centre."""
        return float(self.weights[self.center_index] / self.spacing)


def build_weights(grids: Grids, mode: str = "flat", fwhm: Optional[float] = None) -> SpectralWeights:
    """Discretise the inhomogeneous line on the detuning grid.

    ``flat`` gives uniform weights over +-delta_max; ``gaussian`` samples a
    Gaussian of the given FWHM and truncates it at the window edge. Both are
    normalised to unit sum.
    """
    if grids.n_delta < 3:
        raise ConfigError(f"n_delta must be >= 3, got {grids.n_delta}")
    if not grids.delta_max > 0:
        raise ConfigError(f"delta_max must be positive, got {grids.delta_max}")
    deltas = grids.deltas()
    if mode == "flat":
        raw = np.ones_like(deltas)
    elif mode == "gaussian":
        if fwhm is None or not fwhm > 0:
            raise ConfigError("gaussian line needs a positive fwhm")
        raw = np.exp(-4.0 * math.log(2.0) * (deltas / fwhm) ** 2)
    else:
        raise ConfigError(f"unknown line mode {mode!r}")
    weights = raw / math.fsum(raw)
    deltas.setflags(write=False)
    weights.setflags(write=False)
    return SpectralWeights(deltas, weights, mode, fwhm)


def validate_sequence(seq: PulseSequence, grids: Grids) -> PulseSequence:
    """Return ``seq`` if it is time ordered, non-overlapping and resolvable on ``grids``."""
    starts = [p.t_start_us for p in seq.pulses]
    if starts != sorted(starts):
        raise OverlapError("pulses must be ordered by t_start_us")
    coherent = seq.coherent
    for a, b in zip(coherent, coherent[1:]):
        if b.t_start_us < a.t_end_us:
            raise OverlapError(f"pulse {b.label} at {b.t_start_us} us overlaps {a.label}")
    for p in seq.pulses:
        if p.duration_us < 10 * grids.dt_us:
            raise ResolutionError(
                f"pulse {p.label}: duration {p.duration_us} us is under 10 time steps")
        rate = max(abs(p.detuning) + p.rabi_peak, grids.delta_max)
        if p.label != "H" and rate * grids.dt_us > PHASE_STEP_BOUND:
            raise ResolutionError(f"pulse {p.label}: phase step {rate * grids.dt_us:.3g} too large")
    for p in coherent:
        if p.t_end_us > seq.t_end_us:
            raise ConfigError(f"pulse {p.label} ends after the horizon")
    echo = seq.expected_echo_time()
    if echo is not None and seq.t_end_us < echo + seq.get("D").duration_us:
        raise ConfigError(f"horizon {seq.t_end_us} us does not cover the echo at {echo:.3f} us")
    return seq


def render_field(seq: PulseSequence, grids: Grids) -> np.ndarray:
    """Sample the coherent pulses (H excluded) onto the time grid."""
    t = grids.t_grid
    omega = np.zeros(t.size, dtype=complex)
    for p in seq.coherent:
        omega += p.envelope(t)
    return omega
