"""Preparation phase: spectral hole burning by the dummy H pulse.

The millisecond-scale repump/burn cycle is far too slow to integrate
coherently next to a microsecond echo window, so each z-slice gets a closed
form for its ground-state population after the burn. The local H intensity
falls off along z by saturable Beer absorption, which is what produces the
logarithmic population profile.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .errors import ConfigError, NoHoleError
from .model import Grids, MediumSpec, Pulse, SpectralWeights

BURN_MODELS = ("rate_saturation", "damped_rabi")
MIN_HOLE_DIP = 1e-6


@dataclass(frozen=True)
class BurnConfig:
    model: str = "rate_saturation"
    hole_hwhm: float = 0.42
    h_pulse: Pulse = Pulse("H", -600.0, 600.0, 0.0)
    wait_after_h_us: float = 500.0
    repump_on: bool = True
    burn_direction: str = "forward"
    t_damp_us: float = math.inf
    i_sat: Optional[float] = None
    allow_short_wait: bool = False

    def __post_init__(self):
        if self.model not in BURN_MODELS:
            raise ConfigError(f"unknown burn model {self.model!r}")
        if self.burn_direction not in ("forward", "backward"):
            raise ConfigError(f"unknown burn direction {self.burn_direction!r}")
        if self.h_pulse.label != "H":
            raise ConfigError("the burn pulse must be labelled H")
        if not self.hole_hwhm > 0:
            raise ConfigError("hole_hwhm must be positive")
        if self.wait_after_h_us < 0:
            raise ConfigError("wait_after_h_us must be >= 0")
        if self.i_sat is not None and not self.i_sat > 0:
            raise ConfigError("i_sat must be positive")

    def saturation_intensity(self, medium: MediumSpec) -> float:
        if self.i_sat is not None:
            return self.i_sat
        return 1.0 / (medium.t1_opt_us * medium.t2_opt_us)

    def with_entrance_depth(self, depth: float, medium: MediumSpec) -> "BurnConfig":
        """Rate-model config whose H intensity burns ``depth`` at the entrance face."""
        if not 0 <= depth < 1:
            raise ConfigError(f"entrance depth must lie in [0, 1), got {depth}")
        s0 = depth / (1.0 - depth)
        peak = math.sqrt(s0 * self.saturation_intensity(medium))
        return replace(self, model="rate_saturation", h_pulse=replace(self.h_pulse, rabi_peak=peak))


@dataclass(frozen=True)
class PopulationMap:
    z_mm: np.ndarray
    deltas: np.ndarray
    n_g: np.ndarray
    n_s: np.ndarray
    n_e: np.ndarray

    @classmethod
    def unburned(cls, medium: MediumSpec, grids: Grids) -> "PopulationMap":
        z = cell_centers(medium, grids)
        shape = (grids.nz, grids.n_delta)
        return cls(z, grids.deltas(), np.ones(shape), np.zeros(shape), np.zeros(shape))

    @property
    def center_index(self) -> int:
        return int(np.argmin(np.abs(self.deltas)))

    def hole_center(self) -> np.ndarray:
        """Ground population at zero detuning, per slice."""
        return self.n_g[:, self.center_index]

    def hole_depth(self) -> np.ndarray:
        return 1.0 - self.hole_center() / self.n_g.max(axis=1)

    def mirrored(self) -> "PopulationMap":
        return PopulationMap(self.z_mm, self.deltas, self.n_g[::-1].copy(),
                             self.n_s[::-1].copy(), self.n_e[::-1].copy())

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["z_mm", "delta_rad_per_us", "n_g", "n_s"])
            for iz, z in enumerate(self.z_mm):
                for j, d in enumerate(self.deltas):
                    w.writerow([repr(float(z)), repr(float(d)), repr(float(self.n_g[iz, j])),
                                repr(float(self.n_s[iz, j]))])
        return path


def cell_centers(medium: MediumSpec, grids: Grids) -> np.ndarray:
    dz = medium.length_mm / grids.nz
    return (np.arange(grids.nz) + 0.5) * dz


def lorentzian(deltas, hwhm: float) -> np.ndarray:
    deltas = np.asarray(deltas, dtype=float)
    return hwhm ** 2 / (hwhm ** 2 + deltas ** 2)


def hole_map(medium: MediumSpec, grids: Grids, depth, hole_hwhm: float) -> PopulationMap:
    """Population map with a Lorentzian hole of the given depth in every slice.

    ``depth`` is a scalar or one value per slice; removed atoms sit in the shelf.
    """
    depth = np.broadcast_to(np.asarray(depth, dtype=float), (grids.nz,))
    deltas = grids.deltas()
    n_g = 1.0 - depth[:, None] * lorentzian(deltas, hole_hwhm)[None, :]
    return PopulationMap(cell_centers(medium, grids), deltas, n_g, 1.0 - n_g, np.zeros_like(n_g))


def h_intensity_profile(medium: MediumSpec, i0: float, i_sat: float, z: np.ndarray,
                        ground=None) -> np.ndarray:
    """Local H intensity at ``z`` under saturable Beer absorption.

    dI/dz = -alpha0 * g(z) * I / (1 + I/I_sat), alpha0 = d0/l, where ``g`` is an
    optional callable giving the available ground fraction.
    """
    if i0 == 0:
        return np.zeros_like(z, dtype=float)
    alpha0 = medium.optical_depth_d0 / medium.length_mm
    if alpha0 == 0:
        return np.full_like(z, i0, dtype=float)

    def rhs(zz, y):
        # integrate ln I to keep the solution positive
        frac = 1.0 if ground is None else ground(zz)
        return [-alpha0 * frac / (1.0 + math.exp(y[0]) / i_sat)]

    sol = solve_ivp(rhs, (0.0, medium.length_mm), [math.log(i0)], t_eval=z,
                    rtol=1e-11, atol=1e-13, method="DOP853")
    return np.exp(sol.y[0])


def burn(medium: MediumSpec, grids: Grids, weights: SpectralWeights, cfg: BurnConfig,
         initial: Optional[PopulationMap] = None) -> PopulationMap:
    """Population map left by the H pulse after the post-burn wait.

    rate_saturation: hole depth s/(1+s) with s = I_H(z)/I_sat.
    damped_rabi: hole-centre ground population (1 + cos(Omega_H T_H) exp(-T_H/T_damp))/2.
    Both imprint a Lorentzian hole of HWHM ``cfg.hole_hwhm`` in detuning.
    """
    h = cfg.h_pulse
    if h.detuning != 0:
        raise ConfigError("the H pulse must be resonant (detuning 0)")
    if cfg.hole_hwhm >= grids.delta_max / 4:
        raise ConfigError(f"hole_hwhm {cfg.hole_hwhm} must stay below delta_max/4")
    if cfg.wait_after_h_us < 3 * medium.t1_opt_us and not cfg.allow_short_wait:
        raise ConfigError(
            f"wait after H ({cfg.wait_after_h_us} us) is shorter than 3*T1; excited atoms "
            "would survive into the echo window (set allow_short_wait to override)")
    if weights.deltas.size != grids.n_delta:
        raise ConfigError("weights do not match the detuning grid")

    z = cell_centers(medium, grids)
    if initial is None or cfg.repump_on:
        start = np.ones((grids.nz, grids.n_delta))
    else:
        start = initial.n_g.copy()
    if h.rabi_peak == 0:
        return PopulationMap(z, grids.deltas(), start, 1.0 - start, np.zeros_like(start))

    i_sat = cfg.saturation_intensity(medium)
    center = grids.n_delta // 2
    ground = None
    if initial is not None and not cfg.repump_on:
        dz = medium.length_mm / grids.nz
        col = start[:, center]
        ground = lambda zz: float(col[min(int(zz / dz), grids.nz - 1)])
    intensity = h_intensity_profile(medium, h.rabi_peak ** 2, i_sat, z, ground)

    if cfg.model == "rate_saturation":
        s = intensity / i_sat
        depth = s / (1.0 + s)
    else:
        area = np.sqrt(intensity) * h.duration_us
        damp = math.exp(-h.duration_us / cfg.t_damp_us)
        depth = 1.0 - 0.5 * (1.0 + np.cos(area) * damp)
    if cfg.burn_direction == "backward":
        depth = depth[::-1]

    n_g = start * (1.0 - depth[:, None] * lorentzian(grids.deltas(), cfg.hole_hwhm)[None, :])
    return PopulationMap(z, grids.deltas(), n_g, 1.0 - n_g, np.zeros_like(n_g))


def ideal_hole_delay(delta_alpha_l: float, hole_hwhm: float) -> float:
    """Group delay at the centre of a Lorentzian transparency hole."""
    return delta_alpha_l / (2.0 * hole_hwhm)


def _susceptibility(u_nodes: np.ndarray, f: np.ndarray, gamma: float) -> complex:
    """Integral of f(u) * i/(u + i*gamma) du for piecewise-linear f on ``u_nodes``."""
    ua, ub = u_nodes[:-1], u_nodes[1:]
    fa, fb = f[:-1], f[1:]
    q = (fb - fa) / (ub - ua)
    p = fa - q * ua
    logs = np.log(ub + 1j * gamma) - np.log(ua + 1j * gamma)
    return complex(np.sum(1j * (q * (ub - ua) + (p - 1j * gamma * q) * logs)))


def kk_group_delay(pop: PopulationMap, medium: MediumSpec, weights: SpectralWeights,
                   hole_hwhm: float, refine: int = 16) -> float:
    """Kramers-Kronig group delay at zero detuning, background included.

    The z-integrated inversion (n_g - n_e) times the line density is treated as
    a continuous profile (cubic interpolation, then exact piecewise-linear
    integration against the homogeneous Lorentzian response). The phase of the
    linear transfer function is differentiated numerically at zero frequency.
    Coupling follows the broad-line Beer law, kappa = d0 / (l * pi * rho(0)).
    A flat line truncated at +-delta_max contributes a small negative delay of
    its own even without a hole.
    """
    if medium.optical_depth_d0 == 0:
        return 0.0
    dz = medium.length_mm / pop.n_g.shape[0]
    inversion = (pop.n_g - pop.n_e).sum(axis=0) * dz
    deltas = np.asarray(weights.deltas, dtype=float)
    density = np.asarray(weights.weights) / weights.spacing
    profile = CubicSpline(deltas, density * inversion)
    fine = np.linspace(deltas[0], deltas[-1], (deltas.size - 1) * refine + 1)
    f = profile(fine)
    kappa = medium.optical_depth_d0 / (medium.length_mm * math.pi * weights.density_at_zero)
    gamma = 1.0 / medium.t2_opt_us
    if gamma == 0:
        gamma = 1e-9 * weights.spacing
    h = min(hole_hwhm, weights.spacing) * 1e-2

    def phase(omega):
        return -0.5 * kappa * _susceptibility(fine + omega, f, gamma).imag

    return (phase(h) - phase(-h)) / (2 * h)


def predicted_group_delay(pop: PopulationMap, medium: MediumSpec, weights: SpectralWeights,
                          hole_hwhm: float, strict: bool = True, refine: int = 16) -> float:
    """Group delay predicted for a weak narrowband pulse through ``pop``.

    Needs a hole: with a dip under 1e-6 this raises NoHoleError, or returns 0
    when ``strict`` is false. See :func:`kk_group_delay` for the method.
    """
    dip = float(np.max(pop.n_g.max(axis=1) - pop.hole_center()))
    if dip < MIN_HOLE_DIP:
        if strict:
            raise NoHoleError(f"hole dip {dip:.3g} is below {MIN_HOLE_DIP:g}")
        return 0.0
    return kk_group_delay(pop, medium, weights, hole_hwhm, refine)
