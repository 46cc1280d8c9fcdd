"""Retarded-frame Maxwell propagation coupled to slices of Bloch atoms.

The field obeys dOmega/dz = i*kappa*P(z, t). Each of the ``nz`` cells holds
one slice of atoms at its centre; the z step is the implicit midpoint rule,
solved exactly by letting the atoms feel the field radiated over half a cell
while they are integrated in time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional

import numpy as np

from .bloch import SliceState, evolve_slice
from .burn import PopulationMap
from .errors import BracketError, InstabilityError
from .model import Grids, MediumSpec, Pulse, PulseSequence, SpectralWeights, render_field

CALIBRATION_PROBE_US = 3.0
CALIBRATION_TAIL_US = 1.0
CALIBRATION_AREA = 0.005 * math.pi
# the line window must span this many field-spectrum sigmas of the probe
CALIBRATION_WINDOW_SIGMAS = 10.0


@dataclass
class FieldRecord:
    t_grid: np.ndarray
    omega_in: np.ndarray
    omega_out: np.ndarray
    probes: Dict[int, np.ndarray] = field(default_factory=dict)
    max_population_drift: float = 0.0

    @property
    def dt(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0])

    @property
    def intensity_in(self) -> np.ndarray:
        return np.abs(self.omega_in) ** 2

    @property
    def intensity_out(self) -> np.ndarray:
        return np.abs(self.omega_out) ** 2

    def energy_in(self) -> float:
        return float(np.sum(self.intensity_in) * self.dt)

    def energy_out(self) -> float:
        return float(np.sum(self.intensity_out) * self.dt)

    def scaled(self, s: float) -> "FieldRecord":
        return FieldRecord(self.t_grid, self.omega_in * s, self.omega_out * s,
                           {k: v * s for k, v in self.probes.items()}, self.max_population_drift)

    def shifted(self, t0: float) -> "FieldRecord":
        return FieldRecord(self.t_grid + t0, self.omega_in, self.omega_out, dict(self.probes),
                           self.max_population_drift)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_us", "re_in", "im_in", "re_out", "im_out",
                        "intensity_in", "intensity_out"])
            for row in zip(self.t_grid, self.omega_in.real, self.omega_in.imag,
                           self.omega_out.real, self.omega_out.imag,
                           self.intensity_in, self.intensity_out):
                w.writerow([repr(float(x)) for x in row])
        return path


@dataclass(frozen=True)
class CouplingConstant:
    kappa: float
    transmission: float = 1.0

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")


def march(omega_in: np.ndarray, medium: MediumSpec, grids: Grids, weights: SpectralWeights,
          pop0: Optional[PopulationMap], kappa, probes: Iterable[int] = ()) -> FieldRecord:
    """Propagate ``omega_in`` through ``grids.nz`` cells of atoms.

    ``pop0`` gives the ground/shelf populations of every cell (None means all
    atoms in the ground state). Field probes are recorded at the requested
    cell boundaries, 0 being the entrance and ``nz`` the exit.
    """
    k = kappa.kappa if isinstance(kappa, CouplingConstant) else float(kappa)
    omega_in = np.ascontiguousarray(omega_in, dtype=complex)
    if omega_in.size != grids.nt:
        raise ValueError(f"omega_in has {omega_in.size} samples, grid has {grids.nt}")
    probes = sorted(set(int(p) for p in probes))
    for p in probes:
        if not 0 <= p <= grids.nz:
            raise ValueError(f"probe index {p} outside 0..{grids.nz}")
    record = FieldRecord(grids.t_grid, omega_in.copy(), omega_in.copy())
    if 0 in probes:
        record.probes[0] = omega_in.copy()
    if k == 0.0:
        for p in probes:
            record.probes[p] = omega_in.copy()
        return record

    dz = medium.length_mm / grids.nz
    n = weights.deltas.size
    deltas = np.asarray(weights.deltas, dtype=float)
    w = np.asarray(weights.weights, dtype=float)
    current = omega_in
    worst = 0.0
    for iz in range(grids.nz):
        if pop0 is None:
            state = SliceState.ground(n, iz)
        else:
            state = SliceState.from_populations(pop0.n_g[iz], pop0.n_s[iz], iz)
        try:
            current, _, drift = evolve_slice(state, current, grids.dt_us, medium, deltas, w,
                                             self_coupling=k * dz)
        except InstabilityError as exc:
            raise InstabilityError(f"z = {(iz + 0.5) * dz:.4f} mm: {exc}") from exc
        worst = max(worst, drift)
        if iz + 1 in probes:
            record.probes[iz + 1] = current.copy()
    record.omega_out = current
    record.max_population_drift = worst
    return record


def weak_probe_sequence(t_start: float = 0.5, duration: float = CALIBRATION_PROBE_US,
                        area: float = CALIBRATION_AREA) -> PulseSequence:
    probe = Pulse.from_area("custom", t_start, duration, area, shape="gaussian")
    return PulseSequence([probe], t_start + duration + CALIBRATION_TAIL_US)


def calibration_probe(grids: Grids) -> PulseSequence:
    """Weak gaussian probe narrow enough for the detuning window of ``grids``."""
    # field sigma_t = duration/6 and spectral sigma = 1/sigma_t
    duration = max(CALIBRATION_PROBE_US, 6.0 * CALIBRATION_WINDOW_SIGMAS / grids.delta_max)
    return weak_probe_sequence(duration=duration)


def energy_transmission(medium, grids, weights, kappa, pop0=None, seq=None) -> float:
    seq = seq or calibration_probe(grids)
    g = Grids.for_horizon(seq.t_end_us, grids.dt_us, nz=grids.nz, n_delta=grids.n_delta,
                          delta_max=grids.delta_max)
    rec = march(render_field(seq, g), medium, g, weights, pop0, kappa)
    return rec.energy_out() / rec.energy_in()


_CALIBRATION_CACHE: dict = {}


def calibrate_coupling(medium: MediumSpec, grids: Grids, weights: SpectralWeights,
                       tol: float = 1e-4, max_iter: int = 40) -> CouplingConstant:
    """Find kappa so that a weak probe through unburned atoms transmits exp(-d0).

    Bracketed false position (Illinois variant) on ln T(kappa) + d0 over
    [kappa0/2, 2*kappa0], kappa0 = d0 / (l * pi * rho(0)) being the broad-line
    estimate. ln T is nearly linear in kappa, so this usually converges in one
    or two marches past the bracket ends. ``tol`` bounds |ln T + d0|.
    """
    d0 = medium.optical_depth_d0
    if d0 == 0:
        return CouplingConstant(0.0, 1.0)
    key = (medium, grids.nz, grids.n_delta, grids.delta_max, grids.dt_us,
           weights.mode, weights.fwhm)
    if key in _CALIBRATION_CACHE:
        return _CALIBRATION_CACHE[key]

    kappa0 = d0 / (medium.length_mm * math.pi * weights.density_at_zero)
    seen: dict[float, float] = {}

    def residual(k):
        seen[k] = energy_transmission(medium, grids, weights, k)
        return math.log(seen[k]) + d0

    lo, hi = kappa0 / 2, kappa0 * 2
    f_lo, f_hi = residual(lo), residual(hi)
    if not (f_lo > 0 > f_hi):
        raise BracketError(f"weak-probe transmission does not bracket exp(-{d0}) "
                           f"on kappa in [{lo:.4g}, {hi:.4g}]")
    side = 0
    for _ in range(max_iter):
        k = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        f = residual(k)
        if abs(f) < tol:
            break
        if f > 0:
            lo, f_lo = k, f
            if side == 1:
                f_hi *= 0.5
            side = 1
        else:
            hi, f_hi = k, f
            if side == -1:
                f_lo *= 0.5
            side = -1
    else:
        raise BracketError(f"kappa calibration did not converge in {max_iter} marches")
    ks = sorted(seen)
    ts = [seen[x] for x in ks]
    if any(b >= a for a, b in zip(ts, ts[1:])):
        raise InstabilityError("transmission is not monotonic in kappa; check the integrator grids")
    kappa = CouplingConstant(k, seen[k])
    _CALIBRATION_CACHE[key] = kappa
    return kappa
