"""Optical Bloch equations for an open two-level system with a shelf reservoir.

Per frequency class (detuning ``delta``) the state is the slowly varying
coherence ``sigma`` and the populations of ground, excited and shelf levels::

    dsigma/dt = (i*delta - 1/T2)*sigma + (i/2)*Omega*(n_g - n_e)
    dn_e/dt   = -n_e/T1 + Im(conj(Omega)*sigma)
    dn_g/dt   = (1-b)*n_e/T1 + r_s*n_s - Im(conj(Omega)*sigma)
    dn_s/dt   = b*n_e/T1 - r_s*n_s

where ``r_s`` is the shelf return rate (1/T_shelf plus any repump rate).
Integration is classical fixed-step RK4; the hot loop is compiled with numba.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConfigError, InstabilityError
from .model import MediumSpec, SpectralWeights

POP_RANGE_TOL = 1e-6
RENORM_TOL = 1e-7


@dataclass(frozen=True)
class AtomState:
    sigma: complex = 0j
    n_g: float = 1.0
    n_e: float = 0.0
    n_s: float = 0.0


@dataclass
class SliceState:
    """All frequency classes of one z-slice, as parallel arrays indexed by detuning."""

    sigma: np.ndarray
    n_g: np.ndarray
    n_e: np.ndarray
    n_s: np.ndarray
    z_index: int = 0

    @classmethod
    def ground(cls, n: int, z_index: int = 0) -> "SliceState":
        return cls(np.zeros(n, complex), np.ones(n), np.zeros(n), np.zeros(n), z_index)

    @classmethod
    def from_populations(cls, n_g, n_s, z_index: int = 0) -> "SliceState":
        n_g = np.array(n_g, dtype=float)
        n_s = np.array(n_s, dtype=float)
        return cls(np.zeros(n_g.size, complex), n_g, np.zeros(n_g.size), n_s, z_index)

    def copy(self) -> "SliceState":
        return SliceState(self.sigma.copy(), self.n_g.copy(), self.n_e.copy(), self.n_s.copy(),
                          self.z_index)

    def atom(self, j: int) -> AtomState:
        return AtomState(complex(self.sigma[j]), float(self.n_g[j]), float(self.n_e[j]),
                         float(self.n_s[j]))

    @property
    def total_population(self) -> np.ndarray:
        return self.n_g + self.n_e + self.n_s


def derivative(state: AtomState, omega: complex, delta: float, medium: MediumSpec) -> AtomState:
    """Time derivative of one atom; returned as an AtomState of rates."""
    g1, g2, b, gs = medium.rates
    pump = (np.conj(omega) * state.sigma).imag
    dsigma = (1j * delta - g2) * state.sigma + 0.5j * omega * (state.n_g - state.n_e)
    dn_e = -g1 * state.n_e + pump
    dn_g = (1.0 - b) * g1 * state.n_e + gs * state.n_s - pump
    dn_s = b * g1 * state.n_e - gs * state.n_s
    return AtomState(complex(dsigma), float(dn_g), float(dn_e), float(dn_s))


@numba.njit(cache=True, error_model="numpy", fastmath={"nsz", "arcp", "contract"})
def _rhs(s, g, e, h, om, delta, g1, g2, b, gs):
    pump = (om.conjugate() * s).imag
    ds = (1j * delta - g2) * s + 0.5j * om * (g - e)
    de = -g1 * e + pump
    dg = (1.0 - b) * g1 * e + gs * h - pump
    dh = b * g1 * e - gs * h
    return ds, dg, de, dh


@numba.njit(cache=True, error_model="numpy", fastmath={"nsz", "arcp", "contract"})
def _integrate_slice(om_ext, dt, deltas, weights, sig, ng, ne, ns, g1, g2, b, gs,
                     c_half, c_full, om_next, pol):
    """Advance one slice over the whole time grid, in place.

    The atoms are driven by the cell-centre field ``om_ext + c_half*P`` where
    P is their own weighted polarisation; the field leaving the cell is
    ``om_ext + c_full*P``. With zero couplings this is plain RK4 under the
    external drive. Returns (status, time index, detuning index, max drift);
    status 0 ok, 1 population out of range, 2 drift too large.
    """
    n = deltas.size
    nt = om_ext.size
    # trial state of the next RK stage and the running weighted sum of slopes
    ts = np.empty(n, np.complex128)
    tg = np.empty(n)
    te = np.empty(n)
    th = np.empty(n)
    acs = np.empty(n, np.complex128)
    acg = np.empty(n)
    ace = np.empty(n)
    ach = np.empty(n)
    max_drift = 0.0
    lo = -POP_RANGE_TOL
    hi = 1.0 + POP_RANGE_TOL
    half = 0.5 * dt
    w6 = dt / 6.0

    p = 0j
    for j in range(n):
        p += weights[j] * sig[j]
    pol[0] = p
    om_next[0] = om_ext[0] + c_full * p

    for it in range(nt - 1):
        oa = om_ext[it]
        ob = om_ext[it + 1]
        omid = 0.5 * (oa + ob)

        oc = oa + c_half * p
        p = 0j
        for j in range(n):
            ds, dg, de, dh = _rhs(sig[j], ng[j], ne[j], ns[j], oc, deltas[j], g1, g2, b, gs)
            acs[j] = ds
            acg[j] = dg
            ace[j] = de
            ach[j] = dh
            ts[j] = sig[j] + half * ds
            tg[j] = ng[j] + half * dg
            te[j] = ne[j] + half * de
            th[j] = ns[j] + half * dh
            p += weights[j] * ts[j]

        oc = omid + c_half * p
        p = 0j
        for j in range(n):
            ds, dg, de, dh = _rhs(ts[j], tg[j], te[j], th[j], oc, deltas[j], g1, g2, b, gs)
            acs[j] += 2.0 * ds
            acg[j] += 2.0 * dg
            ace[j] += 2.0 * de
            ach[j] += 2.0 * dh
            ts[j] = sig[j] + half * ds
            tg[j] = ng[j] + half * dg
            te[j] = ne[j] + half * de
            th[j] = ns[j] + half * dh
            p += weights[j] * ts[j]

        oc = omid + c_half * p
        p = 0j
        for j in range(n):
            ds, dg, de, dh = _rhs(ts[j], tg[j], te[j], th[j], oc, deltas[j], g1, g2, b, gs)
            acs[j] += 2.0 * ds
            acg[j] += 2.0 * dg
            ace[j] += 2.0 * de
            ach[j] += 2.0 * dh
            ts[j] = sig[j] + dt * ds
            tg[j] = ng[j] + dt * dg
            te[j] = ne[j] + dt * de
            th[j] = ns[j] + dt * dh
            p += weights[j] * ts[j]

        oc = ob + c_half * p
        p = 0j
        for j in range(n):
            ds, dg, de, dh = _rhs(ts[j], tg[j], te[j], th[j], oc, deltas[j], g1, g2, b, gs)
            sig[j] += w6 * (acs[j] + ds)
            ng[j] += w6 * (acg[j] + dg)
            ne[j] += w6 * (ace[j] + de)
            ns[j] += w6 * (ach[j] + dh)
            if not (lo <= ng[j] <= hi and lo <= ne[j] <= hi and lo <= ns[j] <= hi):
                return 1, it + 1, j, max_drift
            total = ng[j] + ne[j] + ns[j]
            drift = abs(total - 1.0)
            if drift > max_drift:
                max_drift = drift
            if drift > RENORM_TOL:
                return 2, it + 1, j, max_drift
            if drift > 0.0:
                ng[j] /= total
                ne[j] /= total
                ns[j] /= total
            p += weights[j] * sig[j]
        pol[it + 1] = p
        om_next[it + 1] = om_ext[it + 1] + c_full * p
    return 0, 0, 0, max_drift


def _raise_status(status, it, j, dt, z_index=None):
    where = f"t = {it * dt:.4f} us, detuning index {j}"
    if z_index is not None:
        where = f"slice {z_index}, " + where
    if status == 1:
        raise InstabilityError(f"population left [0, 1] at {where}")
    raise InstabilityError(f"population sum drifted beyond {RENORM_TOL:g} at {where}")


def evolve_slice(state: SliceState, omega: np.ndarray, dt: float, medium: MediumSpec,
                 deltas: np.ndarray, weights: np.ndarray | None = None,
                 self_coupling: float = 0.0):
    """Integrate ``state`` in place across the sampled drive ``omega``.

    ``self_coupling`` is kappa*dz; when nonzero the atoms also feel the field
    they radiate over half the cell (implicit-midpoint z step). Returns
    ``(field_after_cell, polarization, max_population_drift)``.
    """
    deltas = np.asarray(deltas, dtype=float)
    n = deltas.size
    if weights is None:
        weights = np.full(n, 1.0 / n)
    weights = np.asarray(weights, dtype=float)
    if weights.size != n or state.sigma.size != n:
        raise ConfigError("weights, detunings and slice width must agree")
    omega = np.ascontiguousarray(omega, dtype=complex)
    g1, g2, b, gs = medium.rates
    out = np.empty_like(omega)
    pol = np.empty_like(omega)
    c_full = 1j * self_coupling
    status, it, j, drift = _integrate_slice(
        omega, float(dt), deltas, weights, state.sigma, state.n_g, state.n_e, state.n_s,
        g1, g2, b, gs, 0.5 * c_full, c_full, out, pol)
    if status:
        _raise_status(status, it, j, dt, state.z_index)
    return out, pol, drift


def step_rk4(state: SliceState, omega_t, dt: float, medium: MediumSpec,
             deltas: np.ndarray) -> SliceState:
    """One RK4 step of every frequency class under an external drive.

    ``omega_t`` is either a constant complex Rabi frequency or a pair giving
    its values at the start and end of the step (linear in between).
    """
    if np.ndim(omega_t) == 0:
        drive = np.array([omega_t, omega_t], dtype=complex)
    else:
        drive = np.asarray(omega_t, dtype=complex)
        if drive.shape != (2,):
            raise ConfigError("omega_t must be a scalar or a (start, end) pair")
    new = state.copy()
    evolve_slice(new, drive, dt, medium, deltas)
    return new


def polarization(state: SliceState, weights: SpectralWeights | np.ndarray) -> complex:
    """Weighted coherence sum, accumulated in ascending detuning order."""
    w = weights.weights if isinstance(weights, SpectralWeights) else np.asarray(weights)
    if w.size != state.sigma.size:
        raise ConfigError(f"{w.size} weights for a slice of width {state.sigma.size}")
    total = 0j
    for wj, sj in zip(w.tolist(), state.sigma.tolist()):
        total += wj * sj
    return total
