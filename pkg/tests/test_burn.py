import csv
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import wrightomega

from slowecho.burn import (
    BurnConfig,
    PopulationMap,
    burn,
    cell_centers,
    h_intensity_profile,
    hole_map,
    ideal_hole_delay,
    kk_group_delay,
    lorentzian,
    predicted_group_delay,
)
from slowecho.errors import ConfigError, NoHoleError
from slowecho.model import Grids, MediumSpec, Pulse, build_weights

GRIDS = Grids(nz=64, n_delta=101, delta_max=10.0)
WEIGHTS = build_weights(GRIDS)


def _h(rabi, duration=600.0):
    return Pulse("H", -1100.0, duration, rabi)


def saturable_oracle(s0, alpha, z):
    """Closed form of dI/dz = -alpha I/(1 + I/I_sat) in units of I_sat.

    s e^s = s0 e^(s0 - alpha z), i.e. s = W(exp(y)) = wrightomega(y).
    """
    y = math.log(s0) + s0 - alpha * np.asarray(z)
    return np.real(wrightomega(y))


def test_no_h_leaves_ground_state(medium):
    pop = burn(medium, GRIDS, WEIGHTS, BurnConfig(h_pulse=_h(0.0)))
    np.testing.assert_array_equal(pop.n_g, 1.0)
    np.testing.assert_array_equal(pop.n_s, 0.0)
    np.testing.assert_array_equal(pop.n_e, 0.0)


def test_damped_rabi_pi_area_empties_hole_centre():
    m = MediumSpec(optical_depth_d0=0.0)
    rabi = 0.01
    cfg = BurnConfig(model="damped_rabi", h_pulse=_h(rabi, math.pi / rabi))
    pop = burn(m, GRIDS, WEIGHTS, cfg)
    np.testing.assert_allclose(pop.hole_center(), 0.0, atol=1e-12)


def test_damped_rabi_entrance_limit_with_absorption(medium):
    rabi = 0.01
    cfg = BurnConfig(model="damped_rabi", h_pulse=_h(rabi, math.pi / rabi))
    first = [burn(medium, replace(GRIDS, nz=nz), build_weights(replace(GRIDS, nz=nz)),
                  cfg).hole_center()[0] for nz in (64, 512, 4096)]
    assert first[0] > first[1] > first[2]
    assert first[2] < 1e-4


def test_rate_model_unit_saturation_gives_half_depth():
    m = MediumSpec(optical_depth_d0=0.0)
    cfg = BurnConfig(h_pulse=_h(1.0), i_sat=1.0)
    pop = burn(m, GRIDS, WEIGHTS, cfg)
    np.testing.assert_allclose(pop.hole_center(), 0.5, rtol=0, atol=1e-15)


def test_rate_model_cells_match_closed_form(medium):
    cfg = BurnConfig(h_pulse=_h(1.0), i_sat=1.0)
    pop = burn(medium, GRIDS, WEIGHTS, cfg)
    z = cell_centers(medium, GRIDS)
    s = saturable_oracle(1.0, medium.optical_depth_d0 / medium.length_mm, z)
    np.testing.assert_allclose(pop.hole_center(), 1 / (1 + s), rtol=1e-8)


@given(s0=st.floats(1e-3, 1e3), d0=st.floats(0.01, 5.0))
def test_saturable_beer_profile_matches_closed_form(s0, d0):
    m = MediumSpec(optical_depth_d0=d0)
    z = np.linspace(0, m.length_mm, 17)
    got = h_intensity_profile(m, s0 * 2.0, 2.0, z) / 2.0
    np.testing.assert_allclose(got, saturable_oracle(s0, d0 / m.length_mm, z), rtol=1e-8)


def test_weak_h_follows_plain_beer(medium):
    z = np.linspace(0, medium.length_mm, 9)
    got = h_intensity_profile(medium, 1e-9, 1.0, z)
    np.testing.assert_allclose(got, 1e-9 * np.exp(-medium.optical_depth_d0 * z / medium.length_mm),
                               rtol=1e-7)


configs = st.builds(
    dict,
    model=st.sampled_from(["rate_saturation", "damped_rabi"]),
    s0=st.floats(0.0, 50.0),
    d0=st.floats(0.0, 5.0),
    hwhm=st.floats(0.05, 2.0),
    direction=st.sampled_from(["forward", "backward"]),
)


def _burn_from(c, entrance_area=None):
    m = MediumSpec(optical_depth_d0=c["d0"], t2_opt_us=10.0)
    i_sat = 1.0
    rabi = math.sqrt(c["s0"] * i_sat)
    duration = 600.0
    if entrance_area is not None and rabi > 0:
        duration = entrance_area / rabi
    cfg = BurnConfig(model=c["model"], hole_hwhm=c["hwhm"], h_pulse=_h(rabi, duration),
                     burn_direction=c["direction"], i_sat=i_sat)
    return burn(m, GRIDS, WEIGHTS, cfg)


@given(configs)
def test_population_conserved_pointwise(c):
    pop = _burn_from(c)
    assert np.max(np.abs(pop.n_g + pop.n_e + pop.n_s - 1.0)) < 1e-9
    assert np.all(pop.n_e == 0.0)
    assert np.all((pop.n_g >= 0) & (pop.n_g <= 1))


@given(configs, st.floats(1e-3, math.pi))
def test_forward_profile_is_monotone(c, area):
    c = dict(c, direction="forward")
    pop = _burn_from(c, entrance_area=area if c["model"] == "damped_rabi" else None)
    assert np.all(np.diff(pop.hole_center()) >= -1e-12)


@given(configs)
def test_backward_is_exact_mirror(c):
    fwd = _burn_from(dict(c, direction="forward"))
    bwd = _burn_from(dict(c, direction="backward"))
    mirrored = fwd.mirrored()
    assert np.array_equal(mirrored.n_g, bwd.n_g)
    assert np.array_equal(mirrored.n_s, bwd.n_s)


def test_damped_rabi_extrema_at_multiples_of_pi():
    m = MediumSpec(optical_depth_d0=0.0)
    rabi = 0.02
    t_h = np.arange(1.0, 400.0, 2.0)
    n = [burn(m, GRIDS, WEIGHTS, BurnConfig(model="damped_rabi", h_pulse=_h(rabi, t),
                                            )).hole_center()[0] for t in t_h]
    n = np.array(n)
    i_min = int(np.argmin(n))
    assert abs(t_h[i_min] - math.pi / rabi) <= 2.0
    interior = n[(t_h > 200) & (t_h < 400)]
    i_max = int(np.argmax(interior))
    assert abs(t_h[(t_h > 200) & (t_h < 400)][i_max] - 2 * math.pi / rabi) <= 2.0


def test_lorentzian_hwhm():
    assert lorentzian(np.array([0.0, 0.42]), 0.42).tolist() == [1.0, 0.5]


def test_rejects_detuned_h(medium):
    cfg = BurnConfig(h_pulse=replace(_h(0.1), detuning=0.5))
    with pytest.raises(ConfigError, match="resonant"):
        burn(medium, GRIDS, WEIGHTS, cfg)


def test_rejects_wide_hole(medium):
    with pytest.raises(ConfigError, match="delta_max"):
        burn(medium, GRIDS, WEIGHTS, BurnConfig(h_pulse=_h(0.1), hole_hwhm=2.5))


def test_short_wait_needs_override(medium):
    cfg = BurnConfig(h_pulse=_h(0.1), wait_after_h_us=100.0)
    with pytest.raises(ConfigError, match="3\\*T1"):
        burn(medium, GRIDS, WEIGHTS, cfg)
    burn(medium, GRIDS, WEIGHTS, replace(cfg, allow_short_wait=True))


def test_invalid_burn_config():
    with pytest.raises(ConfigError):
        BurnConfig(hole_hwhm=0.0)
    with pytest.raises(ConfigError):
        BurnConfig(wait_after_h_us=-1.0)
    with pytest.raises(ConfigError):
        BurnConfig(model="optical_pumping")


def test_repump_resets_previous_hole(medium):
    cfg = BurnConfig(h_pulse=_h(0.05), i_sat=0.01)
    first = burn(medium, GRIDS, WEIGHTS, cfg)
    again = burn(medium, GRIDS, WEIGHTS, cfg, initial=first)
    assert np.array_equal(again.n_g, first.n_g)
    stacked = burn(medium, GRIDS, WEIGHTS, replace(cfg, repump_on=False), initial=first)
    assert np.all(stacked.hole_center() < first.hole_center())


def test_entrance_depth_helper(medium):
    cfg = BurnConfig().with_entrance_depth(0.75, medium)
    s0 = cfg.h_pulse.rabi_peak ** 2 / cfg.saturation_intensity(medium)
    assert s0 / (1 + s0) == pytest.approx(0.75)
    assert cfg.saturation_intensity(medium) == pytest.approx(1 / (medium.t1_opt_us * 10.0))


def test_population_csv(tmp_path, medium):
    g = Grids(nz=3, n_delta=5, delta_max=2.0)
    pop = hole_map(medium, g, [0.9, 0.5, 0.1], 0.42)
    path = pop.to_csv(tmp_path / "pop.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["z_mm", "delta_rad_per_us", "n_g", "n_s"]
    assert len(rows) == 1 + 15
    assert float(rows[1][0]) == pytest.approx(pop.z_mm[0])
    assert float(rows[2][1]) == pytest.approx(g.deltas()[1])
    assert float(rows[6][0]) == pytest.approx(pop.z_mm[1])
    assert float(rows[3][2]) == pytest.approx(0.1)


# group-delay oracle --------------------------------------------------------

SLOW = MediumSpec(t1_opt_us=1e6, t2_opt_us=1e6)
FINE = Grids(nz=32, n_delta=2001, delta_max=25.0)
FINE_W = build_weights(FINE)


def test_no_hole_no_delay(medium):
    pop = PopulationMap.unburned(medium, GRIDS)
    assert predicted_group_delay(pop, medium, WEIGHTS, 0.42, strict=False) == 0.0
    with pytest.raises(NoHoleError):
        predicted_group_delay(pop, medium, WEIGHTS, 0.42)


def test_ideal_hole_formula():
    assert ideal_hole_delay(2.2, 0.42) == pytest.approx(2.619, abs=1e-3)


def test_full_hole_reproduces_anchor_delay():
    pop = hole_map(SLOW, FINE, 1.0, 0.42)
    tau = predicted_group_delay(pop, SLOW, FINE_W, 0.42)
    assert tau == pytest.approx(2.6, rel=0.10)
    assert tau == pytest.approx(ideal_hole_delay(2.2, 0.42), rel=0.10)


def _tau(depth, medium=SLOW):
    return predicted_group_delay(hole_map(medium, FINE, depth, 0.42), medium, FINE_W, 0.42)


def test_doubling_deep_hole_doubles_delay():
    assert _tau(0.9) / _tau(0.45) == pytest.approx(2.0, rel=0.02)


@given(st.floats(0.01, 0.5))
def test_hole_contribution_linear_in_depth(depth):
    # the truncated flat line adds a depth-independent background delay
    background = kk_group_delay(PopulationMap.unburned(SLOW, FINE), SLOW, FINE_W, 0.42)
    assert background < 0
    ratio = (_tau(2 * depth) - background) / (_tau(depth) - background)
    assert ratio == pytest.approx(2.0, rel=1e-6)


@given(hwhm=st.floats(0.2, 1.2), d0=st.floats(0.5, 4.0))
def test_delay_close_to_formula_for_narrow_holes(hwhm, d0):
    m = replace(SLOW, optical_depth_d0=d0)
    assert hwhm < FINE.delta_max / 20
    tau = predicted_group_delay(hole_map(m, FINE, 1.0, hwhm), m, FINE_W, hwhm)
    assert tau == pytest.approx(ideal_hole_delay(d0, hwhm), rel=0.10)


def test_homogeneous_width_reduces_delay():
    broad = MediumSpec(t2_opt_us=10.0)
    tau_sharp = predicted_group_delay(hole_map(SLOW, FINE, 1.0, 0.42), SLOW, FINE_W, 0.42)
    tau_broad = predicted_group_delay(hole_map(broad, FINE, 1.0, 0.42), broad, FINE_W, 0.42)
    assert tau_broad < tau_sharp
