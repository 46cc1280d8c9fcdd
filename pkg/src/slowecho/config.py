"""Flat ``dotted.key = value`` configuration files.

One key per line, ``#`` starts a comment. Example::

    scenario = fig2_pair
    medium.optical_depth_d0 = 2.2
    sequence.d.t_start_us = 1.0
    sequence.d.area = 1.5707963
    burn.model = rate_saturation
    sweep.values = 0.2, 0.4, 0.6

Pulses live under ``sequence.<name>``; names h, d and r map to the labels
H, D and R, anything else becomes a custom pulse. A pulse takes either
``area`` or ``rabi_peak``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .burn import BurnConfig
from .errors import ConfigError
from .model import Grids, MediumSpec, Pulse, PulseSequence

SCENARIOS = ("single_run", "fig2_pair", "fig3_sweep", "fig4_scan", "backward_control")
SWEEP_SCENARIOS = ("fig3_sweep", "fig4_scan")

DEFAULT_CONFIG = """\
# Desk-scale reproduction of the slow-light photon echo experiment.
scenario = fig2_pair
output_dir = out

medium.length_mm = 5.0
medium.optical_depth_d0 = 2.2
medium.t1_opt_us = 160.0
medium.t2_opt_us = 10.0
medium.shelf_branch_b = 0.5
medium.shelf_lifetime_us = inf
medium.repump_rate_per_us = 0.0

grids.nz = 128
grids.n_delta = 301
grids.delta_max = 25.0
grids.dt_us = 0.002

line.mode = flat

sequence.t_end_us = 30.0
sequence.d.t_start_us = 1.0
sequence.d.duration_us = 1.5
sequence.d.area = 1.5707963267948966
sequence.r.t_start_us = 10.0
sequence.r.duration_us = 1.5
sequence.r.area = 3.141592653589793

burn.model = rate_saturation
burn.hole_hwhm = 0.42
burn.entrance_depth = 0.9
burn.h.t_start_us = -1100.0
burn.h.duration_us = 600.0
burn.wait_after_h_us = 500.0
burn.repump_on = true
burn.direction = forward

sweep.values = 0.3, 0.45, 0.6, 0.7, 0.8, 0.9
sweep.c_mode = min_tau
"""


@dataclass(frozen=True)
class ScenarioConfig:
    medium: MediumSpec
    grids: Grids
    sequence: PulseSequence
    burn: Optional[BurnConfig] = None
    scenario: str = "single_run"
    sweep_values: tuple = ()
    output_dir: str = "out"
    line_mode: str = "flat"
    line_fwhm: Optional[float] = None
    c_mode: object = "min_tau"
    probes: tuple = ()
    source_text: str = field(default="", compare=False)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.scenario in SWEEP_SCENARIOS and not self.sweep_values:
            raise ConfigError(f"scenario {self.scenario} needs sweep.values")

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.source_text.encode()).hexdigest()

    def without_burn(self) -> "ScenarioConfig":
        seq = PulseSequence([p for p in self.sequence.pulses if p.label != "H"],
                            self.sequence.t_end_us)
        return replace(self, burn=None, sequence=seq)

    def with_burn(self, burn: BurnConfig) -> "ScenarioConfig":
        rest = [p for p in self.sequence.pulses if p.label != "H"]
        seq = PulseSequence([burn.h_pulse] + rest, self.sequence.t_end_us)
        return replace(self, burn=burn, sequence=seq)


def parse_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


class _Reader:
    def __init__(self, values: dict):
        self.values = values
        self.used = set()

    def has(self, key):
        return key in self.values

    def raw(self, key, default=None):
        if key not in self.values:
            if default is None:
                raise ConfigError(f"missing config key {key!r}")
            return default
        self.used.add(key)
        return self.values[key]

    def float(self, key, default=None):
        v = self.raw(key, None if default is None else repr(default))
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {v!r}") from None

    def int(self, key, default=None):
        v = self.raw(key, None if default is None else str(default))
        try:
            return int(v)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {v!r}") from None

    def bool(self, key, default=None):
        v = self.raw(key, None if default is None else str(default)).lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {v!r}")

    def str(self, key, default=None):
        return self.raw(key, default)


def parse_c_mode(text: str):
    text = text.strip().lower().replace("-", "_")
    if text == "min_tau":
        return "min_tau"
    if text.startswith("fixed:"):
        try:
            return ("fixed", float(text.split(":", 1)[1]))
        except ValueError:
            raise ConfigError(f"bad c_mode {text!r}") from None
    raise ConfigError(f"c_mode must be 'min_tau' or 'fixed:<value>', got {text!r}")


def _pulse(r: _Reader, name: str, label: str, defaults: dict | None = None) -> Pulse:
    pre = f"{name}."
    d = defaults or {}
    shape = r.str(pre + "shape", d.get("shape", "square"))
    start = r.float(pre + "t_start_us", d.get("t_start_us"))
    dur = r.float(pre + "duration_us", d.get("duration_us"))
    det = r.float(pre + "detuning", 0.0)
    if r.has(pre + "area") and r.has(pre + "rabi_peak"):
        raise ConfigError(f"{name}: give either area or rabi_peak, not both")
    if r.has(pre + "area"):
        return Pulse.from_area(label, start, dur, r.float(pre + "area"), det, shape)
    return Pulse(label, start, dur, r.float(pre + "rabi_peak", 0.0), det, shape)


def build_config(values: dict, source_text: str = "") -> ScenarioConfig:
    r = _Reader(values)
    medium = MediumSpec(
        length_mm=r.float("medium.length_mm", 5.0),
        optical_depth_d0=r.float("medium.optical_depth_d0", 2.2),
        t1_opt_us=r.float("medium.t1_opt_us", 160.0),
        t2_opt_us=r.float("medium.t2_opt_us", 10.0),
        shelf_branch_b=r.float("medium.shelf_branch_b", 0.5),
        shelf_lifetime_us=r.float("medium.shelf_lifetime_us", math.inf),
        repump_rate_per_us=r.float("medium.repump_rate_per_us", 0.0),
    )
    t_end = r.float("sequence.t_end_us")
    dt = r.float("grids.dt_us", 0.002)
    grids = Grids.for_horizon(t_end, dt, nz=r.int("grids.nz", 128),
                              n_delta=r.int("grids.n_delta", 301),
                              delta_max=r.float("grids.delta_max", 25.0))

    names = sorted({k.split(".")[1] for k in values if k.startswith("sequence.") and k.count(".") == 2})
    pulses = []
    for name in names:
        label = name.upper() if name.upper() in ("D", "R") else "custom"
        if name.lower() == "h":
            raise ConfigError("the H pulse is configured under burn.h.*")
        pulses.append(_pulse(r, "sequence." + name, label))

    burn = None
    if r.has("burn.model"):
        h = _pulse(r, "burn.h", "H", {"t_start_us": -1100.0, "duration_us": 600.0})
        burn = BurnConfig(
            model=r.str("burn.model"),
            hole_hwhm=r.float("burn.hole_hwhm", 0.42),
            h_pulse=h,
            wait_after_h_us=r.float("burn.wait_after_h_us", 500.0),
            repump_on=r.bool("burn.repump_on", True),
            burn_direction=r.str("burn.direction", "forward"),
            t_damp_us=r.float("burn.t_damp_us", math.inf),
            i_sat=r.float("burn.i_sat") if r.has("burn.i_sat") else None,
            allow_short_wait=r.bool("burn.allow_short_wait", False),
        )
        if r.has("burn.entrance_depth"):
            if r.has("burn.h.rabi_peak") or r.has("burn.h.area"):
                raise ConfigError("give burn.entrance_depth or an H amplitude, not both")
            burn = burn.with_entrance_depth(r.float("burn.entrance_depth"), medium)
        pulses.insert(0, burn.h_pulse)
    pulses.sort(key=lambda p: p.t_start_us)
    seq = PulseSequence(pulses, t_end)

    sweep = ()
    if r.has("sweep.values"):
        try:
            sweep = tuple(float(x) for x in r.str("sweep.values").split(",") if x.strip())
        except ValueError:
            raise ConfigError("sweep.values must be a comma-separated list of numbers") from None
    probes = ()
    if r.has("probes"):
        probes = tuple(int(x) for x in r.str("probes").split(",") if x.strip())
    cfg = ScenarioConfig(
        medium=medium,
        grids=grids,
        sequence=seq,
        burn=burn,
        scenario=r.str("scenario", "single_run"),
        sweep_values=sweep,
        output_dir=r.str("output_dir", "out"),
        line_mode=r.str("line.mode", "flat"),
        line_fwhm=r.float("line.fwhm") if r.has("line.fwhm") else None,
        c_mode=parse_c_mode(r.str("sweep.c_mode", "min_tau")),
        probes=probes,
        source_text=source_text,
    )
    unknown = sorted(set(values) - r.used)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return cfg


def loads(text: str, **overrides) -> ScenarioConfig:
    values = parse_text(text)
    for k, v in overrides.items():
        values[k.replace("__", ".")] = str(v)
    return build_config(values, text + "".join(f"\n{k} = {v}" for k, v in overrides.items()))


def load(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def default_config(**overrides) -> ScenarioConfig:
    """The desk-scale configuration; keyword overrides use ``__`` for dots."""
    return loads(DEFAULT_CONFIG, **overrides)
