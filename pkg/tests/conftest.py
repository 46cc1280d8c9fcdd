import math

import pytest
from hypothesis import settings

from slowecho.model import Grids, MediumSpec, Pulse, PulseSequence

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def medium():
    return MediumSpec(t2_opt_us=10.0)


@pytest.fixture
def small_grids():
    """Coarse but valid grids for quick propagation tests."""
    return Grids.for_horizon(6.0, 0.004, nz=32, n_delta=101, delta_max=12.5)


def echo_sequence(t_end=25.0, d_area=math.pi / 2, r_area=math.pi, t_d=1.0, t_r=10.0, dur=1.5):
    return PulseSequence([
        Pulse.from_area("D", t_d, dur, d_area),
        Pulse.from_area("R", t_r, dur, r_area),
    ], t_end)


# reduced grids: each march takes a couple of seconds
TINY_CONFIG = """\
scenario = fig2_pair
output_dir = out
medium.t2_opt_us = 10.0
grids.nz = 32
grids.n_delta = 201
grids.delta_max = 12.5
grids.dt_us = 0.004
sequence.t_end_us = 25.0
sequence.d.t_start_us = 1.0
sequence.d.duration_us = 1.5
sequence.d.area = 1.5707963267948966
sequence.r.t_start_us = 10.0
sequence.r.duration_us = 1.5
sequence.r.area = 3.141592653589793
burn.model = rate_saturation
burn.hole_hwhm = 0.42
burn.entrance_depth = 0.9
sweep.values = 0.3, 0.6, 0.9
"""


@pytest.fixture
def tiny_text():
    return TINY_CONFIG


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
