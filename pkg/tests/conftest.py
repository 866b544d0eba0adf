import numpy as np
import pytest

from skysim.geometry import Vec3
from skysim.sensing import BsConfig


@pytest.fixture
def sub6():
    """Field-test sub-6 GHz station (100 MHz / 30 kHz / 2.5 ms PRI)."""
    return BsConfig(id="bs-sub6", position=Vec3(0.0, 0.0, 0.0), band="sub6",
                    fc=3.75e9, bandwidth=100e6, delta_f=30e3, pri=2.5e-3,
                    eirp=46.0, rx_gain=16.0, noise_figure=5.0,
                    n_symbols=64, max_range_gate=3000.0)


@pytest.fixture
def mmwave():
    """Field-test mmWave station (800 MHz / 75 kHz / 0.2 ms PRI)."""
    return BsConfig(id="bs-mmwave", position=Vec3(0.0, 0.0, 0.0), band="mmwave",
                    fc=26e9, bandwidth=800e6, delta_f=75e3, pri=2e-4,
                    eirp=55.0, rx_gain=27.0, noise_figure=7.0,
                    n_symbols=128, max_range_gate=1200.0)


@pytest.fixture
def small_sub6():
    """Reduced subcarrier count for fast statistical tests (same band maths)."""
    return BsConfig(id="bs-small", position=Vec3(0.0, 0.0, 0.0), band="sub6",
                    fc=3.75e9, bandwidth=7.68e6, delta_f=30e3, pri=2.5e-3,
                    eirp=46.0, rx_gain=16.0, noise_figure=5.0,
                    n_symbols=64, max_range_gate=1000.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def minimal_scenario_dict(**overrides):
    base = {
        "grid": {"origin": [0.0, 0.0, 0.0], "cell_size": 50.0, "dims": [4, 4, 2]},
        "zones": [],
        "buildings": [],
        "stations": [{
            "id": "bs-1", "position": [0.0, 0.0, 10.0], "band": "sub6",
            "fc_hz": 3.75e9, "bandwidth_hz": 1.0e8, "subcarrier_spacing_hz": 3.0e4,
            "pri_s": 2.5e-3, "eirp_dbm": 46.0, "rx_gain_dbi": 16.0,
            "noise_figure_db": 5.0, "n_symbols": 64, "max_range_gate_m": 3000.0,
        }],
        "uavs": [{
            "id": "uav-1", "position": [25.0, 25.0, 60.0], "velocity": [5.0, 0.0, 0.0],
            "rcs_m2": 0.1, "registered": True, "mode": "nominal",
            "plan": {"waypoints": [{"pos": [25.0, 25.0, 60.0], "t": 0.0},
                                   {"pos": [125.0, 25.0, 60.0], "t": 20.0}],
                     "cruise_speed_mps": 5.0},
        }],
        "seed": 42,
        "duration_s": 10.0,
        "tick_s": 0.1,
    }
    base.update(overrides)
    return base
