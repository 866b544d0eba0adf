import json
import math

import numpy as np
import pytest

from skysim.data import bundled_scenario
from skysim.geometry import Aabb, Vec3
from skysim.scenario import (Building, FlightPlan, ScenarioError, UavState, Zone,
                             advance_kinematics, line_of_sight, load_scenario,
                             parse_scenario, serialize_scenario, zone_violations)
from skysim.geometry import Polygon2D

from conftest import minimal_scenario_dict


def test_minimal_scenario_defaults(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(minimal_scenario_dict()))
    cfg = load_scenario(path)
    assert cfg.tick == 0.1
    assert cfg.sensing_cadence == 1.5
    assert cfg.v_max == 20.0
    assert len(cfg.stations) == 1 and len(cfg.uavs) == 1


def test_zone_alt_band_inverted_names_zone(tmp_path):
    bad = minimal_scenario_dict(zones=[{
        "id": "z-bad", "kind": "restricted",
        "footprint": [[0, 0], [10, 0], [10, 10], [0, 10]],
        "alt_band": [100.0, 50.0],
    }])
    path = tmp_path / "s.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(ScenarioError, match="z-bad"):
        load_scenario(path)


def test_unknown_top_level_key_rejected(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(minimal_scenario_dict(wind_model="gusty")))
    with pytest.raises(ScenarioError, match="wind_model"):
        load_scenario(path)


def test_missing_file_is_error():
    with pytest.raises(ScenarioError, match="not-there"):
        load_scenario("not-there.json")


def test_case2_carries_field_test_parameters():
    cfg = load_scenario(bundled_scenario("case2"))
    by_band = {s.band: s for s in cfg.stations}
    assert by_band["mmwave"].fc == 26e9
    assert by_band["mmwave"].bandwidth == 800e6
    assert by_band["sub6"].fc == 3.75e9
    assert by_band["sub6"].bandwidth == 100e6
    assert by_band["sub6"].pri == 2.5e-3
    assert by_band["mmwave"].pri == 2e-4
    assert cfg.sensing_cadence == 1.5


def test_scenario_round_trip(tmp_path):
    cfg = load_scenario(bundled_scenario("case2"))
    dumped = serialize_scenario(cfg)
    again = serialize_scenario(parse_scenario(json.loads(json.dumps(dumped))))
    assert dumped == again


# -- kinematics ---------------------------------------------------------------

def _plan(*wps, speed=10.0):
    return FlightPlan(uav_id="u", waypoints=tuple((Vec3(*p), t) for p, t in wps),
                      cruise_speed=speed)


def test_hovering_is_frozen():
    plan = _plan(((0, 0, 50), 0.0), ((100, 0, 50), 10.0))
    st = UavState("u", Vec3(3, 4, 50), Vec3(0, 0, 0), rcs=0.1, mode="hovering")
    out = advance_kinematics(st, plan, 2.0, 5.0)
    assert out.position == st.position and out.mode == "hovering"


def test_linear_interpolation_midpoint():
    plan = _plan(((0, 0, 50), 0.0), ((100, 0, 50), 10.0))
    st = UavState("u", Vec3(0, 0, 50), Vec3(10, 0, 0), rcs=0.1)
    out = advance_kinematics(st, plan, 0.0, 5.0)
    assert out.position == Vec3(50, 0, 50)


def test_step_to_segment_end_hits_waypoint():
    plan = _plan(((0, 0, 50), 0.0), ((100, 0, 50), 10.0), ((100, 100, 50), 25.0))
    st = UavState("u", Vec3(40, 0, 50), Vec3(10, 0, 0), rcs=0.1)
    out = advance_kinematics(st, plan, 4.0, 6.0)
    assert out.position == Vec3(100, 0, 50)


def test_clamp_at_final_waypoint_lands():
    plan = _plan(((0, 0, 50), 0.0), ((100, 0, 50), 10.0))
    st = UavState("u", Vec3(90, 0, 50), Vec3(10, 0, 0), rcs=0.1)
    out = advance_kinematics(st, plan, 9.0, 5.0)
    assert out.mode == "landed"
    assert out.position == Vec3(100, 0, 50)


def test_composition_equals_single_query():
    plan = _plan(((0, 0, 40), 0.0), ((60, 30, 80), 7.0), ((90, -20, 55), 19.0),
                 ((150, 0, 60), 31.0))
    st = UavState("u", Vec3(0, 0, 40), Vec3(0, 0, 0), rcs=0.1)
    many = st
    t = 0.0
    for _ in range(100):
        many = advance_kinematics(many, plan, t, 0.17)
        t += 0.17
    once = advance_kinematics(st, plan, 0.0, t)
    assert many.position.dist(once.position) < 1e-9


def test_returning_flies_home_then_lands():
    plan = _plan(((0, 0, 50), 0.0), ((100, 0, 50), 10.0))
    st = UavState("u", Vec3(50, 0, 50), Vec3(0, 0, 0), rcs=0.1, mode="returning")
    t = 0.0
    for _ in range(40):
        st = advance_kinematics(st, plan, t, 1.0)
        t += 1.0
    assert st.mode == "landed"
    assert st.position.x == 0.0 and st.position.z == 0.0


# -- line of sight -------------------------------------------------------------

def test_los_no_buildings():
    assert line_of_sight(Vec3(0, 0, 0), Vec3(10, 0, 0), [])


def test_los_through_box_center_blocked():
    b = Building(Aabb(Vec3(4, -1, -1), Vec3(6, 1, 1)))
    assert not line_of_sight(Vec3(0, 0, 0), Vec3(10, 0, 0), [b])


def test_los_grazing_face_is_clear():
    b = Building(Aabb(Vec3(4, 0, -1), Vec3(6, 1, 1)))
    # segment runs exactly along the box's y=0 face plane
    assert line_of_sight(Vec3(0, 0, 0), Vec3(10, 0, 0), [b])


def test_los_symmetry_property():
    rng = np.random.default_rng(7)
    boxes = [Building(Aabb(Vec3(*lo), Vec3(*(lo + np.abs(rng.normal(5, 3, 3)) + 0.1))))
             for lo in rng.uniform(-50, 50, size=(20, 3))]
    mismatches = 0
    for _ in range(10_000):
        a = Vec3(*rng.uniform(-60, 60, 3))
        b = Vec3(*rng.uniform(-60, 60, 3))
        if a == b:
            continue
        subset = [boxes[i] for i in rng.integers(0, len(boxes), 3)]
        if line_of_sight(a, b, subset) != line_of_sight(b, a, subset):
            mismatches += 1
    assert mismatches == 0


# -- zones ---------------------------------------------------------------------

def _zone(zid="z1", kind="restricted", window=None):
    return Zone(id=zid, kind=kind,
                footprint=Polygon2D([[0, 0], [100, 0], [100, 100], [0, 100]]),
                alt_band=(10.0, 120.0), active_window=window)


def test_zone_below_altitude_band():
    assert zone_violations(Vec3(50, 50, 5), 0.0, [_zone()]) == []


def test_zone_hit_inside_prism():
    assert zone_violations(Vec3(50, 50, 60), 0.0, [_zone()]) == ["z1"]


def test_zone_window_half_open():
    z = _zone(window=(10.0, 20.0))
    assert zone_violations(Vec3(50, 50, 60), 10.0, [z]) == ["z1"]
    assert zone_violations(Vec3(50, 50, 60), 20.0, [z]) == []
    assert zone_violations(Vec3(50, 50, 60), 21.0, [z]) == []


def test_operational_zone_never_violates():
    assert zone_violations(Vec3(50, 50, 60), 0.0, [_zone(kind="operational")]) == []


def test_zone_monotone_in_zone_set():
    rng = np.random.default_rng(3)
    zones = [_zone("a"), _zone("b", window=(0.0, 50.0)), _zone("c", kind="temporary")]
    for _ in range(500):
        p = Vec3(*rng.uniform(-20, 130, 3))
        t = rng.uniform(0, 60)
        base = set(zone_violations(p, t, zones[:2]))
        bigger = set(zone_violations(p, t, zones))
        assert base <= bigger
