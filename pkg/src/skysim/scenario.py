"""World model: grid, zones, buildings, UAV kinematics, scenario loading.

Scenario files are UTF-8 JSON with SI units throughout (meters, seconds, Hz,
dBm). Unknown top-level keys are rejected so a typo fails fast instead of
silently running with defaults.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .geometry import Aabb, Polygon2D, Vec3
from .sensing import BsConfig

MAX_GRID_CELLS = 1_000_000
DEFAULT_V_MAX = 20.0        # m/s
DEFAULT_CELL_SIZE = 50.0    # m, city-block scale
LANDING_DESCENT_RATE = 2.0  # m/s, fixed descent in landing mode

UAV_MODES = ("nominal", "hovering", "returning", "landing", "landed")
ZONE_KINDS = ("restricted", "temporary", "operational")


class ScenarioError(ValueError):
    """Malformed or invariant-violating scenario input."""


@dataclass(frozen=True)
class GridSpec:
    origin: Vec3
    cell_size: float
    dims: Tuple[int, int, int]

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ScenarioError("grid cell_size must be > 0")
        if any(int(d) < 1 or int(d) != d for d in self.dims):
            raise ScenarioError(f"grid dims must be positive integers, got {self.dims}")
        nx, ny, nz = self.dims
        if nx * ny * nz > MAX_GRID_CELLS:
            raise ScenarioError(f"grid has {nx * ny * nz} cells, max is {MAX_GRID_CELLS}")

    @property
    def n_cells(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def cell_center(self, ix: int, iy: int, iz: int) -> Vec3:
        return Vec3(
            self.origin.x + (ix + 0.5) * self.cell_size,
            self.origin.y + (iy + 0.5) * self.cell_size,
            self.origin.z + (iz + 0.5) * self.cell_size,
        )

    def cell_of(self, p: Vec3) -> Tuple[int, int, int]:
        ix = int((p.x - self.origin.x) // self.cell_size)
        iy = int((p.y - self.origin.y) // self.cell_size)
        iz = int((p.z - self.origin.z) // self.cell_size)
        nx, ny, nz = self.dims
        return (min(max(ix, 0), nx - 1), min(max(iy, 0), ny - 1), min(max(iz, 0), nz - 1))


@dataclass(frozen=True)
class Zone:
    id: str
    kind: str
    footprint: Polygon2D
    alt_band: Tuple[float, float]
    active_window: Optional[Tuple[float, float]] = None  # None = always active

    def __post_init__(self):
        if self.kind not in ZONE_KINDS:
            raise ScenarioError(f"zone {self.id}: unknown kind {self.kind!r}")
        z0, z1 = self.alt_band
        if not z0 < z1:
            raise ScenarioError(f"zone {self.id}: alt_band requires z_min < z_max, got [{z0}, {z1}]")
        if self.active_window is not None:
            t0, t1 = self.active_window
            if not t0 < t1:
                raise ScenarioError(f"zone {self.id}: active_window requires t_start < t_end")

    def active_at(self, t: float) -> bool:
        """Half-open window [t_start, t_end): active at t_start, inactive at t_end."""
        if self.active_window is None:
            return True
        t0, t1 = self.active_window
        return t0 <= t < t1

    def contains(self, p: Vec3, t: float) -> bool:
        if not self.active_at(t):
            return False
        z0, z1 = self.alt_band
        if not (z0 <= p.z <= z1):
            return False
        return self.footprint.contains(p.x, p.y)


@dataclass(frozen=True)
class Building:
    aabb: Aabb


@dataclass(frozen=True)
class UavState:
    id: str
    position: Vec3
    velocity: Vec3
    rcs: float
    registered: bool = True
    mode: str = "nominal"

    def __post_init__(self):
        if self.rcs <= 0:
            raise ScenarioError(f"uav {self.id}: rcs must be > 0")
        if self.mode not in UAV_MODES:
            raise ScenarioError(f"uav {self.id}: unknown mode {self.mode!r}")


@dataclass(frozen=True)
class FlightPlan:
    uav_id: str
    waypoints: Tuple[Tuple[Vec3, float], ...]  # (position, arrival time)
    cruise_speed: float

    def validate(self, v_max: float) -> None:
        if len(self.waypoints) < 2:
            raise ScenarioError(f"plan for {self.uav_id}: needs at least 2 waypoints")
        times = [t for _, t in self.waypoints]
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise ScenarioError(f"plan for {self.uav_id}: arrival times must be strictly increasing")
        if self.cruise_speed <= 0:
            raise ScenarioError(f"plan for {self.uav_id}: cruise_speed must be > 0")
        for (p0, t0), (p1, t1) in zip(self.waypoints, self.waypoints[1:]):
            speed = p0.dist(p1) / (t1 - t0)
            if speed > v_max + 1e-9:
                raise ScenarioError(
                    f"plan for {self.uav_id}: segment speed {speed:.2f} m/s exceeds v_max {v_max} m/s")

    @property
    def t_start(self) -> float:
        return self.waypoints[0][1]

    @property
    def t_end(self) -> float:
        return self.waypoints[-1][1]

    def position_at(self, t: float) -> Vec3:
        """Piecewise-linear interpolation, clamped to the endpoints."""
        wps = self.waypoints
        if t <= wps[0][1]:
            return wps[0][0]
        if t >= wps[-1][1]:
            return wps[-1][0]
        for (p0, t0), (p1, t1) in zip(wps, wps[1:]):
            if t0 <= t <= t1:
                u = (t - t0) / (t1 - t0)
                return p0 + (p1 - p0).scale(u)
        return wps[-1][0]

    def velocity_at(self, t: float) -> Vec3:
        wps = self.waypoints
        if t < wps[0][1] or t >= wps[-1][1]:
            return Vec3(0.0, 0.0, 0.0)
        for (p0, t0), (p1, t1) in zip(wps, wps[1:]):
            if t0 <= t < t1:
                return (p1 - p0).scale(1.0 / (t1 - t0))
        return Vec3(0.0, 0.0, 0.0)


@dataclass
class UavEntry:
    state: UavState
    plan: FlightPlan
    routing: str = "fixed"  # fixed | dynamic (dynamic = owned by the swarm planner)


@dataclass
class PlannerConfig:
    replan_period: float = 60.0   # seconds between planner invocations
    edge_capacity: int = 2        # simultaneous occupants per edge per step
    load_coeff: float = 1.0       # seconds of added latency per extra occupant


@dataclass
class ScenarioConfig:
    grid: GridSpec
    zones: List[Zone]
    buildings: List[Building]
    stations: List[BsConfig]
    uavs: List[UavEntry]
    seed: int
    duration: float
    tick: float = 0.1
    sensing_cadence: float = 1.5
    v_max: float = DEFAULT_V_MAX
    planner: PlannerConfig = field(default_factory=PlannerConfig)

    def validate(self) -> None:
        if self.tick <= 0:
            raise ScenarioError("tick must be > 0")
        if self.duration < self.tick:
            raise ScenarioError("duration must be >= tick")
        ratio = self.sensing_cadence / self.tick
        if abs(ratio - round(ratio)) > 1e-9:
            raise ScenarioError("sensing_cadence must be an integer multiple of tick")
        if not (0 <= self.seed < 2 ** 64):
            raise ScenarioError("seed must be a 64-bit unsigned integer")
        for name, ids in (("zone", [z.id for z in self.zones]),
                          ("station", [s.id for s in self.stations]),
                          ("uav", [u.state.id for u in self.uavs])):
            dupes = {i for i in ids if ids.count(i) > 1}
            if dupes:
                raise ScenarioError(f"duplicate {name} id(s): {sorted(dupes)}")
        for u in self.uavs:
            if u.plan.uav_id != u.state.id:
                raise ScenarioError(f"plan uav_id {u.plan.uav_id!r} does not match uav {u.state.id!r}")
            u.plan.validate(self.v_max)
            speed = u.state.velocity.norm()
            if speed > self.v_max + 1e-9:
                raise ScenarioError(f"uav {u.state.id}: initial speed {speed:.2f} exceeds v_max")
            if u.routing not in ("fixed", "dynamic"):
                raise ScenarioError(f"uav {u.state.id}: routing must be fixed|dynamic")


# ---------------------------------------------------------------------------
# JSON round trip

_TOP_LEVEL_KEYS = {
    "grid", "zones", "buildings", "stations", "uavs", "seed",
    "duration_s", "tick_s", "sensing_cadence_s", "v_max_mps", "planner",
}


def _parse_zone(obj: dict) -> Zone:
    window = obj.get("active_window")
    return Zone(
        id=str(obj["id"]),
        kind=obj["kind"],
        footprint=Polygon2D(obj["footprint"]),
        alt_band=(float(obj["alt_band"][0]), float(obj["alt_band"][1])),
        active_window=None if window is None else (float(window[0]), float(window[1])),
    )


def _parse_station(obj: dict) -> BsConfig:
    return BsConfig(
        id=str(obj["id"]),
        position=Vec3.from_seq(obj["position"]),
        band=obj["band"],
        fc=float(obj["fc_hz"]),
        bandwidth=float(obj["bandwidth_hz"]),
        delta_f=float(obj["subcarrier_spacing_hz"]),
        pri=float(obj["pri_s"]),
        eirp=float(obj["eirp_dbm"]),
        rx_gain=float(obj["rx_gain_dbi"]),
        noise_figure=float(obj["noise_figure_db"]),
        n_symbols=int(obj["n_symbols"]),
        max_range_gate=float(obj["max_range_gate_m"]),
    )


def _parse_uav(obj: dict) -> UavEntry:
    state = UavState(
        id=str(obj["id"]),
        position=Vec3.from_seq(obj["position"]),
        velocity=Vec3.from_seq(obj.get("velocity", [0.0, 0.0, 0.0])),
        rcs=float(obj["rcs_m2"]),
        registered=bool(obj.get("registered", True)),
        mode=obj.get("mode", "nominal"),
    )
    plan_obj = obj["plan"]
    plan = FlightPlan(
        uav_id=state.id,
        waypoints=tuple((Vec3.from_seq(w["pos"]), float(w["t"])) for w in plan_obj["waypoints"]),
        cruise_speed=float(plan_obj["cruise_speed_mps"]),
    )
    return UavEntry(state=state, plan=plan, routing=obj.get("routing", "fixed"))


def parse_scenario(obj: dict) -> ScenarioConfig:
    unknown = set(obj) - _TOP_LEVEL_KEYS
    if unknown:
        raise ScenarioError(f"unknown top-level key(s): {sorted(unknown)}")
    for required in ("grid", "stations", "uavs", "seed", "duration_s"):
        if required not in obj:
            raise ScenarioError(f"missing required key {required!r}")
    g = obj["grid"]
    grid = GridSpec(
        origin=Vec3.from_seq(g.get("origin", [0.0, 0.0, 0.0])),
        cell_size=float(g.get("cell_size", DEFAULT_CELL_SIZE)),
        dims=tuple(int(d) for d in g["dims"]),
    )
    buildings = [Building(Aabb(Vec3.from_seq(b["min"]), Vec3.from_seq(b["max"])))
                 for b in obj.get("buildings", [])]
    planner_obj = obj.get("planner", {})
    planner = PlannerConfig(
        replan_period=float(planner_obj.get("replan_period_s", 60.0)),
        edge_capacity=int(planner_obj.get("edge_capacity", 2)),
        load_coeff=float(planner_obj.get("load_coeff", 1.0)),
    )
    cfg = ScenarioConfig(
        grid=grid,
        zones=[_parse_zone(z) for z in obj.get("zones", [])],
        buildings=buildings,
        stations=[_parse_station(s) for s in obj["stations"]],
        uavs=[_parse_uav(u) for u in obj["uavs"]],
        seed=int(obj["seed"]),
        duration=float(obj["duration_s"]),
        tick=float(obj.get("tick_s", 0.1)),
        sensing_cadence=float(obj.get("sensing_cadence_s", 1.5)),
        v_max=float(obj.get("v_max_mps", DEFAULT_V_MAX)),
        planner=planner,
    )
    cfg.validate()
    return cfg


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario parse error in {path}: {exc}") from exc
    return parse_scenario(obj)


def serialize_scenario(cfg: ScenarioConfig) -> dict:
    return {
        "grid": {
            "origin": cfg.grid.origin.to_list(),
            "cell_size": cfg.grid.cell_size,
            "dims": list(cfg.grid.dims),
        },
        "zones": [
            {
                "id": z.id,
                "kind": z.kind,
                "footprint": z.footprint.to_list(),
                "alt_band": [z.alt_band[0], z.alt_band[1]],
                "active_window": None if z.active_window is None else list(z.active_window),
            }
            for z in cfg.zones
        ],
        "buildings": [
            {"min": b.aabb.lo.to_list(), "max": b.aabb.hi.to_list()} for b in cfg.buildings
        ],
        "stations": [
            {
                "id": s.id,
                "position": s.position.to_list(),
                "band": s.band,
                "fc_hz": s.fc,
                "bandwidth_hz": s.bandwidth,
                "subcarrier_spacing_hz": s.delta_f,
                "pri_s": s.pri,
                "eirp_dbm": s.eirp,
                "rx_gain_dbi": s.rx_gain,
                "noise_figure_db": s.noise_figure,
                "n_symbols": s.n_symbols,
                "max_range_gate_m": s.max_range_gate,
            }
            for s in cfg.stations
        ],
        "uavs": [
            {
                "id": u.state.id,
                "position": u.state.position.to_list(),
                "velocity": u.state.velocity.to_list(),
                "rcs_m2": u.state.rcs,
                "registered": u.state.registered,
                "mode": u.state.mode,
                "routing": u.routing,
                "plan": {
                    "waypoints": [{"pos": p.to_list(), "t": t} for p, t in u.plan.waypoints],
                    "cruise_speed_mps": u.plan.cruise_speed,
                },
            }
            for u in cfg.uavs
        ],
        "seed": cfg.seed,
        "duration_s": cfg.duration,
        "tick_s": cfg.tick,
        "sensing_cadence_s": cfg.sensing_cadence,
        "v_max_mps": cfg.v_max,
        "planner": {
            "replan_period_s": cfg.planner.replan_period,
            "edge_capacity": cfg.planner.edge_capacity,
            "load_coeff": cfg.planner.load_coeff,
        },
    }


# ---------------------------------------------------------------------------
# Kinematics

def advance_kinematics(state: UavState, plan: FlightPlan, t: float, dt: float) -> UavState:
    """Advance one UAV by dt starting from sim time t.

    Mode semantics:
      nominal   - interpolate along the plan at absolute time t+dt (so n small
                  steps land exactly where one big step does); at the final
                  waypoint the UAV clamps and switches to landed.
      hovering  - frozen in place.
      returning - fly straight at cruise speed toward the plan's first
                  waypoint; on arrival switch to landing.
      landing   - descend at a fixed rate; at ground level switch to landed.
      landed    - inert.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    t1 = t + dt
    if state.mode == "hovering" or state.mode == "landed":
        return replace(state, velocity=Vec3(0.0, 0.0, 0.0))
    if state.mode == "nominal":
        pos = plan.position_at(t1)
        vel = plan.velocity_at(t1)
        if t1 >= plan.t_end:
            return replace(state, position=plan.waypoints[-1][0], velocity=Vec3(0, 0, 0), mode="landed")
        return replace(state, position=pos, velocity=vel)
    if state.mode == "returning":
        home = plan.waypoints[0][0]
        to_home = home - state.position
        dist = to_home.norm()
        step = plan.cruise_speed * dt
        if dist <= step or dist == 0.0:
            return replace(state, position=home, velocity=Vec3(0, 0, 0), mode="landing")
        vel = to_home.scale(plan.cruise_speed / dist)
        return replace(state, position=state.position + vel.scale(dt), velocity=vel)
    if state.mode == "landing":
        drop = LANDING_DESCENT_RATE * dt
        z = state.position.z - drop
        if z <= 0.0:
            return replace(state, position=Vec3(state.position.x, state.position.y, 0.0),
                           velocity=Vec3(0, 0, 0), mode="landed")
        return replace(state, position=Vec3(state.position.x, state.position.y, z),
                       velocity=Vec3(0, 0, -LANDING_DESCENT_RATE))
    raise ValueError(f"unknown mode {state.mode!r}")


# ---------------------------------------------------------------------------
# Geometry queries

def line_of_sight(a: Vec3, b: Vec3, buildings: Sequence[Building]) -> bool:
    """True iff the segment a-b is not blocked by any building box.

    Grazing a box face exactly counts as clear (open-box convention).
    """
    if a == b:
        raise ValueError("line_of_sight needs two distinct points")
    from .geometry import segment_hits_box
    return not any(segment_hits_box(a, b, bld.aabb) for bld in buildings)


def zone_violations(position: Vec3, t: float, zones: Sequence[Zone]) -> List[str]:
    """Ids of restricted/temporary zones containing the point at time t."""
    return [z.id for z in zones
            if z.kind in ("restricted", "temporary") and z.contains(position, t)]
