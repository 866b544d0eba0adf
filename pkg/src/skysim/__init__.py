"""Desk-scale deterministic simulator and management stack for low-altitude
UAV airspace: multi-band ISAC sensing, multi-station track fusion,
carrier-phase positioning, congestion-game and MCTS swarm routing, and a
control-data-separated management plane with an HTTP gateway."""

from .geometry import Aabb, Polygon2D, Vec3
from .scenario import (Building, FlightPlan, GridSpec, ScenarioConfig, ScenarioError,
                       UavState, Zone, advance_kinematics, line_of_sight,
                       load_scenario, zone_violations)
from .sensing import (BsConfig, Detection, EchoFrame, detect, range_doppler_map,
                      resolution_limits, snr_model, synth_echo)
from .fusion import (FusedTrack, StationEstimate, TrackManager, associate,
                     detection_to_estimate, fuse_estimates, track_update)
from .carrier_phase import AmbiguousSolution, PhaseMeasurement, carrier_phase_solve
from .planning import (DynamicGraph, GameConfig, MctsConfig, PlanRequest,
                       RouteAssignment, RoutePlan, best_response, build_graph,
                       equilibrium_iterate, evolve_situation, mcts_plan)
from .control import (ControlPlane, Domain, DomainTree, LinkModel, OverrideCommand,
                      UavIdentity)
from .engine import SimRun, derive_rng, run_scenario

__version__ = "0.1.0"
