"""Deterministic discrete-time simulation loop.

Each tick advances kinematics; on the sensing cadence every station
synthesizes an echo frame, runs the range-Doppler pipeline, and feeds the
fusion center; the management plane delivers queued commands; alerts and
metrics accumulate. Everything random is drawn from counter-derived
generators keyed by (seed, stream, tick, substream), so module evaluation
order never changes the outcome and a (config, seed, event script) triple
fully determines every output byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from dataclasses import replace as dataclasses_replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .control import (ApprovalContext, ControlPlane, Domain, DomainTree,
                      OverrideCommand, UavIdentity)
from .fusion import TrackManager, cluster_estimates, detection_to_estimate, fuse_estimates
from .geometry import Vec3
from .planning import (GameConfig, PlanRequest, build_graph, equilibrium_iterate)
from .scenario import (FlightPlan, ScenarioConfig, UavState, advance_kinematics,
                       line_of_sight, zone_violations, _parse_zone)
from .sensing import (WINDOW_SEPARATION_BINS, TargetTruth, detect,
                      radial_velocity_of, range_doppler_map, resolution_limits,
                      synth_echo)

STREAM_SENSE = 1
STREAM_ANGLE = 2
STREAM_LINK = 3
STREAM_PLAN = 4
STREAM_EVENT = 5

PIPELINE_WINDOW = "blackmanharris"  # sidelobes stay under the noise floor
METRIC_GATE_M = 30.0                # truth-matching gate for error series


def derive_rng(seed: int, stream: int, tick: int = 0, sub: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream, tick, sub))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class SimEvent:
    t: float
    seq: int
    kind: str       # spawn_rogue | close_zone | open_zone
    payload: dict


@dataclass
class _UavRuntime:
    state: UavState
    plan: Optional[FlightPlan]
    routing: str = "fixed"
    auth_id: Optional[str] = None
    rogue: bool = False


class SimRun:
    """One reproducible simulation run; single logical owner of world state."""

    def __init__(self, config: ScenarioConfig, seed: Optional[int] = None,
                 trace_path=None):
        config.validate()
        self.config = config
        self.seed = config.seed if seed is None else int(seed)
        self.tick = config.tick
        self.cadence_ticks = int(round(config.sensing_cadence / config.tick))
        self.n_ticks = int(round(config.duration / config.tick))
        self.tick_idx = 0
        self.uavs: Dict[str, _UavRuntime] = {}
        self.zones = list(config.zones)
        self.buildings = list(config.buildings)
        self.stations = sorted(config.stations, key=lambda s: s.id)
        self.events: List[SimEvent] = []
        self._event_seq = 0
        self._trace_path = trace_path
        self._trace_lines: List[str] = []

        horizon = min(128, max(8, int(math.ceil(config.duration / self._step_dt()))))
        self.graph = build_graph(config, horizon) if config.grid.n_cells <= 200_000 else None
        self.domains = self._default_domains()
        self.control = ControlPlane(self.domains, position_oracle=self._uav_position)
        self.approval = ApprovalContext(self.zones, grid=config.grid, graph=self.graph,
                                        sample_dt=config.tick)
        self.fused_tracker = TrackManager(prefix="trk")
        self._rogue_alerted: set = set()
        self._zone_alerted: set = set()
        self._replan_requested = False
        self._replan_every_ticks = max(1, int(round(config.planner.replan_period / config.tick)))

        # metrics accumulators
        self.station_errors: Dict[str, List[float]] = {s.id: [] for s in self.stations}
        self.station_cover: Dict[str, Dict[str, List[int]]] = {
            s.id: {} for s in self.stations}
        self.fused_errors: List[float] = []
        self.fused_cover: Dict[str, List[int]] = {}
        self.fused_fix_count = 0
        self.planner_report: Optional[dict] = None
        self._cadence_index = 0

        for entry in config.uavs:
            self.uavs[entry.state.id] = _UavRuntime(
                state=entry.state, plan=entry.plan, routing=entry.routing)
        self._onboard()

    # -- setup helpers ----------------------------------------------------

    def _step_dt(self) -> float:
        speeds = sorted(u.plan.cruise_speed for u in self.config.uavs) or [5.0]
        return self.config.grid.cell_size / speeds[len(speeds) // 2]

    def _default_domains(self) -> DomainTree:
        g = self.config.grid
        x0, y0 = g.origin.x, g.origin.y
        x1 = x0 + g.dims[0] * g.cell_size
        y1 = y0 + g.dims[1] * g.cell_size
        cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        return DomainTree([
            Domain("national", "national"),
            Domain("prov-1", "provincial", "national",
                   coverage=(x0 - 10 * g.cell_size, y0 - 10 * g.cell_size,
                             x1 + 10 * g.cell_size, y1 + 10 * g.cell_size),
                   gateway_pos=Vec3(cx, cy, 0.0)),
            Domain("dist-west", "district", "prov-1",
                   coverage=(x0, y0, cx, y1), gateway_pos=Vec3(0.5 * (x0 + cx), cy, 0.0)),
            Domain("dist-east", "district", "prov-1",
                   coverage=(cx, y0, x1, y1), gateway_pos=Vec3(0.5 * (cx + x1), cy, 0.0)),
        ])

    def _uav_position(self, uav_id: str) -> Optional[Vec3]:
        rt = self.uavs.get(uav_id)
        return rt.state.position if rt else None

    def _onboard(self) -> None:
        """Register, admit, and walk each configured UAV's plan to active."""
        for uid in sorted(self.uavs):
            rt = self.uavs[uid]
            if not rt.state.registered:
                continue
            domain = self.domains.route_gateway(rt.state.position).id
            self.control.register(UavIdentity(uid, f"cred-{uid}", domain), 0.0)
            self.control.admit(uid, f"cred-{uid}", domain, 0.0)
            if rt.plan is None:
                continue
            auth_id = f"auth-{uid}-1"
            self.control.submit_plan(auth_id, uid, 0.0)
            ok, reasons = self.control.approve_plan(auth_id, rt.plan, self.approval,
                                                    0.0, decided_by=domain)
            if ok:
                self.control.activate_plan(auth_id, 0.0)
                rt.auth_id = auth_id
            else:
                rt.state = advance_to_mode(rt.state, "hovering")

    # -- event injection ---------------------------------------------------

    def inject_event(self, kind: str, t: float, payload: Optional[dict] = None) -> dict:
        if kind not in ("spawn_rogue", "close_zone", "open_zone"):
            raise ValueError(f"unknown event kind {kind!r}")
        now = self.tick_idx * self.tick
        if t < now - 1e-9:
            raise ValueError(f"event at t={t} is in the past (now {now})")
        self._event_seq += 1
        ev = SimEvent(t=t, seq=self._event_seq, kind=kind, payload=payload or {})
        self.events.append(ev)
        self.events.sort(key=lambda e: (e.t, e.seq))
        return {"acknowledged": True, "seq": ev.seq}

    def _apply_event(self, ev: SimEvent, t: float) -> None:
        if ev.kind == "spawn_rogue":
            p = ev.payload
            uid = p.get("id", f"rogue-{ev.seq}")
            state = UavState(id=uid, position=Vec3.from_seq(p.get("position", [0, 0, 60])),
                             velocity=Vec3.from_seq(p.get("velocity", [3, 0, 0])),
                             rcs=float(p.get("rcs_m2", 0.05)), registered=False,
                             mode="nominal")
            self.uavs[uid] = _UavRuntime(state=state, plan=None, rogue=True)
        elif ev.kind == "close_zone":
            zone = _parse_zone(ev.payload["zone"])
            self.zones.append(zone)
            self.approval.zones.append(zone)
            self.control.record_zone(zone.id, zone.kind, t, created=True)
            threatened = self._routes_hitting_zone(zone, t)
            for uid in threatened:
                self.control.raise_alert("zone_violation",
                                         {"zone_id": zone.id, "uav_id": uid,
                                          "phase": "route_forecast"}, t)
            if threatened:
                self._replan_requested = True
        elif ev.kind == "open_zone":
            zid = ev.payload["zone_id"]
            kept = [z for z in self.zones if z.id != zid]
            if len(kept) != len(self.zones):
                self.zones[:] = kept
                self.approval.zones[:] = kept
                self.control.record_zone(zid, "unknown", t, created=False)

    def _routes_hitting_zone(self, zone, t_now: float) -> List[str]:
        hits = []
        for uid in sorted(self.uavs):
            rt = self.uavs[uid]
            if rt.plan is None or rt.state.mode != "nominal":
                continue
            t = max(t_now, rt.plan.t_start)
            while t <= rt.plan.t_end + 1e-9:
                if zone.kind in ("restricted", "temporary") and \
                        zone.contains(rt.plan.position_at(t), t):
                    hits.append(uid)
                    break
                t += self.config.tick * 5
        return hits

    # -- per-tick pipeline ---------------------------------------------------

    def _advance_kinematics(self, t: float) -> None:
        for uid in sorted(self.uavs):
            rt = self.uavs[uid]
            prev_mode = rt.state.mode
            if rt.rogue or rt.plan is None:
                # Rogues and planless UAVs drift on their current velocity.
                if rt.state.mode == "nominal":
                    new_pos = rt.state.position + rt.state.velocity.scale(self.tick)
                    rt.state = UavState(rt.state.id, new_pos, rt.state.velocity,
                                        rt.state.rcs, rt.state.registered, rt.state.mode)
                else:
                    rt.state = advance_kinematics(rt.state, _hover_plan(rt.state), t, self.tick)
                continue
            rt.state = advance_kinematics(rt.state, rt.plan, t, self.tick)
            if prev_mode == "nominal" and rt.state.mode == "landed" and rt.auth_id:
                self.control.complete_plan(rt.auth_id, t + self.tick)
                rt.auth_id = None
            elif prev_mode == "landing" and rt.state.mode == "landed":
                self.control._append(t + self.tick, "mode_observed",
                                     {"uav_id": uid, "mode": "landed"})

    def _sense_and_fuse(self, t: float) -> None:
        cadence_idx = self._cadence_index
        truths = {uid: rt for uid, rt in sorted(self.uavs.items())
                  if rt.state.mode != "landed"}
        fixes: List[Tuple[Vec3, np.ndarray, List[str]]] = []
        all_estimates = []
        for si, bs in enumerate(self.stations):
            rng = derive_rng(self.seed, STREAM_SENSE, self.tick_idx, si)
            _, _, range_max, vel_max = resolution_limits(bs)
            targets = []
            truth_list = []
            for uid, rt in truths.items():
                r = bs.position.dist(rt.state.position)
                v_r = abs(radial_velocity_of(bs, rt.state.position, rt.state.velocity))
                if 0.0 < r <= min(bs.max_range_gate, range_max) and v_r < vel_max * 0.999:
                    targets.append((rt.state.position, rt.state.velocity, rt.state.rcs))
                    truth_list.append(TargetTruth(rt.state.position, rt.state.velocity))
            frame = synth_echo(bs, targets, rng, self.buildings)
            power = range_doppler_map(frame, bs, window=PIPELINE_WINDOW)
            detections = detect(power, bs, truth_list, rng,
                                min_separation_bins=WINDOW_SEPARATION_BINS[PIPELINE_WINDOW])
            for d in detections:
                est = detection_to_estimate(dataclasses_replace(d, t=t), bs)
                all_estimates.append(est)
                # station error series vs nearest truth
                best_uid, best_err = None, METRIC_GATE_M
                for uid, rt in truths.items():
                    err = est.position.dist(rt.state.position)
                    if err < best_err:
                        best_uid, best_err = uid, err
                if best_uid is not None:
                    self.station_errors[bs.id].append(best_err)
                    self.station_cover[bs.id].setdefault(best_uid, []).append(cadence_idx)
        for cluster in cluster_estimates(all_estimates):
            pos, cov = fuse_estimates(cluster)
            fixes.append((pos, cov, [e.station_id for e in cluster]))
        tracks, dropped = self.fused_tracker.step(fixes, t)
        for tid in dropped:
            self.control.raise_alert("track_lost", {"track_id": tid}, t)
        for track in tracks:
            if track.misses > 0 or not track.history or not track.confirmed:
                continue
            if track.history[-1]["t"] != t:
                continue
            self.fused_fix_count += 1
            best_uid, best_err = None, METRIC_GATE_M
            for uid, rt in truths.items():
                err = track.position.dist(rt.state.position)
                if err < best_err:
                    best_uid, best_err = uid, err
            if best_uid is not None:
                track.uav_id = best_uid
                track.history[-1]["error"] = float(best_err)
                self.fused_errors.append(best_err)
                self.fused_cover.setdefault(best_uid, []).append(cadence_idx)
                rt = self.uavs[best_uid]
                if track.confirmed and not rt.state.registered and \
                        track.track_id not in self._rogue_alerted:
                    self._rogue_alerted.add(track.track_id)
                    self.control.raise_alert(
                        "rogue", {"track_id": track.track_id, "uav_id": best_uid,
                                  "source": "sensing"}, t)
            hits = zone_violations(track.position, t, self.zones)
            for zid in hits:
                key = (track.track_id, zid)
                if key not in self._zone_alerted:
                    self._zone_alerted.add(key)
                    self.control.raise_alert(
                        "zone_violation", {"zone_id": zid, "track_id": track.track_id,
                                           "phase": "observed"}, t)
        self._cadence_index += 1

    def _replan_dynamic(self, t: float) -> None:
        if self.graph is None:
            return
        dynamic = [uid for uid in sorted(self.uavs)
                   if self.uavs[uid].routing == "dynamic"
                   and self.uavs[uid].state.mode == "nominal"
                   and self.uavs[uid].plan is not None]
        if not dynamic:
            self._replan_requested = False
            return
        grid = self.config.grid
        graph = build_graph(self.config, self.graph.horizon, t0=t)
        requests = []
        for uid in dynamic:
            rt = self.uavs[uid]
            start = graph.node_index.get(grid.cell_of(rt.state.position))
            goal = graph.node_index.get(grid.cell_of(rt.plan.waypoints[-1][0]))
            if start is None or goal is None or start == goal:
                continue
            requests.append(PlanRequest(uid, start, goal, 0))
        if not requests:
            self._replan_requested = False
            return
        assignment = equilibrium_iterate(requests, graph, GameConfig(epsilon=1e-3))
        for uid, route in sorted(assignment.routes.items()):
            rt = self.uavs[uid]
            waypoints = [(rt.state.position, t)]
            for i, node in enumerate(route.nodes[1:], start=1):
                center = grid.cell_center(*graph.node_keys[node])
                waypoints.append((Vec3(center.x, center.y, rt.state.position.z),
                                  t + i * graph.step_dt))
            new_plan = FlightPlan(uav_id=uid, waypoints=tuple(waypoints),
                                  cruise_speed=rt.plan.cruise_speed)
            if rt.auth_id:
                self.control.abort_plan(rt.auth_id, t)
            auth_id = f"auth-{uid}-r{self.tick_idx}"
            self.control.submit_plan(auth_id, uid, t)
            ok, _ = self.control.approve_plan(auth_id, new_plan, self.approval, t,
                                              decided_by="prov-1")
            if ok:
                self.control.activate_plan(auth_id, t)
                rt.plan = new_plan
                rt.auth_id = auth_id
                rt.state = advance_to_mode(rt.state, "nominal")
            else:
                rt.auth_id = None
                rt.state = advance_to_mode(rt.state, "hovering")
        self.planner_report = {
            "total_cost": round(assignment.total_cost, 6),
            "max_cost": round(assignment.max_cost, 6),
            "conflicts": assignment.conflicts,
            "converged": assignment.converged,
        }
        self._replan_requested = False

    def dispatch_override(self, uav_id: str, kind: str, t: Optional[float] = None,
                          cmd_id: Optional[str] = None) -> OverrideCommand:
        """Issue an override; delivery happens via the link simulation."""
        now = self.tick_idx * self.tick if t is None else t
        rt = self.uavs.get(uav_id)
        cmd_id = cmd_id or f"ovr-{uav_id}-{self.tick_idx}-{kind}"
        issuer = self.domains.route_gateway(rt.state.position).id if rt else "prov-1"
        cmd = OverrideCommand(cmd_id=cmd_id, uav_id=uav_id, kind=kind,
                              issued_at=now, issuer=issuer)
        # PC5 direct sidelink when the serving gateway is in range, else Uu.
        link = "uu"
        sess = self.control.state["sessions"].get(uav_id)
        if rt is not None and sess is not None:
            gw = self.domains.by_id[sess["domain"]]
            pc5_range = self.control.link_models["pc5"].max_range or math.inf
            if gw.gateway_pos.dist(rt.state.position) <= pc5_range:
                link = "pc5"
        self.control.dispatch_override(cmd, link, now)
        return cmd

    def _deliver_messages(self, t: float) -> None:
        rng = derive_rng(self.seed, STREAM_LINK, self.tick_idx)
        delivered = self.control.process_links(t, rng)
        for ev in delivered:
            if ev.get("kind") == "override_delivered" and not ev["payload"].get("duplicate"):
                uid = ev["payload"]["uav_id"]
                rt = self.uavs.get(uid)
                if rt is not None:
                    from .control import OVERRIDE_MODE
                    rt.state = advance_to_mode(rt.state, OVERRIDE_MODE[ev["payload"]["override"]])
                    if rt.auth_id and ev["payload"]["override"] in ("return_home", "land"):
                        self.control.abort_plan(rt.auth_id, ev["t"])
                        rt.auth_id = None

    def _check_safety(self) -> None:
        active = {a["uav_id"] for a in self.control.state["authorizations"].values()
                  if a["status"] == "active"}
        for uid, rt in self.uavs.items():
            if rt.state.registered and not rt.rogue and rt.state.mode == "nominal":
                if uid not in active:
                    raise RuntimeError(f"safety violation at tick {self.tick_idx}: "
                                       f"{uid} nominal without active authorization")
        self.control.check_safety()

    def _emit_trace(self, t: float, sensed: bool) -> None:
        if self._trace_path is None:
            return
        rec = {
            "t": round(t, 6),
            "uavs": [{
                "id": uid, "pos": rt.state.position.to_list(),
                "mode": rt.state.mode, "registered": rt.state.registered,
            } for uid, rt in sorted(self.uavs.items())],
        }
        if sensed:
            rec["tracks"] = [{
                "track_id": tr.track_id, "uav_id": tr.uav_id,
                "pos": tr.position.to_list(),
                "stations": list(tr.contributing_stations),
                "confirmed": tr.confirmed,
            } for tr in self.fused_tracker.tracks]
            rec["station_fixes"] = {
                sid: len(self.station_errors[sid]) for sid in sorted(self.station_errors)}
        self._trace_lines.append(json.dumps(rec, separators=(",", ":")))

    def step(self) -> None:
        t_now = self.tick_idx * self.tick
        t_next = (self.tick_idx + 1) * self.tick
        while self.events and self.events[0].t <= t_next + 1e-9:
            ev = self.events.pop(0)
            self._apply_event(ev, max(ev.t, t_now))
        self._advance_kinematics(t_now)
        sensed = False
        if (self.tick_idx + 1) % self.cadence_ticks == 0:
            self._sense_and_fuse(t_next)
            sensed = True
        if self._replan_requested or (
                (self.tick_idx + 1) % self._replan_every_ticks == 0
                and any(rt.routing == "dynamic" for rt in self.uavs.values())):
            self._replan_dynamic(t_next)
        self._deliver_messages(t_next)
        self._check_safety()
        self._emit_trace(t_next, sensed)
        self.tick_idx += 1

    def run(self) -> dict:
        while self.tick_idx < self.n_ticks:
            self.step()
        report = self.metrics_report()
        if self._trace_path is not None:
            from pathlib import Path
            Path(self._trace_path).write_text(
                "\n".join(self._trace_lines) + ("\n" if self._trace_lines else ""),
                encoding="utf-8")
        return report

    # -- reporting -----------------------------------------------------------

    @staticmethod
    def _series_stats(errors: Sequence[float]) -> dict:
        if not errors:
            return {"mean": None, "p95": None, "max": None, "n": 0}
        arr = np.array(errors)
        return {"mean": round(float(arr.mean()), 6),
                "p95": round(float(np.percentile(arr, 95)), 6),
                "max": round(float(arr.max()), 6), "n": int(arr.size)}

    @staticmethod
    def _longest_gap(cadences: Sequence[int]) -> int:
        if len(cadences) < 2:
            return 0
        gaps = [b - a - 1 for a, b in zip(cadences, cadences[1:])]
        return max(gaps) if gaps else 0

    def metrics_report(self) -> dict:
        stations = {}
        for sid in sorted(self.station_errors):
            gaps = [self._longest_gap(c) for c in self.station_cover[sid].values()] or [0]
            stations[sid] = {
                "errors": self._series_stats(self.station_errors[sid]),
                "longest_gap": max(gaps),
            }
        fused_gaps = [self._longest_gap(c) for c in self.fused_cover.values()] or [0]
        under10 = ([e < 10.0 for e in self.fused_errors]
                   if self.fused_errors else [])
        lat = sorted(self.control.override_latencies)
        report = {
            "seed": self.seed,
            "duration_s": self.config.duration,
            "tick_s": self.config.tick,
            "sensing_cadence_s": self.config.sensing_cadence,
            "stations": stations,
            "fused": {
                "errors": self._series_stats(self.fused_errors),
                "frac_under_10m": (round(sum(under10) / len(under10), 6)
                                   if under10 else None),
                "n_fixes": self.fused_fix_count,
                "longest_gap": max(fused_gaps),
            },
            "planner": self.planner_report,
            "overrides": {
                "issued": len(self.control.pending_overrides),
                "delivered": len(lat),
                "latency_mean_s": round(float(np.mean(lat)), 9) if lat else None,
                "latency_p99_s": (round(float(np.percentile(np.array(lat), 99)), 9)
                                  if lat else None),
            },
            "alerts": {k: self.control.state["alert_counts"][k]
                       for k in sorted(self.control.state["alert_counts"])},
            "audit_events": len(self.control.events),
        }
        return report


def advance_to_mode(state: UavState, mode: str) -> UavState:
    from dataclasses import replace
    vel = state.velocity if mode == "nominal" else Vec3(0.0, 0.0, 0.0)
    return replace(state, mode=mode, velocity=vel)


def _hover_plan(state: UavState) -> FlightPlan:
    return FlightPlan(uav_id=state.id,
                      waypoints=((state.position, 0.0), (state.position, 1.0)),
                      cruise_speed=1.0)


def run_scenario(config: ScenarioConfig, seed: Optional[int] = None,
                 trace_path=None, events: Sequence[Tuple[str, float, dict]] = ()
                 ) -> Tuple[dict, str]:
    """Convenience wrapper: run to completion, return (metrics, audit JSONL)."""
    sim = SimRun(config, seed=seed, trace_path=trace_path)
    for kind, t, payload in events:
        sim.inject_event(kind, t, payload)
    report = sim.run()
    return report, sim.control.audit_jsonl()
