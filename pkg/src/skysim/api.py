"""HTTP service over a running simulation.

Read endpoints serve lock-protected snapshots and never block the stepping
thread for long; every mutating endpoint is funneled into the simulation's
command queue and acknowledged immediately (202/201), with effects surfacing
as audit events on the /events stream. Each accepted command produces exactly
one command-acceptance audit event when applied.
"""

from __future__ import annotations

import json
import threading
import time
from typing import List, Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .engine import SimRun
from .scenario import FlightPlan, ScenarioError, _parse_zone
from .geometry import Vec3

SNAPSHOT_TRACK_CAP = 10_000
RECENT_ALERTS = 50


class SimService:
    """Owns the stepping thread and serializes commands into it."""

    def __init__(self, sim: SimRun, pace: float = 0.0):
        self.sim = sim
        self.pace = pace  # sim-seconds per wall-second; 0 = free-run
        self.lock = threading.Lock()
        self.commands: List[dict] = []
        self.failed_commands: List[dict] = []
        self._auth_counter = 0
        self._zone_counter = 0
        self._cmd_counter = 0
        self._thread: Optional[threading.Thread] = None
        self._stop = threading.Event()
        self.done = threading.Event()

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def _loop(self) -> None:
        while not self._stop.is_set() and self.sim.tick_idx < self.sim.n_ticks:
            t_wall = time.perf_counter()
            with self.lock:
                self._apply_commands()
                self.sim.step()
            if self.pace > 0:
                budget = self.sim.tick / self.pace
                elapsed = time.perf_counter() - t_wall
                if budget > elapsed:
                    time.sleep(budget - elapsed)
        with self.lock:
            self._apply_commands()
        self.done.set()

    # -- commands ------------------------------------------------------------

    def _apply_commands(self) -> None:
        pending, self.commands = self.commands, []
        t = self.sim.tick_idx * self.sim.tick
        for cmd in pending:
            try:
                self._apply_one(cmd, t)
            except Exception as exc:
                # Lost races (e.g. approve vs reject) die here; the winning
                # command already produced the authoritative audit event.
                self.failed_commands.append({"cmd": cmd["op"], "error": str(exc)[:200]})

    def _apply_one(self, cmd: dict, t: float) -> None:
        sim = self.sim
        op = cmd["op"]
        if op == "submit_plan":
            sim.control.submit_plan(cmd["auth_id"], cmd["uav_id"], t)
            sim.uavs[cmd["uav_id"]].plan = cmd["plan"]
        elif op == "approve_plan":
            rt = sim.uavs.get(cmd["uav_id"])
            plan = rt.plan if rt else None
            ok, _ = sim.control.approve_plan(cmd["auth_id"], plan, sim.approval, t,
                                             decided_by=cmd.get("decided_by", "prov-1"))
            if ok:
                sim.control.activate_plan(cmd["auth_id"], t)
                if rt is not None:
                    rt.auth_id = cmd["auth_id"]
                    from .engine import advance_to_mode
                    rt.state = advance_to_mode(rt.state, "nominal")
        elif op == "reject_plan":
            sim.control.reject_plan(cmd["auth_id"], t, cmd.get("decided_by", "prov-1"),
                                    cmd.get("reasons"))
        elif op == "override":
            sim.dispatch_override(cmd["uav_id"], cmd["kind"], t, cmd_id=cmd["cmd_id"])
        elif op == "close_zone":
            sim.inject_event("close_zone", t, {"zone": cmd["zone"]})
        elif op == "open_zone":
            sim.inject_event("open_zone", t, {"zone_id": cmd["zone_id"]})

    def enqueue(self, cmd: dict) -> None:
        with self.lock:
            self.commands.append(cmd)

    # -- snapshots -------------------------------------------------------------

    def snapshot(self) -> dict:
        with self.lock:
            sim = self.sim
            t = sim.tick_idx * sim.tick
            uavs = [{
                "id": uid,
                "pos": rt.state.position.to_list(),
                "vel": rt.state.velocity.to_list(),
                "mode": rt.state.mode,
                "registered": rt.state.registered,
                "session": sim.control.state["sessions"].get(uid, {}).get("session_id"),
            } for uid, rt in sorted(sim.uavs.items())]
            tracks = [{
                "track_id": tr.track_id,
                "uav_id": tr.uav_id,
                "t": tr.t,
                "pos": tr.position.to_list(),
                "vel": tr.velocity.to_list(),
                "cov_diag": [float(tr.covariance[i, i]) for i in range(3)],
                "stations": list(tr.contributing_stations),
                "confirmed": tr.confirmed,
            } for tr in sim.fused_tracker.tracks[:SNAPSHOT_TRACK_CAP]]
            zones = [{
                "id": z.id, "kind": z.kind, "footprint": z.footprint.to_list(),
                "alt_band": list(z.alt_band),
                "active_window": list(z.active_window) if z.active_window else None,
            } for z in sim.zones]
            pending = [{"auth_id": aid, "uav_id": a["uav_id"], "status": a["status"]}
                       for aid, a in sorted(sim.control.state["authorizations"].items())
                       if a["status"] == "submitted"]
            alerts = [e for e in sim.control.events if e["kind"] == "alert"][-RECENT_ALERTS:]
            stations = [{
                "id": s.id, "band": s.band, "pos": s.position.to_list(),
                "max_range_gate_m": s.max_range_gate,
            } for s in sim.stations]
            return {"t": round(t, 6), "uavs": uavs, "tracks": tracks, "zones": zones,
                    "stations": stations, "pending_authorizations": pending,
                    "recent_alerts": alerts, "done": sim.tick_idx >= sim.n_ticks}

    def events_since(self, since: int) -> List[dict]:
        with self.lock:
            return [e for e in self.sim.control.events if e["seq"] > since]


def _error(code: str, message: str, status: int, details=None):
    return JSONResponse(status_code=status,
                        content={"code": code, "message": message,
                                 "details": details or {}})


def create_app(service: SimService) -> FastAPI:
    app = FastAPI(title="airspace gateway", version="0.1.0")

    @app.get("/state")
    def get_state():
        return service.snapshot()

    @app.get("/metrics")
    def get_metrics():
        with service.lock:
            return service.sim.metrics_report()

    @app.get("/zones")
    def get_zones():
        return service.snapshot()["zones"]

    @app.post("/zones", status_code=201)
    def post_zone(body: dict):
        try:
            zone_id = body.get("id") or f"zone-dyn-{service._zone_counter + 1}"
            body = dict(body)
            body["id"] = zone_id
            _parse_zone(body)  # validate before acknowledging
        except (ScenarioError, KeyError, ValueError, TypeError) as exc:
            return _error("invalid_zone", str(exc), 400)
        service._zone_counter += 1
        service.enqueue({"op": "close_zone", "zone": body})
        return {"zone_id": zone_id, "accepted": True}

    @app.delete("/zones/{zone_id}", status_code=202)
    def delete_zone(zone_id: str):
        with service.lock:
            known = any(z.id == zone_id for z in service.sim.zones)
        if not known:
            return _error("unknown_zone", f"no zone {zone_id!r}", 404)
        service.enqueue({"op": "open_zone", "zone_id": zone_id})
        return {"zone_id": zone_id, "accepted": True}

    @app.post("/plans", status_code=201)
    def post_plan(body: dict):
        try:
            uav_id = body["uav_id"]
            waypoints = tuple((Vec3.from_seq(w["pos"]), float(w["t"]))
                              for w in body["waypoints"])
            plan = FlightPlan(uav_id=uav_id, waypoints=waypoints,
                              cruise_speed=float(body.get("cruise_speed_mps", 5.0)))
            plan.validate(service.sim.config.v_max)
        except (KeyError, ValueError, TypeError, ScenarioError) as exc:
            return _error("invalid_plan", str(exc), 400)
        with service.lock:
            if uav_id not in service.sim.uavs:
                return _error("unknown_uav", f"no uav {uav_id!r}", 404)
            service._auth_counter += 1
            auth_id = f"auth-api-{service._auth_counter:04d}"
            service.commands.append({"op": "submit_plan", "auth_id": auth_id,
                                     "uav_id": uav_id, "plan": plan})
        return {"auth_id": auth_id, "status": "submitted"}

    def _plan_action(auth_id: str, op: str, body: Optional[dict]):
        with service.lock:
            auth = service.sim.control.state["authorizations"].get(auth_id)
            queued = any(c.get("auth_id") == auth_id and c["op"] == "submit_plan"
                         for c in service.commands)
            if auth is None and not queued:
                return _error("unknown_plan", f"no authorization {auth_id!r}", 404)
            if auth is not None and auth["status"] != "submitted":
                return _error("conflict", f"plan is {auth['status']}, not pending", 409,
                              {"status": auth["status"]})
            uav_id = auth["uav_id"] if auth else next(
                c["uav_id"] for c in service.commands
                if c.get("auth_id") == auth_id and c["op"] == "submit_plan")
            cmd = {"op": op, "auth_id": auth_id, "uav_id": uav_id}
            if body:
                cmd.update({k: body[k] for k in ("decided_by", "reasons") if k in body})
            service.commands.append(cmd)
        return {"auth_id": auth_id, "accepted": True}

    @app.post("/plans/{auth_id}/approve", status_code=202)
    def approve_plan(auth_id: str, body: Optional[dict] = None):
        return _plan_action(auth_id, "approve_plan", body)

    @app.post("/plans/{auth_id}/reject", status_code=202)
    def reject_plan(auth_id: str, body: Optional[dict] = None):
        return _plan_action(auth_id, "reject_plan", body)

    @app.post("/uavs/{uav_id}/override", status_code=202)
    def post_override(uav_id: str, body: dict):
        kind = body.get("kind")
        if kind not in ("hover", "return_home", "land"):
            return _error("invalid_override", f"kind must be hover|return_home|land", 400)
        with service.lock:
            if uav_id not in service.sim.uavs:
                return _error("unknown_uav", f"no uav {uav_id!r}", 404)
        cmd_id = body.get("cmd_id")
        if not cmd_id:
            service._cmd_counter += 1
            cmd_id = f"ovr-api-{service._cmd_counter:04d}"
        # Idempotence: re-posting the same cmd_id is acknowledged but only
        # ever enqueued once.
        with service.lock:
            dup = any(c.get("cmd_id") == cmd_id for c in service.commands) or \
                any(c == cmd_id for c in service.sim.control.state["delivered_cmds"]) or \
                cmd_id in service.sim.control.pending_overrides
            if not dup:
                service.commands.append({"op": "override", "uav_id": uav_id,
                                         "kind": kind, "cmd_id": cmd_id})
        return {"cmd_id": cmd_id, "accepted": True, "duplicate": dup}

    @app.get("/tracks/{track_id}/history")
    def track_history(track_id: str):
        with service.lock:
            for tr in (service.sim.fused_tracker.tracks
                       + service.sim.fused_tracker.dropped):
                if tr.track_id == track_id:
                    return {"track_id": track_id, "history": tr.history}
        return _error("unknown_track", f"no track {track_id!r}", 404)

    @app.get("/events")
    async def stream_events(request: Request, since: int = 0):
        if since < 0:
            return _error("invalid_cursor", "since must be >= 0", 400)

        async def gen():
            import asyncio
            cursor = since
            while True:
                batch = service.events_since(cursor)
                for ev in batch:
                    cursor = ev["seq"]
                    yield f"id: {ev['seq']}\ndata: {json.dumps(ev, separators=(',', ':'))}\n\n"
                if await request.is_disconnected():
                    return
                if service.done.is_set() and not service.events_since(cursor):
                    yield "event: end\ndata: {}\n\n"
                    return
                await asyncio.sleep(0.05)

        return StreamingResponse(gen(), media_type="text/event-stream")

    return app


def serve(sim: SimRun, port: int, pace: float = 0.0, host: str = "127.0.0.1"):
    """Run the sim and its API server; blocks until the server stops."""
    import uvicorn
    service = SimService(sim, pace=pace)
    service.start()
    app = create_app(service)
    config = uvicorn.Config(app, host=host, port=port, log_level="warning")
    server = uvicorn.Server(config)
    try:
        server.run()
    finally:
        service.stop()
    return service
