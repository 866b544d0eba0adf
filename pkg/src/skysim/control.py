"""Control-data-separated UAV management plane.

All state lives behind an append-only audit log: command handlers validate,
append events, and apply them; replaying the log from scratch reconstructs
the registry, sessions, authorization lifecycle, and UAV modes exactly.

The link layer simulates per-domain gateways as single-server queues where
control-class messages strictly preempt data-class messages (control-data
separation), links never reorder (FIFO non-overtaking), and PC5 sidelink
delivery is range-limited.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Vec3
from .scenario import FlightPlan, Zone, zone_violations

DOMAIN_LEVELS = {"district": 0, "provincial": 1, "national": 2}
AUTH_TRANSITIONS = {
    "submitted": {"approved", "rejected"},
    "approved": {"active", "aborted"},
    "active": {"completed", "aborted"},
    "rejected": set(),
    "completed": set(),
    "aborted": set(),
}
OVERRIDE_KINDS = ("hover", "return_home", "land")
OVERRIDE_MODE = {"hover": "hovering", "return_home": "returning", "land": "landing"}
ALERT_KINDS = ("rogue", "zone_violation", "track_lost", "undelivered_override")
MAX_RETRIES = 3
SERVICE_TIME = 1e-4  # s per message at a gateway


class ControlError(ValueError):
    pass


@dataclass(frozen=True)
class UavIdentity:
    uav_id: str
    credential: str
    home_domain: str


@dataclass(frozen=True)
class Domain:
    id: str
    level: str
    parent: Optional[str] = None
    coverage: Optional[Tuple[float, float, float, float]] = None  # xmin,ymin,xmax,ymax; None = everywhere
    gateway_pos: Vec3 = Vec3(0.0, 0.0, 0.0)

    def covers(self, p: Vec3) -> bool:
        if self.coverage is None:
            return True
        xmin, ymin, xmax, ymax = self.coverage
        return xmin <= p.x <= xmax and ymin <= p.y <= ymax


class DomainTree:
    def __init__(self, domains: Sequence[Domain]):
        self.by_id = {d.id: d for d in domains}
        if len(self.by_id) != len(domains):
            raise ControlError("duplicate domain ids")
        for d in domains:
            if d.level not in DOMAIN_LEVELS:
                raise ControlError(f"domain {d.id}: unknown level {d.level!r}")
            if d.parent is None:
                if d.level != "national":
                    raise ControlError(f"domain {d.id}: only national domains may lack a parent")
            else:
                parent = self.by_id.get(d.parent)
                if parent is None:
                    raise ControlError(f"domain {d.id}: unknown parent {d.parent!r}")
                if DOMAIN_LEVELS[parent.level] <= DOMAIN_LEVELS[d.level]:
                    raise ControlError(f"domain {d.id}: parent level must be strictly above")

    def route_gateway(self, position: Vec3) -> Domain:
        """Lowest-level domain covering the position (edge relay first)."""
        covering = [d for d in self.by_id.values() if d.covers(position)]
        if not covering:
            raise ControlError(f"no domain covers position {position}")
        covering.sort(key=lambda d: (DOMAIN_LEVELS[d.level], d.id))
        return covering[0]

    def handover_path(self, src: str, dst: str) -> List[str]:
        """Domain hop list src..dst going up to the common ancestor and down."""
        if src not in self.by_id or dst not in self.by_id:
            raise ControlError("unknown domain in handover")
        if src == dst:
            return [src]

        def ancestry(d: str) -> List[str]:
            out = [d]
            while self.by_id[out[-1]].parent is not None:
                out.append(self.by_id[out[-1]].parent)
            return out

        up = ancestry(src)
        down = ancestry(dst)
        common = next((a for a in up if a in down), None)
        if common is None:
            raise ControlError(f"no common ancestor between {src} and {dst}")
        path = up[: up.index(common) + 1] + list(reversed(down[: down.index(common)]))
        return path


@dataclass(frozen=True)
class LinkModel:
    kind: str                      # pc5 | uu
    latency_mean: float
    latency_std: float
    max_range: Optional[float] = None   # pc5 only
    loss_probability: float = 0.0

    @staticmethod
    def pc5() -> "LinkModel":
        return LinkModel("pc5", 1.5e-3, 0.5e-3, max_range=1000.0)

    @staticmethod
    def uu() -> "LinkModel":
        return LinkModel("uu", 20e-3, 5e-3)


@dataclass
class ControlMessage:
    msg_id: str
    msg_class: str        # control | data
    payload_kind: str
    link: str             # pc5 | uu
    src: str
    dst: str
    size: int
    enqueue_t: float = 0.0
    enqueue_seq: int = 0
    retries: int = 0
    payload: dict = field(default_factory=dict)


@dataclass(frozen=True)
class OverrideCommand:
    cmd_id: str
    uav_id: str
    kind: str
    issued_at: float
    issuer: str
    delivered_at: Optional[float] = None

    def __post_init__(self):
        if self.kind not in OVERRIDE_KINDS:
            raise ControlError(f"unknown override kind {self.kind!r}")


class GatewayQueue:
    """Single-server priority queue: control before data, FIFO within class,
    non-overtaking delivery per (src, dst) flow."""

    def __init__(self, domain_id: str):
        self.domain_id = domain_id
        self.pending: List[ControlMessage] = []
        self.server_free_at = 0.0
        self.last_arrival: Dict[Tuple[str, str], float] = {}
        self.delivery_log: List[dict] = []  # for invariant checks

    def enqueue(self, msg: ControlMessage) -> None:
        self.pending.append(msg)

    def _pick(self, now: float) -> Optional[ControlMessage]:
        ready = [m for m in self.pending if m.enqueue_t <= now + 1e-12]
        if not ready:
            return None
        ready.sort(key=lambda m: (0 if m.msg_class == "control" else 1,
                                  m.enqueue_t, m.enqueue_seq))
        return ready[0]

    def drain(self, now: float, link_models: Dict[str, LinkModel],
              rng: np.random.Generator,
              range_check: Callable[[ControlMessage, float], bool],
              on_delivery: Callable[[ControlMessage, float], None],
              on_failure: Callable[[ControlMessage, float], None]) -> None:
        """Serve every message whose service can start by `now`."""
        while self.pending:
            earliest = min(m.enqueue_t for m in self.pending)
            start = max(self.server_free_at, earliest)
            if start > now + 1e-12:
                break
            msg = self._pick(start)
            if msg is None:
                break
            # Priority contract: no data message is served while a control
            # message is pending at this gateway.
            if msg.msg_class == "data":
                assert not any(m.msg_class == "control" and m.enqueue_t <= start + 1e-12
                               for m in self.pending if m is not msg), \
                    "priority inversion at gateway"
            self.pending.remove(msg)
            done = start + SERVICE_TIME
            self.server_free_at = done
            model = link_models[msg.link]
            latency = max(0.0, rng.normal(model.latency_mean, model.latency_std))
            lost = rng.random() < model.loss_probability
            in_range = range_check(msg, done)
            if lost or not in_range:
                msg.retries += 1
                if msg.retries > MAX_RETRIES:
                    on_failure(msg, done)
                else:
                    msg.enqueue_t = done
                    self.pending.append(msg)
                continue
            arrival = done + latency
            key = (msg.src, msg.dst)
            arrival = max(arrival, self.last_arrival.get(key, 0.0))
            self.last_arrival[key] = arrival
            self.delivery_log.append({
                "msg_id": msg.msg_id, "class": msg.msg_class, "t_start": start,
                "t_delivered": arrival, "link": msg.link, "dst": msg.dst,
            })
            on_delivery(msg, arrival)


# ---------------------------------------------------------------------------
# Event-sourced control-plane state


def _blank_state() -> dict:
    return {
        "registry": {},        # uav_id -> {credential, home_domain, active}
        "sessions": {},        # uav_id -> {session_id, domain}
        "authorizations": {},  # auth_id -> {uav_id, status, decided_by}
        "modes": {},           # uav_id -> mode string (management view)
        "delivered_cmds": [],  # cmd ids applied exactly once
        "zones": {},           # zone_id -> kind (management view of dynamic zones)
        "alert_counts": {k: 0 for k in ALERT_KINDS},
    }


def apply_event(state: dict, event: dict) -> dict:
    """Pure state transition; the only place control-plane state changes."""
    kind = event["kind"]
    p = event["payload"]
    if kind == "uav_registered":
        state["registry"][p["uav_id"]] = {
            "credential": p["credential"], "home_domain": p["home_domain"], "active": True}
    elif kind == "uav_deregistered":
        state["registry"][p["uav_id"]]["active"] = False
        state["sessions"].pop(p["uav_id"], None)
    elif kind == "session_granted":
        state["sessions"][p["uav_id"]] = {"session_id": p["session_id"], "domain": p["domain"]}
    elif kind == "session_denied":
        pass
    elif kind == "session_handover":
        sess = state["sessions"].get(p["uav_id"])
        if sess is not None and sess["session_id"] == p["session_id"]:
            sess["domain"] = p["to"]
    elif kind == "plan_submitted":
        state["authorizations"][p["auth_id"]] = {
            "uav_id": p["uav_id"], "status": "submitted", "decided_by": None}
    elif kind in ("plan_approved", "plan_rejected", "plan_activated",
                  "plan_completed", "plan_aborted"):
        auth = state["authorizations"][p["auth_id"]]
        new_status = {"plan_approved": "approved", "plan_rejected": "rejected",
                      "plan_activated": "active", "plan_completed": "completed",
                      "plan_aborted": "aborted"}[kind]
        if new_status not in AUTH_TRANSITIONS[auth["status"]]:
            raise ControlError(
                f"illegal transition {auth['status']} -> {new_status} for {p['auth_id']}")
        auth["status"] = new_status
        if kind in ("plan_approved", "plan_rejected"):
            auth["decided_by"] = p.get("decided_by")
        if kind == "plan_activated":
            state["modes"][auth["uav_id"]] = "nominal"
        elif kind == "plan_completed":
            state["modes"][auth["uav_id"]] = "landed"
        elif kind == "plan_aborted":
            if state["modes"].get(auth["uav_id"]) == "nominal":
                state["modes"][auth["uav_id"]] = "hovering"
    elif kind == "override_issued":
        pass
    elif kind == "override_delivered":
        if p["cmd_id"] not in state["delivered_cmds"]:
            state["delivered_cmds"].append(p["cmd_id"])
            state["modes"][p["uav_id"]] = OVERRIDE_MODE[p["override"]]
    elif kind == "override_failed":
        pass
    elif kind == "zone_created":
        state["zones"][p["zone_id"]] = p["zone_kind"]
    elif kind == "zone_deleted":
        state["zones"].pop(p["zone_id"], None)
    elif kind == "alert":
        state["alert_counts"][p["alert_kind"]] += 1
    elif kind == "mode_observed":
        state["modes"][p["uav_id"]] = p["mode"]
    else:
        raise ControlError(f"unknown event kind {kind!r}")
    return state


def replay(events: Sequence[dict]) -> dict:
    state = _blank_state()
    for ev in events:
        apply_event(state, ev)
    return state


class ControlPlane:
    """Command side of the management plane; one logical owner per sim."""

    def __init__(self, domains: DomainTree,
                 position_oracle: Optional[Callable[[str], Optional[Vec3]]] = None,
                 link_models: Optional[Dict[str, LinkModel]] = None):
        self.domains = domains
        self.state = _blank_state()
        self.events: List[dict] = []
        self._seq = 0
        self._session_counter = 0
        self._msg_counter = 0
        self.gateways: Dict[str, GatewayQueue] = {
            d: GatewayQueue(d) for d in domains.by_id}
        self.position_oracle = position_oracle or (lambda _uid: None)
        self.link_models = link_models or {"pc5": LinkModel.pc5(), "uu": LinkModel.uu()}
        self.pending_overrides: Dict[str, OverrideCommand] = {}
        self.override_latencies: List[float] = []

    # -- event plumbing ------------------------------------------------

    def _append(self, t: float, kind: str, payload: dict) -> dict:
        self._seq += 1
        event = {"seq": self._seq, "t": round(float(t), 9), "kind": kind, "payload": payload}
        self.events.append(event)
        apply_event(self.state, event)
        return event

    def audit_jsonl(self) -> str:
        return "\n".join(json.dumps(e, separators=(",", ":")) for e in self.events) + (
            "\n" if self.events else "")

    def verify_replay(self) -> bool:
        return replay(self.events) == self.state

    # -- UARF ------------------------------------------------------------

    def register(self, identity: UavIdentity, t: float) -> dict:
        if not identity.credential:
            raise ControlError("malformed credential")
        rec = self.state["registry"].get(identity.uav_id)
        if rec is not None and rec["active"]:
            raise ControlError(f"uav {identity.uav_id} already registered")
        if identity.home_domain not in self.domains.by_id:
            raise ControlError(f"unknown home domain {identity.home_domain}")
        return self._append(t, "uav_registered", {
            "uav_id": identity.uav_id, "credential": identity.credential,
            "home_domain": identity.home_domain})

    def deregister(self, uav_id: str, t: float) -> dict:
        rec = self.state["registry"].get(uav_id)
        if rec is None or not rec["active"]:
            raise ControlError(f"uav {uav_id} not registered")
        return self._append(t, "uav_deregistered", {"uav_id": uav_id})

    # -- UACF ------------------------------------------------------------

    def admit(self, uav_id: str, credential: str, domain: str, t: float) -> str:
        rec = self.state["registry"].get(uav_id)
        if rec is None or not rec["active"]:
            self._append(t, "session_denied", {"uav_id": uav_id, "reason": "unregistered"})
            self.raise_alert("rogue", {"uav_id": uav_id, "source": "admission"}, t)
            raise ControlError(f"uav {uav_id} is not registered (rogue candidate)")
        if rec["credential"] != credential:
            self._append(t, "session_denied", {"uav_id": uav_id, "reason": "bad_credential"})
            self.raise_alert("rogue", {"uav_id": uav_id, "source": "credential"}, t)
            raise ControlError(f"credential mismatch for {uav_id}")
        if domain not in self.domains.by_id:
            raise ControlError(f"unknown domain {domain}")
        existing = self.state["sessions"].get(uav_id)
        if existing is not None:
            if existing["domain"] != domain:
                self.handover(uav_id, existing["domain"], domain, t)
            return existing["session_id"]
        self._session_counter += 1
        session_id = f"sess-{self._session_counter:05d}"
        self._append(t, "session_granted", {
            "uav_id": uav_id, "session_id": session_id, "domain": domain})
        return session_id

    def handover(self, uav_id: str, from_domain: str, to_domain: str, t: float) -> None:
        sess = self.state["sessions"].get(uav_id)
        if sess is None or sess["domain"] != from_domain:
            raise ControlError(f"no active session for {uav_id} in {from_domain}")
        path = self.domains.handover_path(from_domain, to_domain)
        for a, b in zip(path, path[1:]):
            self._append(t, "session_handover", {
                "uav_id": uav_id, "session_id": sess["session_id"], "from": a, "to": b})
        # Messages queued for this UAV move with the session, preserving order.
        src_q = self.gateways[from_domain]
        moving = [m for m in src_q.pending if m.dst == uav_id]
        for m in moving:
            src_q.pending.remove(m)
            self.gateways[to_domain].enqueue(m)

    # -- UAMF ------------------------------------------------------------

    def submit_plan(self, auth_id: str, uav_id: str, t: float) -> dict:
        if auth_id in self.state["authorizations"]:
            raise ControlError(f"authorization {auth_id} already exists")
        return self._append(t, "plan_submitted", {"auth_id": auth_id, "uav_id": uav_id})

    def approve_plan(self, auth_id: str, plan: FlightPlan, world: "ApprovalContext",
                     t: float, decided_by: str) -> Tuple[bool, List[dict]]:
        auth = self.state["authorizations"].get(auth_id)
        if auth is None or auth["status"] != "submitted":
            raise ControlError(f"authorization {auth_id} is not in submitted state")
        reasons = world.check(plan)
        if reasons:
            self._append(t, "plan_rejected", {
                "auth_id": auth_id, "decided_by": decided_by, "reasons": reasons})
            return False, reasons
        self._append(t, "plan_approved", {"auth_id": auth_id, "decided_by": decided_by})
        world.commit(plan)
        return True, []

    def reject_plan(self, auth_id: str, t: float, decided_by: str,
                    reasons: Optional[List[dict]] = None) -> dict:
        auth = self.state["authorizations"].get(auth_id)
        if auth is None or auth["status"] != "submitted":
            raise ControlError(f"authorization {auth_id} is not in submitted state")
        return self._append(t, "plan_rejected", {
            "auth_id": auth_id, "decided_by": decided_by,
            "reasons": reasons or [{"code": "manual_reject"}]})

    def activate_plan(self, auth_id: str, t: float) -> dict:
        return self._append(t, "plan_activated", {"auth_id": auth_id})

    def complete_plan(self, auth_id: str, t: float) -> dict:
        return self._append(t, "plan_completed", {"auth_id": auth_id})

    def abort_plan(self, auth_id: str, t: float) -> dict:
        return self._append(t, "plan_aborted", {"auth_id": auth_id})

    # -- UANF / UAGF -----------------------------------------------------

    def dispatch_override(self, cmd: OverrideCommand, link: str, t: float) -> ControlMessage:
        sess = self.state["sessions"].get(cmd.uav_id)
        if sess is None:
            self.raise_alert("undelivered_override",
                             {"cmd_id": cmd.cmd_id, "uav_id": cmd.uav_id,
                              "reason": "no_session"}, t)
            raise ControlError(f"uav {cmd.uav_id} has no active session (escalated)")
        if link not in self.link_models:
            raise ControlError(f"unknown link {link!r}")
        self._msg_counter += 1
        msg = ControlMessage(
            msg_id=f"msg-{self._msg_counter:06d}", msg_class="control",
            payload_kind="override", link=link, src=sess["domain"], dst=cmd.uav_id,
            size=256, enqueue_t=t, enqueue_seq=self._msg_counter,
            payload={"cmd_id": cmd.cmd_id, "override": cmd.kind, "issuer": cmd.issuer})
        self._append(t, "override_issued", {
            "cmd_id": cmd.cmd_id, "uav_id": cmd.uav_id, "override": cmd.kind,
            "issuer": cmd.issuer, "link": link})
        self.pending_overrides[cmd.cmd_id] = cmd
        self.gateways[sess["domain"]].enqueue(msg)
        return msg

    def send_data(self, uav_id: str, size: int, t: float, link: str = "uu") -> ControlMessage:
        sess = self.state["sessions"].get(uav_id)
        if sess is None:
            raise ControlError(f"uav {uav_id} has no active session")
        self._msg_counter += 1
        msg = ControlMessage(
            msg_id=f"msg-{self._msg_counter:06d}", msg_class="data",
            payload_kind="mission_data", link=link, src=sess["domain"], dst=uav_id,
            size=size, enqueue_t=t, enqueue_seq=self._msg_counter)
        self.gateways[sess["domain"]].enqueue(msg)
        return msg

    def _range_ok(self, msg: ControlMessage, t: float) -> bool:
        model = self.link_models[msg.link]
        if model.max_range is None:
            return True
        pos = self.position_oracle(msg.dst)
        if pos is None:
            return True
        gateway = self.domains.by_id[msg.src]
        return gateway.gateway_pos.dist(pos) <= model.max_range

    def process_links(self, now: float, rng: np.random.Generator) -> List[dict]:
        """Drain all gateway queues up to `now`; returns delivery events."""
        delivered: List[dict] = []

        def on_delivery(msg: ControlMessage, at: float) -> None:
            if msg.payload_kind == "override":
                cmd_id = msg.payload["cmd_id"]
                cmd = self.pending_overrides.get(cmd_id)
                already = cmd_id in self.state["delivered_cmds"]
                ev = self._append(at, "override_delivered", {
                    "cmd_id": cmd_id, "uav_id": msg.dst,
                    "override": msg.payload["override"], "duplicate": already})
                if not already and cmd is not None:
                    self.override_latencies.append(at - cmd.issued_at)
                delivered.append(ev)
            else:
                delivered.append({"kind": "data_delivered", "msg_id": msg.msg_id, "t": at})

        def on_failure(msg: ControlMessage, at: float) -> None:
            if msg.payload_kind == "override":
                self._append(at, "override_failed", {
                    "cmd_id": msg.payload["cmd_id"], "uav_id": msg.dst})
                self.raise_alert("undelivered_override", {
                    "cmd_id": msg.payload["cmd_id"], "uav_id": msg.dst,
                    "reason": "link"}, at)

        for domain_id in sorted(self.gateways):
            self.gateways[domain_id].drain(
                now, self.link_models, rng, self._range_ok, on_delivery, on_failure)
        return delivered

    # -- alerts ------------------------------------------------------------

    def raise_alert(self, kind: str, evidence: dict, t: float) -> dict:
        if kind not in ALERT_KINDS:
            raise ControlError(f"unknown alert kind {kind!r}")
        payload = {"alert_kind": kind}
        payload.update({k: evidence[k] for k in sorted(evidence)})
        return self._append(t, "alert", payload)

    def record_zone(self, zone_id: str, zone_kind: str, t: float, created: bool = True) -> dict:
        if created:
            return self._append(t, "zone_created", {"zone_id": zone_id, "zone_kind": zone_kind})
        return self._append(t, "zone_deleted", {"zone_id": zone_id, "zone_kind": zone_kind})

    # -- invariants ---------------------------------------------------------

    def check_safety(self) -> None:
        """Every UAV the management plane believes nominal has an active auth."""
        active_uavs = {a["uav_id"] for a in self.state["authorizations"].values()
                       if a["status"] == "active"}
        for uav_id, mode in self.state["modes"].items():
            if mode == "nominal" and uav_id not in active_uavs:
                raise ControlError(f"safety violation: {uav_id} nominal without active auth")


class ApprovalContext:
    """World view for plan approval: zones plus predicted traffic loads."""

    def __init__(self, zones: Sequence[Zone], grid=None, graph=None,
                 sample_dt: float = 0.5, t0: float = 0.0):
        self.zones = list(zones)
        self.grid = grid
        self.graph = graph
        self.sample_dt = sample_dt
        self.t0 = t0
        self._approved_loads = None
        if graph is not None:
            self._approved_loads = np.zeros((graph.n_links, graph.horizon), dtype=np.int64)

    def _plan_links(self, plan: FlightPlan) -> List[Tuple[int, int]]:
        """(link, step) occupancy of a waypoint plan snapped to the grid graph."""
        if self.graph is None or self.grid is None:
            return []
        g = self.graph
        out = []
        last_step = min(int(math.floor((plan.t_end - self.t0) / g.step_dt)), g.horizon)
        first_step = max(0, int(math.ceil((plan.t_start - self.t0) / g.step_dt)))
        prev = None
        for s in range(first_step, last_step + 1):
            t = self.t0 + s * g.step_dt
            pos = plan.position_at(t)
            node = g.node_index.get(self.grid.cell_of(pos))
            if node is None:
                prev = None
                continue
            if prev is not None and s - 1 < g.horizon:
                link = g.link_of(prev, node)
                if link is None:
                    # Non-adjacent jump (coarse step vs fast plan): charge the
                    # destination cell's hold slot instead.
                    link = g.link_of(node, node)
                if link is not None:
                    out.append((int(link), s - 1))
            prev = node
        return out

    def check(self, plan: FlightPlan) -> List[dict]:
        reasons: List[dict] = []
        t = plan.t_start
        while t <= plan.t_end + 1e-9:
            pos = plan.position_at(min(t, plan.t_end))
            hits = zone_violations(pos, t, self.zones)
            if hits:
                reasons.append({"code": "zone_conflict", "zone_id": hits[0],
                                "t": round(t, 3)})
                break
            t += self.sample_dt
        if self.graph is not None and self._approved_loads is not None:
            for link, step in self._plan_links(plan):
                if self._approved_loads[link, step] + 1 > self.graph.link_capacity[link]:
                    reasons.append({"code": "capacity", "link": int(link), "step": int(step)})
                    break
        return reasons

    def commit(self, plan: FlightPlan) -> None:
        if self.graph is None or self._approved_loads is None:
            return
        for link, step in self._plan_links(plan):
            self._approved_loads[link, step] += 1
