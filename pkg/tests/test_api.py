import json
import time

import pytest
from fastapi.testclient import TestClient

from skysim.api import SimService, create_app
from skysim.engine import SimRun
from skysim.scenario import parse_scenario

from conftest import minimal_scenario_dict


def make_service(duration=6.0, start_thread=False, pace=0.0):
    cfg = parse_scenario(minimal_scenario_dict(duration_s=duration))
    sim = SimRun(cfg)
    service = SimService(sim, pace=pace)
    if start_thread:
        service.start()
    return service


def step(service, n=1):
    with service.lock:
        for _ in range(n):
            service._apply_commands()
            if service.sim.tick_idx < service.sim.n_ticks:
                service.sim.step()


@pytest.fixture
def svc():
    return make_service()


@pytest.fixture
def client(svc):
    return TestClient(create_app(svc))


def test_state_before_first_tick(client):
    snap = client.get("/state").json()
    assert snap["t"] == 0.0
    assert snap["uavs"][0]["id"] == "uav-1"
    assert snap["tracks"] == []


def test_plan_submission_crud(svc, client):
    body = {"uav_id": "uav-1",
            "waypoints": [{"pos": [25, 25, 60], "t": 30.0},
                          {"pos": [25, 125, 60], "t": 55.0}]}
    resp = client.post("/plans", json=body)
    assert resp.status_code == 201
    auth_id = resp.json()["auth_id"]
    step(svc)
    snap = client.get("/state").json()
    assert {"auth_id": auth_id, "uav_id": "uav-1", "status": "submitted"} in \
        snap["pending_authorizations"]
    # approve round trip
    resp = client.post(f"/plans/{auth_id}/approve")
    assert resp.status_code == 202
    step(svc)
    assert svc.sim.control.state["authorizations"][auth_id]["status"] == "active"


def test_plan_approve_after_reject_conflicts(svc, client):
    body = {"uav_id": "uav-1",
            "waypoints": [{"pos": [25, 25, 60], "t": 30.0},
                          {"pos": [25, 125, 60], "t": 55.0}]}
    auth_id = client.post("/plans", json=body).json()["auth_id"]
    step(svc)
    assert client.post(f"/plans/{auth_id}/reject").status_code == 202
    step(svc)
    resp = client.post(f"/plans/{auth_id}/approve")
    assert resp.status_code == 409
    assert resp.json()["code"] == "conflict"


def test_invalid_plan_rejected(client):
    resp = client.post("/plans", json={"uav_id": "uav-1", "waypoints": []})
    assert resp.status_code == 400
    resp = client.post("/plans", json={"uav_id": "nobody",
                                       "waypoints": [{"pos": [0, 0, 1], "t": 0.0},
                                                     {"pos": [0, 9, 1], "t": 9.0}]})
    assert resp.status_code == 404


def test_override_flow_and_idempotence(svc, client):
    resp = client.post("/uavs/uav-1/override", json={"kind": "hover", "cmd_id": "c-77"})
    assert resp.status_code == 202
    dup = client.post("/uavs/uav-1/override", json={"kind": "hover", "cmd_id": "c-77"})
    assert dup.status_code == 202 and dup.json()["duplicate"]
    step(svc, 5)
    snap = client.get("/state").json()
    assert snap["uavs"][0]["mode"] == "hovering"
    issued = [e for e in svc.sim.control.events if e["kind"] == "override_issued"]
    assert len(issued) == 1  # one audit event for one accepted command


def test_override_validation(client):
    assert client.post("/uavs/uav-1/override", json={"kind": "explode"}).status_code == 400
    assert client.post("/uavs/ghost/override", json={"kind": "hover"}).status_code == 404


def test_zone_create_delete(svc, client):
    zone = {"id": "z-api", "kind": "restricted",
            "footprint": [[200, 200], [300, 200], [300, 300], [200, 300]],
            "alt_band": [0, 100]}
    resp = client.post("/zones", json=zone)
    assert resp.status_code == 201
    step(svc, 2)
    assert any(z["id"] == "z-api" for z in client.get("/zones").json())
    assert client.delete("/zones/z-api").status_code == 202
    step(svc, 2)
    assert all(z["id"] != "z-api" for z in client.get("/zones").json())
    assert client.delete("/zones/never-was").status_code == 404


def test_degenerate_zone_rejected(client):
    bad = {"id": "flat", "kind": "restricted",
           "footprint": [[0, 0], [10, 0], [20, 0]], "alt_band": [0, 50]}
    assert client.post("/zones", json=bad).status_code == 400


def test_track_history_endpoint(svc, client):
    step(svc, 31)  # through two sensing cadences
    snap = client.get("/state").json()
    assert snap["tracks"], "no tracks after two cadences"
    tid = snap["tracks"][0]["track_id"]
    hist = client.get(f"/tracks/{tid}/history").json()
    assert hist["track_id"] == tid and len(hist["history"]) >= 1
    assert client.get("/tracks/trk-9999/history").status_code == 404


def test_metrics_endpoint(svc, client):
    step(svc, 16)
    m = client.get("/metrics").json()
    assert "fused" in m and "stations" in m


def test_events_cursor_semantics(svc, client):
    step(svc, 3)
    all_events = svc.events_since(0)
    assert all_events, "expected onboarding events"
    k = all_events[1]["seq"]
    tail = svc.events_since(k)
    assert all(e["seq"] > k for e in tail)
    assert [e["seq"] for e in all_events] == sorted(e["seq"] for e in all_events)


def test_event_stream_end_to_end():
    service = make_service(duration=2.0, start_thread=True)
    client = TestClient(create_app(service))
    try:
        service.done.wait(timeout=30)
        got = []
        with client.stream("GET", "/events?since=0") as resp:
            assert resp.status_code == 200
            for line in resp.iter_lines():
                if line.startswith("data:"):
                    got.append(json.loads(line[5:]))
                if line.startswith("event: end"):
                    break
        seqs = [e["seq"] for e in got if "seq" in e]
        assert seqs == sorted(seqs) and len(seqs) == len(set(seqs))
        # reconnect from a cursor: strictly later events only
        mid = seqs[len(seqs) // 2]
        with client.stream("GET", f"/events?since={mid}") as resp:
            tail = [json.loads(l[5:]) for l in resp.iter_lines()
                    if l.startswith("data:")]
        assert [e["seq"] for e in tail if "seq" in e] == [s for s in seqs if s > mid]
    finally:
        service.stop()


def test_concurrent_clients_identical_sequence():
    service = make_service(duration=2.0, start_thread=True)
    client = TestClient(create_app(service))
    try:
        service.done.wait(timeout=30)
        a = [e["seq"] for e in service.events_since(0)]
        b = [e["seq"] for e in service.events_since(0)]
        assert a == b
    finally:
        service.stop()
