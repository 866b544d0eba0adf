import { describe, expect, it } from "vitest";

import { ConsoleStore, validateZonePolygon } from "../src/store.js";
import type { ApiSnapshot, AuditEvent } from "../src/types.js";

function ev(seq: number, kind: string, payload: Record<string, unknown> = {}): AuditEvent {
  return { seq, t: seq * 0.1, kind, payload };
}

function emptySnapshot(t = 0): ApiSnapshot {
  return { t, uavs: [], tracks: [], zones: [], stations: [],
           pending_authorizations: [], recent_alerts: [], done: false };
}

describe("event cursor", () => {
  it("is monotone and drops replayed events", () => {
    const store = new ConsoleStore();
    store.applyEvent(ev(1, "plan_submitted", { auth_id: "a1", uav_id: "u1" }));
    store.applyEvent(ev(3, "plan_approved", { auth_id: "a1" }));
    store.applyEvent(ev(2, "plan_rejected", { auth_id: "a1" }));  // stale replay
    expect(store.view.eventCursor).toBe(3);
    expect(store.plans.get("a1")!.status).toBe("approved");
    expect(store.events.length).toBe(2);
  });

  it("replaying the same prefix reproduces the same state", () => {
    const events = [
      ev(1, "plan_submitted", { auth_id: "a1", uav_id: "u1" }),
      ev(2, "override_issued", { cmd_id: "c1", uav_id: "u1", override: "hover" }),
      ev(3, "override_delivered", { cmd_id: "c1", uav_id: "u1", override: "hover" }),
      ev(4, "plan_rejected", { auth_id: "a1", reasons: [{ code: "zone_conflict", zone_id: "z9" }] }),
    ];
    const a = new ConsoleStore();
    const b = new ConsoleStore();
    for (const e of events) a.applyEvent(e);
    for (const e of events) b.applyEvent(e);
    expect(a.plans.get("a1")).toEqual(b.plans.get("a1"));
    expect(a.overrides.get("c1")).toEqual(b.overrides.get("c1"));
    expect(a.view.eventCursor).toBe(b.view.eventCursor);
  });
});

describe("approval queue", () => {
  it("moves entries out on decision events", () => {
    const store = new ConsoleStore();
    store.applyEvent(ev(1, "plan_submitted", { auth_id: "a1", uav_id: "u1" }));
    store.applyEvent(ev(2, "plan_submitted", { auth_id: "a2", uav_id: "u2" }));
    expect(store.approvalQueue().map((p) => p.authId)).toEqual(["a1", "a2"]);
    store.applyEvent(ev(3, "plan_approved", { auth_id: "a1" }));
    expect(store.approvalQueue().map((p) => p.authId)).toEqual(["a2"]);
    store.applyEvent(ev(4, "plan_rejected", {
      auth_id: "a2", reasons: [{ code: "zone_conflict", zone_id: "zz" }] }));
    expect(store.approvalQueue()).toEqual([]);
    expect(store.rejectedZoneFor("a2")).toBe("zz");
  });

  it("seeds the queue from a snapshot's pending authorizations", () => {
    const store = new ConsoleStore();
    const snap = emptySnapshot();
    snap.pending_authorizations = [{ auth_id: "a5", uav_id: "u1", status: "submitted" }];
    store.applySnapshot(snap, 1000);
    expect(store.approvalQueue().map((p) => p.authId)).toEqual(["a5"]);
  });
});

describe("override tracking", () => {
  it("tracks pending -> delivered and undelivered", () => {
    const store = new ConsoleStore();
    store.applyEvent(ev(1, "override_issued", { cmd_id: "c1", uav_id: "u1", override: "land" }));
    expect(store.overrides.get("c1")!.state).toBe("pending");
    store.applyEvent(ev(2, "override_delivered", { cmd_id: "c1", uav_id: "u1", override: "land" }));
    expect(store.overrides.get("c1")!.state).toBe("delivered");
    store.applyEvent(ev(3, "override_issued", { cmd_id: "c2", uav_id: "u1", override: "hover" }));
    store.applyEvent(ev(4, "override_failed", { cmd_id: "c2", uav_id: "u1" }));
    expect(store.overrides.get("c2")!.state).toBe("undelivered");
  });

  it("reuses one cmd id for a double click in the same epoch", () => {
    const store = new ConsoleStore();
    const first = store.overrideCmdId("u1", "hover", 1234);
    const second = store.overrideCmdId("u1", "hover", 1234);
    expect(first).toBe(second);
    expect(store.issuedCmdIds.size).toBe(1);
  });
});

describe("staleness", () => {
  it("flags snapshots older than two poll periods", () => {
    const store = new ConsoleStore();
    expect(store.isStale(0)).toBe(true);
    store.applySnapshot(emptySnapshot(), 1000);
    expect(store.isStale(2000)).toBe(false);
    expect(store.isStale(5100)).toBe(true);
  });
});

describe("zone polygon validation", () => {
  it("rejects short and degenerate polygons client-side", () => {
    expect(validateZonePolygon([[0, 0], [1, 1]])).toMatch(/3 vertices/);
    expect(validateZonePolygon([[0, 0], [1, 1], [2, 2]])).toMatch(/degenerate/);
    expect(validateZonePolygon([[0, 0], [10, 0], [10, 10]])).toBeNull();
  });
});
