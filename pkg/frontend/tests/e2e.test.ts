// End-to-end against a live `serve` instance: approve, reject, zone-create,
// and all three override kinds round-trip with matching audit events.

import { spawn, ChildProcess } from "node:child_process";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ConsoleStore } from "../src/store.js";
import type { AuditEvent } from "../src/types.js";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;
const HERE = dirname(fileURLToPath(import.meta.url));
const REPO = join(HERE, "..", "..");

let server: ChildProcess;
const api = new ApiClient(BASE);
const store = new ConsoleStore();
const received: AuditEvent[] = [];
let streamDone: Promise<void>;
const abort = new AbortController();

async function waitFor<T>(probe: () => T | null | undefined | false,
                          what: string, timeoutMs = 30_000): Promise<T> {
  const t0 = Date.now();
  for (;;) {
    const got = probe();
    if (got) return got;
    if (Date.now() - t0 > timeoutMs) throw new Error(`timed out waiting for ${what}`);
    await new Promise((r) => setTimeout(r, 150));
  }
}

beforeAll(async () => {
  server = spawn("python3", ["-m", "skysim.cli", "serve", "--scenario", "case2",
                             "--port", String(PORT), "--pace", "2.0",
                             "--duration", "600"],
                 { cwd: REPO, stdio: "ignore" });
  await waitFor(() => {
    try { return true; } finally { /* probe below */ }
  }, "spawn");
  // wait for the HTTP endpoint
  const t0 = Date.now();
  for (;;) {
    try {
      await api.getState();
      break;
    } catch {
      if (Date.now() - t0 > 60_000) throw new Error("server never came up");
      await new Promise((r) => setTimeout(r, 500));
    }
  }
  streamDone = api.streamEvents(0, (ev) => {
    received.push(ev);
    store.applyEvent(ev);
  }, abort.signal).catch(() => undefined);
}, 90_000);

afterAll(async () => {
  abort.abort();
  server?.kill("SIGTERM");
  await streamDone?.catch(() => undefined);
});

describe("operator console against a live gateway", () => {
  it("approves a plan and sees the status flip via events", async () => {
    const ack = await api.submitPlan("uav-1", [
      { pos: [0, 250, 60], t: 400.0 },
      { pos: [0, 150, 60], t: 430.0 },
    ]);
    expect(ack.status).toBe("submitted");
    await waitFor(() => store.plans.get(ack.auth_id), "plan_submitted event");
    await api.approvePlan(ack.auth_id);
    await waitFor(() => store.plans.get(ack.auth_id)?.status === "active",
                  "approved+activated");
    const kinds = received.filter((e) =>
      (e.payload as any).auth_id === ack.auth_id).map((e) => e.kind);
    expect(kinds).toContain("plan_approved");
    expect(kinds).toContain("plan_activated");
  });

  it("rejects a plan and surfaces 409 on a stale approve", async () => {
    const ack = await api.submitPlan("uav-1", [
      { pos: [0, 250, 60], t: 500.0 },
      { pos: [0, 200, 60], t: 515.0 },
    ]);
    await waitFor(() => store.plans.get(ack.auth_id), "submission event");
    await api.rejectPlan(ack.auth_id);
    await waitFor(() => store.plans.get(ack.auth_id)?.status === "rejected", "rejection");
    // a later approve of the same plan is a stale action -> 409 conflict
    await expect(api.approvePlan(ack.auth_id)).rejects.toMatchObject({ status: 409 });
  });

  it("creates a zone and finds it in the snapshot plus the audit log", async () => {
    const ack = await api.createZone({
      id: "console-zone",
      kind: "restricted",
      footprint: [[-140, -140], [-80, -140], [-80, -80], [-140, -80]],
      alt_band: [0, 40],
    });
    expect(ack.accepted).toBe(true);
    await waitFor(() => received.find((e) => e.kind === "zone_created"
      && (e.payload as any).zone_id === "console-zone"), "zone_created event");
    const zones = await api.getZones();
    expect(zones.map((z) => z.id)).toContain("console-zone");
  });

  it("round-trips all three override kinds with matching audit events", async () => {
    for (const kind of ["hover", "return_home", "land"] as const) {
      const cmdId = store.overrideCmdId("uav-1", kind, Date.now());
      const ack = await api.override("uav-1", kind, cmdId);
      expect(ack.cmd_id).toBe(cmdId);
      await waitFor(() => store.overrides.get(cmdId)?.state === "delivered",
                    `${kind} delivery`);
      const issued = received.filter((e) => e.kind === "override_issued"
        && (e.payload as any).cmd_id === cmdId);
      const delivered = received.filter((e) => e.kind === "override_delivered"
        && (e.payload as any).cmd_id === cmdId);
      expect(issued).toHaveLength(1);
      expect(delivered).toHaveLength(1);
      expect((delivered[0].payload as any).override).toBe(kind);
    }
    const snap = await api.getState();
    expect(["landing", "landed"]).toContain(snap.uavs[0].mode);
  });

  it("keeps the event sequence strictly increasing with no duplicates", () => {
    const seqs = received.map((e) => e.seq);
    const sorted = [...seqs].sort((a, b) => a - b);
    expect(seqs).toEqual(sorted);
    expect(new Set(seqs).size).toBe(seqs.length);
  });
});
