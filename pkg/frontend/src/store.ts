// Console state: a pure fold over (snapshot, audit-event prefix, view state).
// Replaying the same events against the same snapshots reproduces the
// display exactly; nothing here mutates server state.

import type { ApiSnapshot, AuditEvent, ViewState } from "./types.js";
import { defaultView } from "./types.js";

export type DeliveryState = "pending" | "delivered" | "undelivered";

export interface OverrideStatus {
  cmdId: string;
  uavId: string;
  kind: string;
  state: DeliveryState;
}

export interface PlanStatus {
  authId: string;
  uavId: string;
  status: string; // submitted | approved | rejected | active | completed | aborted
  reasons?: unknown[];
}

export class ConsoleStore {
  snapshot: ApiSnapshot | null = null;
  snapshotAt = 0; // wall-clock ms of the last snapshot
  view: ViewState = defaultView();
  events: AuditEvent[] = [];
  overrides = new Map<string, OverrideStatus>();
  plans = new Map<string, PlanStatus>();
  alerts: AuditEvent[] = [];
  issuedCmdIds = new Set<string>(); // client-side idempotence for double clicks

  applySnapshot(snap: ApiSnapshot, nowMs: number): void {
    this.snapshot = snap;
    this.snapshotAt = nowMs;
    for (const p of snap.pending_authorizations) {
      if (!this.plans.has(p.auth_id)) {
        this.plans.set(p.auth_id, { authId: p.auth_id, uavId: p.uav_id, status: p.status });
      }
    }
  }

  /** Stale when the snapshot is older than two polling periods. */
  isStale(nowMs: number, pollMs = 2000): boolean {
    return this.snapshot === null || nowMs - this.snapshotAt > 2 * pollMs;
  }

  applyEvent(ev: AuditEvent): void {
    if (ev.seq <= this.view.eventCursor) {
      return; // cursor is monotone; duplicates and replays are dropped
    }
    this.view.eventCursor = ev.seq;
    this.events.push(ev);
    const p = ev.payload as Record<string, any>;
    switch (ev.kind) {
      case "plan_submitted":
        this.plans.set(p.auth_id, { authId: p.auth_id, uavId: p.uav_id, status: "submitted" });
        break;
      case "plan_approved":
        this.setPlanStatus(p.auth_id, "approved");
        break;
      case "plan_rejected":
        this.setPlanStatus(p.auth_id, "rejected", p.reasons);
        break;
      case "plan_activated":
        this.setPlanStatus(p.auth_id, "active");
        break;
      case "plan_completed":
        this.setPlanStatus(p.auth_id, "completed");
        break;
      case "plan_aborted":
        this.setPlanStatus(p.auth_id, "aborted");
        break;
      case "override_issued":
        this.overrides.set(p.cmd_id, {
          cmdId: p.cmd_id, uavId: p.uav_id, kind: p.override, state: "pending",
        });
        break;
      case "override_delivered": {
        const st = this.overrides.get(p.cmd_id);
        if (st) st.state = "delivered";
        break;
      }
      case "override_failed": {
        const st = this.overrides.get(p.cmd_id);
        if (st) st.state = "undelivered";
        break;
      }
      case "alert":
        this.alerts.push(ev);
        break;
      default:
        break;
    }
  }

  private setPlanStatus(authId: string, status: string, reasons?: unknown[]): void {
    const plan = this.plans.get(authId);
    if (plan) {
      plan.status = status;
      if (reasons) plan.reasons = reasons;
    } else {
      this.plans.set(authId, { authId, uavId: "?", status, reasons });
    }
  }

  approvalQueue(): PlanStatus[] {
    return [...this.plans.values()]
      .filter((p) => p.status === "submitted")
      .sort((a, b) => a.authId.localeCompare(b.authId));
  }

  /** Zone id referenced by a rejection's reasons, for map highlighting. */
  rejectedZoneFor(authId: string): string | null {
    const plan = this.plans.get(authId);
    const reason = (plan?.reasons ?? []).find(
      (r: any) => r && r.code === "zone_conflict") as any;
    return reason ? (reason.zone_id as string) : null;
  }

  /** Next command id for an override click; double clicks reuse the same id. */
  overrideCmdId(uavId: string, kind: string, epoch: number): string {
    const id = `ui-${uavId}-${kind}-${epoch}`;
    this.issuedCmdIds.add(id);
    return id;
  }
}

/** Client-side zone validation: at least 3 vertices and non-degenerate area. */
export function validateZonePolygon(vertices: [number, number][]): string | null {
  if (vertices.length < 3) {
    return "polygon needs at least 3 vertices";
  }
  let area = 0;
  for (let i = 0; i < vertices.length; i++) {
    const [x0, y0] = vertices[i];
    const [x1, y1] = vertices[(i + 1) % vertices.length];
    area += x0 * y1 - x1 * y0;
  }
  if (Math.abs(area / 2) < 1e-9) {
    return "polygon is degenerate (zero area)";
  }
  return null;
}
