// Thin fetch client for the gateway; every mutation returns the server's
// acknowledgment body, effects arrive on the event stream.

import type { ApiSnapshot, AuditEvent, ZoneView } from "./types.js";

export interface ApiError {
  code: string;
  message: string;
  details?: Record<string, unknown>;
}

export class GatewayError extends Error {
  constructor(public status: number, public body: ApiError) {
    super(`${body.code}: ${body.message}`);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  const body = await resp.json();
  if (!resp.ok) {
    throw new GatewayError(resp.status, body as ApiError);
  }
  return body as T;
}

export class ApiClient {
  constructor(public base: string) {}

  getState(): Promise<ApiSnapshot> {
    return request(`${this.base}/state`);
  }

  getMetrics(): Promise<Record<string, unknown>> {
    return request(`${this.base}/metrics`);
  }

  getZones(): Promise<ZoneView[]> {
    return request(`${this.base}/zones`);
  }

  trackHistory(trackId: string): Promise<{ track_id: string; history: unknown[] }> {
    return request(`${this.base}/tracks/${trackId}/history`);
  }

  submitPlan(uavId: string, waypoints: { pos: [number, number, number]; t: number }[],
             cruiseSpeed = 5.0): Promise<{ auth_id: string; status: string }> {
    return request(`${this.base}/plans`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ uav_id: uavId, waypoints, cruise_speed_mps: cruiseSpeed }),
    });
  }

  approvePlan(authId: string): Promise<{ auth_id: string; accepted: boolean }> {
    return request(`${this.base}/plans/${authId}/approve`, { method: "POST" });
  }

  rejectPlan(authId: string): Promise<{ auth_id: string; accepted: boolean }> {
    return request(`${this.base}/plans/${authId}/reject`, { method: "POST" });
  }

  override(uavId: string, kind: "hover" | "return_home" | "land",
           cmdId?: string): Promise<{ cmd_id: string; accepted: boolean; duplicate: boolean }> {
    const body: Record<string, unknown> = { kind };
    if (cmdId) body.cmd_id = cmdId;
    return request(`${this.base}/uavs/${uavId}/override`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createZone(zone: Partial<ZoneView>): Promise<{ zone_id: string; accepted: boolean }> {
    return request(`${this.base}/zones`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(zone),
    });
  }

  deleteZone(zoneId: string): Promise<{ zone_id: string; accepted: boolean }> {
    return request(`${this.base}/zones/${zoneId}`, { method: "DELETE" });
  }

  /**
   * Consume the SSE event stream from a cursor; resolves when the stream
   * ends or `stop()` is signalled. Works in browsers and Node 20 (plain
   * fetch streaming, no EventSource dependency).
   */
  async streamEvents(since: number, onEvent: (ev: AuditEvent) => void,
                     signal?: AbortSignal): Promise<void> {
    const resp = await fetch(`${this.base}/events?since=${since}`, { signal });
    if (!resp.ok || !resp.body) {
      throw new GatewayError(resp.status, await resp.json());
    }
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return;
      buffer += decoder.decode(value, { stream: true });
      let idx: number;
      while ((idx = buffer.indexOf("\n\n")) >= 0) {
        const block = buffer.slice(0, idx);
        buffer = buffer.slice(idx + 2);
        let isEnd = false;
        let data = "";
        for (const line of block.split("\n")) {
          if (line.startsWith("event: end")) isEnd = true;
          if (line.startsWith("data:")) data = line.slice(5).trim();
        }
        if (isEnd) return;
        if (data) {
          const ev = JSON.parse(data) as AuditEvent;
          if (typeof ev.seq === "number") onEvent(ev);
        }
      }
    }
  }
}
