// Wire types mirroring the gateway's JSON payloads.

export interface UavView {
  id: string;
  pos: [number, number, number];
  vel: [number, number, number];
  mode: string;
  registered: boolean;
  session: string | null;
}

export interface TrackView {
  track_id: string;
  uav_id: string | null;
  t: number;
  pos: [number, number, number];
  vel: [number, number, number];
  cov_diag: [number, number, number];
  stations: string[];
  confirmed: boolean;
}

export interface ZoneView {
  id: string;
  kind: "restricted" | "temporary" | "operational";
  footprint: [number, number][];
  alt_band: [number, number];
  active_window: [number, number] | null;
}

export interface StationView {
  id: string;
  band: "sub6" | "mmwave";
  pos: [number, number, number];
  max_range_gate_m: number;
}

export interface PendingAuthorization {
  auth_id: string;
  uav_id: string;
  status: string;
}

export interface AuditEvent {
  seq: number;
  t: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface ApiSnapshot {
  t: number;
  uavs: UavView[];
  tracks: TrackView[];
  zones: ZoneView[];
  stations: StationView[];
  pending_authorizations: PendingAuthorization[];
  recent_alerts: AuditEvent[];
  done: boolean;
}

export type TrackSource = "truth" | "sub6" | "mmwave" | "fused";

export interface LayerToggles {
  truth: boolean;
  sub6: boolean;
  mmwave: boolean;
  fused: boolean;
  zones: boolean;
  stations: boolean;
  alerts: boolean;
}

export interface ViewState {
  center: [number, number];
  metersPerPixel: number;
  altFilter: [number, number];
  layers: LayerToggles;
  selection: { kind: "uav" | "track" | "zone"; id: string } | null;
  eventCursor: number;
  tailLength: number;
}

export function defaultView(): ViewState {
  return {
    center: [150, 75],
    metersPerPixel: 1.0,
    altFilter: [0, 500],
    layers: { truth: true, sub6: true, mmwave: true, fused: true, zones: true, stations: true, alerts: true },
    selection: null,
    eventCursor: 0,
    tailLength: 20,
  };
}
