// Pure scene construction: (snapshot, history, view) -> drawable primitives.
// The canvas painter consumes the Scene; tests assert on it directly.

import type { ApiSnapshot, TrackSource, TrackView, ViewState } from "./types.js";

export interface Marker {
  kind: "uav" | "track" | "station";
  id: string;
  x: number;
  y: number;
  source: TrackSource | null;
  label: string;
  badge: string | null; // uav mode or alert marker
  selected: boolean;
}

export interface Tail {
  id: string;
  source: TrackSource;
  points: [number, number][];
}

export interface ZoneShape {
  id: string;
  kind: string;
  vertices: [number, number][];
  altBadge: string;
  active: boolean;
  highlighted: boolean;
}

export interface CoverageCircle {
  id: string;
  x: number;
  y: number;
  radius: number;
  band: string;
}

export interface AlertBadge {
  kind: string;
  seq: number;
  text: string;
}

export interface Scene {
  markers: Marker[];
  tails: Tail[];
  zones: ZoneShape[];
  coverage: CoverageCircle[];
  alertBadges: AlertBadge[];
  stale: boolean;
}

export type TrackHistoryPoint = { t: number; pos: number[] };
export type HistoryLookup = (trackId: string) => TrackHistoryPoint[];

const STATION_SOURCE: Record<string, TrackSource> = {
  sub6: "sub6",
  mmwave: "mmwave",
};

function trackSource(track: TrackView): TrackSource {
  if (track.stations.length === 1) {
    const band = track.stations[0].includes("mmwave") ? "mmwave" : "sub6";
    return STATION_SOURCE[band];
  }
  return "fused";
}

function inAltBand(z: number, view: ViewState): boolean {
  return z >= view.altFilter[0] && z <= view.altFilter[1];
}

export function renderAirspace(snapshot: ApiSnapshot | null, view: ViewState,
                               history: HistoryLookup = () => [],
                               stale = false, highlightZone: string | null = null): Scene {
  const scene: Scene = { markers: [], tails: [], zones: [], coverage: [],
                         alertBadges: [], stale };
  if (!snapshot) {
    return scene;
  }
  if (view.layers.zones) {
    for (const z of snapshot.zones) {
      const active = z.active_window === null
        || (snapshot.t >= z.active_window[0] && snapshot.t < z.active_window[1]);
      scene.zones.push({
        id: z.id,
        kind: z.kind,
        vertices: z.footprint,
        altBadge: `${z.alt_band[0]}-${z.alt_band[1]} m`,
        active,
        highlighted: z.id === highlightZone,
      });
    }
  }
  if (view.layers.stations) {
    for (const s of snapshot.stations) {
      scene.coverage.push({ id: s.id, x: s.pos[0], y: s.pos[1],
                            radius: s.max_range_gate_m, band: s.band });
      scene.markers.push({
        kind: "station", id: s.id, x: s.pos[0], y: s.pos[1], source: null,
        label: `${s.id} (${s.band})`, badge: null,
        selected: false,
      });
    }
  }
  if (view.layers.truth) {
    for (const u of snapshot.uavs) {
      if (!inAltBand(u.pos[2], view)) continue;
      scene.markers.push({
        kind: "uav", id: u.id, x: u.pos[0], y: u.pos[1], source: "truth",
        label: u.id, badge: u.mode,
        selected: view.selection?.kind === "uav" && view.selection.id === u.id,
      });
    }
  }
  for (const track of snapshot.tracks) {
    if (!track.confirmed) continue;
    const source = trackSource(track);
    if (!view.layers[source === "fused" ? "fused" : source]) continue;
    if (!inAltBand(track.pos[2], view)) continue;
    scene.markers.push({
      kind: "track", id: track.track_id, x: track.pos[0], y: track.pos[1],
      source, label: track.uav_id ? `${track.track_id}->${track.uav_id}` : track.track_id,
      badge: null,
      selected: view.selection?.kind === "track" && view.selection.id === track.track_id,
    });
    const hist = history(track.track_id);
    if (hist.length > 1) {
      const tail = hist.slice(-view.tailLength)
        .map((h) => [h.pos[0], h.pos[1]] as [number, number]);
      scene.tails.push({ id: track.track_id, source, points: tail });
    }
  }
  if (view.layers.alerts) {
    for (const ev of snapshot.recent_alerts) {
      const p = ev.payload as Record<string, unknown>;
      scene.alertBadges.push({
        kind: String(p.alert_kind ?? "alert"),
        seq: ev.seq,
        text: `${p.alert_kind} @ t=${ev.t.toFixed(1)}`,
      });
    }
  }
  return scene;
}
