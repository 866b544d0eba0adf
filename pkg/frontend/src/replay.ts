// Trace replay: turns the engine's per-tick trace JSONL into the same
// snapshot shape the live view consumes, plus per-station continuity
// analysis (which cadences each station contributed to the fused track).

import type { ApiSnapshot, TrackView, UavView } from "./types.js";

export interface TraceTick {
  t: number;
  uavs: { id: string; pos: [number, number, number]; mode: string; registered: boolean }[];
  tracks?: {
    track_id: string;
    uav_id: string | null;
    pos: [number, number, number];
    stations: string[];
    confirmed: boolean;
  }[];
  station_fixes?: Record<string, number>;
}

export function parseTrace(jsonl: string): TraceTick[] {
  return jsonl
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line) => JSON.parse(line) as TraceTick);
}

/** Ticks that carried sensing output (one per fusion cadence). */
export function cadenceTicks(ticks: TraceTick[]): TraceTick[] {
  return ticks.filter((tk) => tk.tracks !== undefined);
}

export function snapshotAt(ticks: TraceTick[], index: number): ApiSnapshot {
  const tk = ticks[index];
  const uavs: UavView[] = tk.uavs.map((u) => ({
    id: u.id, pos: u.pos, vel: [0, 0, 0], mode: u.mode,
    registered: u.registered, session: null,
  }));
  const tracks: TrackView[] = (tk.tracks ?? []).map((tr) => ({
    track_id: tr.track_id, uav_id: tr.uav_id, t: tk.t, pos: tr.pos,
    vel: [0, 0, 0], cov_diag: [0, 0, 0], stations: tr.stations,
    confirmed: tr.confirmed,
  }));
  return { t: tk.t, uavs, tracks, zones: [], stations: [],
           pending_authorizations: [], recent_alerts: [], done: false };
}

export interface ContinuityReport {
  cadences: number;
  fusedPresent: number;
  fusedLongestGap: number;
  stationLongestGap: Record<string, number>;
  stationWindows: Record<string, { absentFrom: number; absentTo: number } | null>;
}

function longestGap(presence: boolean[]): number {
  let first = presence.indexOf(true);
  let last = presence.lastIndexOf(true);
  if (first < 0) return presence.length;
  let gap = 0;
  let run = 0;
  for (let i = first; i <= last; i++) {
    if (presence[i]) {
      gap = Math.max(gap, run);
      run = 0;
    } else {
      run += 1;
    }
  }
  return gap;
}

/**
 * Per-cadence presence of the fused track and of each station's
 * contribution to it; the occlusion windows show up as interior gaps in the
 * per-station series while the fused series stays unbroken.
 */
export function continuity(ticks: TraceTick[]): ContinuityReport {
  const cadence = cadenceTicks(ticks);
  const stations = new Set<string>();
  for (const tk of cadence) {
    for (const key of Object.keys(tk.station_fixes ?? {})) stations.add(key);
  }
  const fusedPresence: boolean[] = [];
  const perStation = new Map<string, boolean[]>([...stations].map((s) => [s, []]));
  for (const tk of cadence) {
    const confirmed = (tk.tracks ?? []).filter((tr) => tr.confirmed);
    fusedPresence.push(confirmed.length > 0);
    for (const s of stations) {
      const contributed = confirmed.some((tr) => tr.stations.includes(s));
      perStation.get(s)!.push(contributed);
    }
  }
  const report: ContinuityReport = {
    cadences: cadence.length,
    fusedPresent: fusedPresence.filter(Boolean).length,
    fusedLongestGap: longestGap(fusedPresence),
    stationLongestGap: {},
    stationWindows: {},
  };
  for (const [sid, presence] of perStation) {
    report.stationLongestGap[sid] = longestGap(presence);
    const first = presence.indexOf(true);
    const last = presence.lastIndexOf(true);
    let from = -1;
    let win: { absentFrom: number; absentTo: number } | null = null;
    for (let i = first; i >= 0 && i <= last; i++) {
      if (!presence[i] && from < 0) from = i;
      if (presence[i] && from >= 0) {
        if (!win || i - from > win.absentTo - win.absentFrom) {
          win = { absentFrom: from, absentTo: i - 1 };
        }
        from = -1;
      }
    }
    report.stationWindows[sid] = win;
  }
  return report;
}
