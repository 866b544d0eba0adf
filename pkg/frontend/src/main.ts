// Browser entry: wires the store, API client, SSE stream, panels, and the
// canvas painter. Event-stream-first with a 2 s snapshot polling fallback.

import { ApiClient, GatewayError } from "./api.js";
import { renderAirspace, TrackHistoryPoint } from "./scene.js";
import { ConsoleStore, validateZonePolygon } from "./store.js";
import { paint } from "./paint.js";
import { parseTrace, cadenceTicks, snapshotAt } from "./replay.js";

const POLL_MS = 2000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export function startConsole(base: string): void {
  const api = new ApiClient(base);
  const store = new ConsoleStore();
  const canvas = el<HTMLCanvasElement>("map");
  const histories = new Map<string, TrackHistoryPoint[]>();
  let highlightZone: string | null = null;
  let drawnPolygon: [number, number][] = [];

  function redraw(): void {
    const scene = renderAirspace(
      store.snapshot, store.view,
      (tid) => histories.get(tid) ?? [],
      store.isStale(Date.now(), POLL_MS), highlightZone);
    paint(canvas, scene, store.view);
    renderPanels();
  }

  function renderPanels(): void {
    const queue = el<HTMLDivElement>("approval-queue");
    queue.innerHTML = "";
    for (const plan of store.approvalQueue()) {
      const row = document.createElement("div");
      row.className = "plan-row";
      row.textContent = `${plan.authId} (${plan.uavId}) `;
      const ok = document.createElement("button");
      ok.textContent = "approve";
      ok.onclick = () => api.approvePlan(plan.authId).catch(handle409);
      const no = document.createElement("button");
      no.textContent = "reject";
      no.onclick = () => api.rejectPlan(plan.authId).catch(handle409);
      row.append(ok, no);
      queue.append(row);
    }
    const feed = el<HTMLUListElement>("event-feed");
    feed.innerHTML = "";
    for (const ev of store.events.slice(-25).reverse()) {
      const li = document.createElement("li");
      li.textContent = `#${ev.seq} t=${ev.t.toFixed(1)} ${ev.kind}`;
      feed.append(li);
    }
    const ovr = el<HTMLDivElement>("override-state");
    ovr.innerHTML = "";
    for (const st of [...store.overrides.values()].slice(-8)) {
      const div = document.createElement("div");
      div.textContent = `${st.cmdId} ${st.kind} -> ${st.uavId}: ${st.state}`;
      ovr.append(div);
    }
  }

  function handle409(err: unknown): void {
    if (err instanceof GatewayError && err.status === 409) {
      void refresh(); // stale action: reload the queue
    } else {
      console.error(err);
    }
  }

  async function refresh(): Promise<void> {
    const snap = await api.getState();
    store.applySnapshot(snap, Date.now());
    for (const tr of snap.tracks) {
      const hist = histories.get(tr.track_id) ?? [];
      if (!hist.length || hist[hist.length - 1].t < tr.t) {
        hist.push({ t: tr.t, pos: [...tr.pos] });
        histories.set(tr.track_id, hist.slice(-200));
      }
    }
    redraw();
  }

  // override panel
  for (const kind of ["hover", "return_home", "land"] as const) {
    el<HTMLButtonElement>(`ovr-${kind}`).onclick = () => {
      const sel = store.view.selection;
      if (!sel || sel.kind !== "uav") return;
      const cmdId = store.overrideCmdId(sel.id, kind, Math.floor(Date.now() / 1000));
      api.override(sel.id, kind, cmdId).catch((err) => {
        el<HTMLDivElement>("override-state").textContent =
          `escalation: ${err instanceof Error ? err.message : err}`;
      });
    };
  }

  // zone editor: click to add vertices, button to submit
  canvas.addEventListener("click", (evt) => {
    if (!el<HTMLInputElement>("zone-draw").checked) {
      selectNearest(evt);
      return;
    }
    const rect = canvas.getBoundingClientRect();
    const x = store.view.center[0]
      + (evt.clientX - rect.left - canvas.width / 2) * store.view.metersPerPixel;
    const y = store.view.center[1]
      - (evt.clientY - rect.top - canvas.height / 2) * store.view.metersPerPixel;
    drawnPolygon.push([x, y]);
  });
  el<HTMLButtonElement>("zone-submit").onclick = () => {
    const problem = validateZonePolygon(drawnPolygon);
    if (problem) {
      el<HTMLDivElement>("zone-status").textContent = problem;
      return;
    }
    void api.createZone({
      kind: "restricted",
      footprint: drawnPolygon,
      alt_band: [0, 150],
    }).then((ack) => {
      el<HTMLDivElement>("zone-status").textContent = `created ${ack.zone_id}`;
      drawnPolygon = [];
    });
  };

  function selectNearest(evt: MouseEvent): void {
    if (!store.snapshot) return;
    const rect = canvas.getBoundingClientRect();
    const x = store.view.center[0]
      + (evt.clientX - rect.left - canvas.width / 2) * store.view.metersPerPixel;
    const y = store.view.center[1]
      - (evt.clientY - rect.top - canvas.height / 2) * store.view.metersPerPixel;
    let best: { kind: "uav" | "track"; id: string } | null = null;
    let bestD = 25 * store.view.metersPerPixel;
    for (const u of store.snapshot.uavs) {
      const d = Math.hypot(u.pos[0] - x, u.pos[1] - y);
      if (d < bestD) { bestD = d; best = { kind: "uav", id: u.id }; }
    }
    for (const tr of store.snapshot.tracks) {
      const d = Math.hypot(tr.pos[0] - x, tr.pos[1] - y);
      if (d < bestD) { bestD = d; best = { kind: "track", id: tr.track_id }; }
    }
    store.view.selection = best;
    redraw();
  }

  // altitude filter slider
  el<HTMLInputElement>("alt-max").oninput = (e) => {
    store.view.altFilter = [0, Number((e.target as HTMLInputElement).value)];
    redraw();
  };

  // layer toggles
  for (const layer of ["truth", "sub6", "mmwave", "fused", "zones", "stations", "alerts"] as const) {
    const box = document.getElementById(`layer-${layer}`) as HTMLInputElement | null;
    if (box) {
      box.onchange = () => {
        store.view.layers[layer] = box.checked;
        redraw();
      };
    }
  }

  // replay mode: load a trace file instead of the live stream
  el<HTMLInputElement>("trace-file").onchange = async (e) => {
    const file = (e.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const ticks = parseTrace(await file.text());
    const cadences = cadenceTicks(ticks);
    const slider = el<HTMLInputElement>("replay-pos");
    slider.max = String(cadences.length - 1);
    slider.oninput = () => {
      const snap = snapshotAt(cadences, Number(slider.value));
      store.applySnapshot(snap, Date.now());
      redraw();
    };
  };

  // live: stream events, poll snapshots as fallback
  void (async () => {
    for (;;) {
      try {
        await api.streamEvents(store.view.eventCursor, (ev) => {
          store.applyEvent(ev);
          renderPanels();
        });
        break; // stream ended cleanly (sim done)
      } catch {
        await new Promise((r) => setTimeout(r, POLL_MS));
      }
    }
  })();
  setInterval(() => void refresh().catch(() => redraw()), POLL_MS);
  void refresh();
}
