// Canvas painter for a Scene; geometry logic lives in scene.ts.

import type { Scene } from "./scene.js";
import type { ViewState } from "./types.js";

const SOURCE_COLORS: Record<string, string> = {
  truth: "#222222",
  sub6: "#1f77b4",
  mmwave: "#d62728",
  fused: "#2ca02c",
};

const ZONE_COLORS: Record<string, string> = {
  restricted: "rgba(214, 39, 40, 0.25)",
  temporary: "rgba(255, 152, 0, 0.25)",
  operational: "rgba(46, 125, 50, 0.12)",
};

export function paint(canvas: HTMLCanvasElement, scene: Scene, view: ViewState): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  const toPx = (x: number, y: number): [number, number] => [
    width / 2 + (x - view.center[0]) / view.metersPerPixel,
    height / 2 - (y - view.center[1]) / view.metersPerPixel,
  ];

  for (const z of scene.zones) {
    ctx.beginPath();
    z.vertices.forEach(([x, y], i) => {
      const [px, py] = toPx(x, y);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.closePath();
    ctx.fillStyle = z.active ? (ZONE_COLORS[z.kind] ?? "rgba(0,0,0,0.1)")
      : "rgba(120,120,120,0.08)";
    ctx.fill();
    ctx.strokeStyle = z.highlighted ? "#ff1744" : "#888";
    ctx.lineWidth = z.highlighted ? 3 : 1;
    ctx.stroke();
    const [lx, ly] = toPx(z.vertices[0][0], z.vertices[0][1]);
    ctx.fillStyle = "#444";
    ctx.font = "11px sans-serif";
    ctx.fillText(`${z.id} [${z.altBadge}]`, lx + 4, ly - 4);
  }

  for (const c of scene.coverage) {
    const [px, py] = toPx(c.x, c.y);
    ctx.beginPath();
    ctx.arc(px, py, c.radius / view.metersPerPixel, 0, Math.PI * 2);
    ctx.strokeStyle = c.band === "sub6" ? "rgba(31,119,180,0.35)" : "rgba(214,39,40,0.35)";
    ctx.setLineDash([6, 6]);
    ctx.stroke();
    ctx.setLineDash([]);
  }

  for (const tail of scene.tails) {
    ctx.beginPath();
    tail.points.forEach(([x, y], i) => {
      const [px, py] = toPx(x, y);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.strokeStyle = SOURCE_COLORS[tail.source];
    ctx.lineWidth = 1.5;
    ctx.globalAlpha = 0.6;
    ctx.stroke();
    ctx.globalAlpha = 1.0;
  }

  for (const m of scene.markers) {
    const [px, py] = toPx(m.x, m.y);
    ctx.beginPath();
    if (m.kind === "station") {
      ctx.rect(px - 5, py - 5, 10, 10);
      ctx.fillStyle = "#555";
    } else {
      ctx.arc(px, py, m.kind === "uav" ? 6 : 4, 0, Math.PI * 2);
      ctx.fillStyle = SOURCE_COLORS[m.source ?? "truth"];
    }
    ctx.fill();
    if (m.selected) {
      ctx.beginPath();
      ctx.arc(px, py, 10, 0, Math.PI * 2);
      ctx.strokeStyle = "#000";
      ctx.lineWidth = 2;
      ctx.stroke();
    }
    ctx.fillStyle = "#333";
    ctx.font = "10px sans-serif";
    ctx.fillText(m.badge ? `${m.label} (${m.badge})` : m.label, px + 8, py + 3);
  }

  if (scene.stale) {
    ctx.fillStyle = "rgba(255, 193, 7, 0.9)";
    ctx.fillRect(0, 0, width, 22);
    ctx.fillStyle = "#000";
    ctx.font = "12px sans-serif";
    ctx.fillText("STALE SNAPSHOT - waiting for server", 8, 15);
  }
}
