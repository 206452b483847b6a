// Canvas renderer: orthographic top-down view by default, with a simple
// orbit projection as the alternate view. A capsule in orthographic
// projection is exactly a thick round-capped line.

import type { SceneGraph } from "./scene";
import type { Vec3 } from "./wire";

export interface Camera {
  mode: "top" | "orbit";
  yaw: number; // rad, orbit only
  pitch: number; // rad, orbit only
  scale: number; // px per meter
  centerX: number; // px
  centerY: number; // px
}

export function defaultCamera(width: number, height: number): Camera {
  return { mode: "top", yaw: -0.7, pitch: 0.9, scale: Math.min(width, height) / 4.5, centerX: width * 0.38, centerY: height / 2 };
}

export function project(p: Vec3, cam: Camera): [number, number] {
  if (cam.mode === "top") {
    return [cam.centerX + cam.scale * p[0], cam.centerY + cam.scale * p[1]];
  }
  const cy = Math.cos(cam.yaw), sy = Math.sin(cam.yaw);
  const cp = Math.cos(cam.pitch), sp = Math.sin(cam.pitch);
  const x = cy * p[0] - sy * p[1];
  const y = sy * p[0] + cy * p[1];
  const v = cp * p[2] - sp * y;
  return [cam.centerX + cam.scale * x, cam.centerY - cam.scale * v];
}

// inverse of the top-down projection onto the drag plane (fixed z)
export function unprojectTop(px: number, py: number, cam: Camera): [number, number] {
  return [(px - cam.centerX) / cam.scale, (py - cam.centerY) / cam.scale];
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  graph: SceneGraph,
  cam: Camera,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#0e1116";
  ctx.fillRect(0, 0, width, height);

  // ground grid, 0.5 m pitch
  ctx.strokeStyle = "#1d232c";
  ctx.lineWidth = 1;
  for (let m = -3; m <= 3; m++) {
    const a = project([m * 0.5, -3, 0], cam);
    const b = project([m * 0.5, 3, 0], cam);
    const c = project([-3, m * 0.5, 0], cam);
    const d = project([3, m * 0.5, 0], cam);
    ctx.beginPath(); ctx.moveTo(a[0], a[1]); ctx.lineTo(b[0], b[1]); ctx.stroke();
    ctx.beginPath(); ctx.moveTo(c[0], c[1]); ctx.lineTo(d[0], d[1]); ctx.stroke();
  }

  for (const cap of graph.capsules) {
    const a = project(cap.p0, cam);
    const b = project(cap.p1, cam);
    ctx.strokeStyle = cap.color;
    ctx.lineCap = "round";
    ctx.lineWidth = Math.max(2 * cap.r * cam.scale, 2);
    ctx.globalAlpha = cap.highlight ? 1.0 : 0.75;
    ctx.beginPath();
    ctx.moveTo(a[0], a[1]);
    ctx.lineTo(b[0], b[1]);
    ctx.stroke();
    ctx.globalAlpha = 1.0;
  }

  if (graph.criticalSegment) {
    const [p, q] = graph.criticalSegment;
    const a = project(p, cam);
    const b = project(q, cam);
    ctx.strokeStyle = graph.active ? "#ff6655" : "#ccb86a";
    ctx.lineWidth = 1.5;
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(a[0], a[1]);
    ctx.lineTo(b[0], b[1]);
    ctx.stroke();
    ctx.setLineDash([]);
  }

  if (graph.stale) {
    ctx.fillStyle = "#d04038";
    ctx.font = "bold 16px sans-serif";
    ctx.fillText("STALE DATA", 12, 24);
  }
}
