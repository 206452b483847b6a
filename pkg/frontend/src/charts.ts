// Strip-chart layout: pure coordinate math (testable), drawn onto a
// canvas by the thin paint helper below. The x-axis spans exactly the
// rolling window ending at the latest sample time.

import { WINDOW_SECONDS, type Sample } from "./store";

export interface StripPoint {
  x: number; // px
  y: number; // px
  value: number;
}

export interface StripLayout {
  points: StripPoint[];
  tMin: number;
  tMax: number;
  yMin: number;
  yMax: number;
  marginY: number | null; // pixel row of the reference line, if any
}

export function layoutStrip(
  samples: Sample[],
  accessor: (s: Sample) => number | null,
  width: number,
  height: number,
  opts: { yMin?: number; yMax?: number; marginValue?: number | null } = {},
): StripLayout {
  const tMax = samples.length > 0 ? samples[samples.length - 1]!.t : 0;
  const tMin = tMax - WINDOW_SECONDS;
  const values = samples
    .map(accessor)
    .filter((v): v is number => v !== null && Number.isFinite(v));
  let yMin = opts.yMin ?? Math.min(0, ...values);
  let yMax = opts.yMax ?? Math.max(1e-6, ...values);
  if (opts.marginValue != null) {
    yMin = Math.min(yMin, opts.marginValue);
    yMax = Math.max(yMax, opts.marginValue * 1.05);
  }
  if (yMax - yMin < 1e-9) yMax = yMin + 1;
  const sx = (t: number) => ((t - tMin) / WINDOW_SECONDS) * width;
  const sy = (v: number) => height - ((v - yMin) / (yMax - yMin)) * height;
  const points: StripPoint[] = [];
  for (const s of samples) {
    const v = accessor(s);
    if (v === null || !Number.isFinite(v)) continue;
    points.push({ x: sx(s.t), y: sy(v), value: v });
  }
  return {
    points,
    tMin,
    tMax,
    yMin,
    yMax,
    marginY: opts.marginValue != null ? sy(opts.marginValue) : null,
  };
}

export function paintStrip(
  ctx: CanvasRenderingContext2D,
  layout: StripLayout,
  width: number,
  height: number,
  label: string,
  color: string,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#14181f";
  ctx.fillRect(0, 0, width, height);
  if (layout.marginY !== null) {
    ctx.strokeStyle = "#d04038";
    ctx.setLineDash([6, 4]);
    ctx.beginPath();
    ctx.moveTo(0, layout.marginY);
    ctx.lineTo(width, layout.marginY);
    ctx.stroke();
    ctx.setLineDash([]);
  }
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  layout.points.forEach((p, i) => (i === 0 ? ctx.moveTo(p.x, p.y) : ctx.lineTo(p.x, p.y)));
  ctx.stroke();
  ctx.fillStyle = "#9aa4b2";
  ctx.font = "11px sans-serif";
  ctx.fillText(label, 6, 13);
}

export function paintActivityStrip(
  ctx: CanvasRenderingContext2D,
  samples: Sample[],
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#14181f";
  ctx.fillRect(0, 0, width, height);
  const tMax = samples.length > 0 ? samples[samples.length - 1]!.t : 0;
  const tMin = tMax - WINDOW_SECONDS;
  ctx.fillStyle = "#e05545";
  for (let i = 0; i < samples.length; i++) {
    const s = samples[i]!;
    if (!s.active) continue;
    const next = samples[i + 1];
    const x0 = ((s.t - tMin) / WINDOW_SECONDS) * width;
    const x1 = (((next ? next.t : s.t + 0.04) - tMin) / WINDOW_SECONDS) * width;
    ctx.fillRect(x0, height * 0.25, Math.max(x1 - x0, 1), height * 0.5);
  }
  ctx.fillStyle = "#9aa4b2";
  ctx.font = "11px sans-serif";
  ctx.fillText("safeguard activity", 6, 13);
}
