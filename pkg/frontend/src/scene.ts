// Pure scene-graph construction from a state message. The renderer only
// draws what this returns, so tests can assert on it directly (e.g. the
// highlighted capsules match the critical pair ids from telemetry).

import type { CapsuleShape, StateMsg, Vec3 } from "./wire";

export interface SceneCapsule extends CapsuleShape {
  highlight: boolean;
  color: string;
}

export interface SceneGraph {
  capsules: SceneCapsule[];
  criticalSegment: [Vec3, Vec3] | null;
  active: boolean;
  stale: boolean;
}

const COLORS: Record<string, string> = {
  robot: "#5b8dd9",
  default: "#57b36a",
};

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

function lerp(a: Vec3, b: Vec3, t: number): Vec3 {
  return [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])];
}

const clamp01 = (x: number) => Math.min(1, Math.max(0, x));

// closest points between two segments (display geometry only; all shown
// numbers come straight from telemetry)
export function closestSegmentPoints(p0: Vec3, p1: Vec3, q0: Vec3, q1: Vec3): [Vec3, Vec3] {
  const u = sub(p1, p0);
  const v = sub(q1, q0);
  const w = sub(p0, q0);
  const a = dot(u, u);
  const b = dot(u, v);
  const c = dot(v, v);
  const d = dot(u, w);
  const e = dot(v, w);
  let s: number;
  let t: number;
  const tiny = 1e-12;
  if (a <= tiny && c <= tiny) {
    s = 0;
    t = 0;
  } else if (a <= tiny) {
    s = 0;
    t = clamp01(e / c);
  } else if (c <= tiny) {
    t = 0;
    s = clamp01(-d / a);
  } else {
    const D = a * c - b * b;
    s = D > 1e-10 * a * c ? clamp01((b * e - c * d) / D) : 0;
    t = (b * s + e) / c;
    if (t < 0) {
      t = 0;
      s = clamp01(-d / a);
    } else if (t > 1) {
      t = 1;
      s = clamp01((b - d) / a);
    }
  }
  return [lerp(p0, p1, s), lerp(q0, q1, t)];
}

export function buildScene(state: StateMsg | null, stale: boolean): SceneGraph {
  if (state === null) {
    return { capsules: [], criticalSegment: null, active: false, stale };
  }
  const capsules: SceneCapsule[] = state.capsules.map((c) => {
    const isRobot = c.owner === "robot";
    const highlight = isRobot
      ? c.link === state.robot_link
      : c.link === state.agent_link;
    const base = isRobot ? COLORS.robot! : COLORS.default!;
    const color = highlight ? (state.active ? "#e05545" : "#e0a33f") : base;
    return { ...c, highlight, color };
  });
  const robotCritical = capsules.find((c) => c.owner === "robot" && c.highlight);
  const agentCritical = capsules.find((c) => c.owner !== "robot" && c.highlight);
  let criticalSegment: [Vec3, Vec3] | null = null;
  if (robotCritical && agentCritical) {
    criticalSegment = closestSegmentPoints(
      robotCritical.p0, robotCritical.p1, agentCritical.p0, agentCritical.p1
    );
  }
  return { capsules, criticalSegment, active: state.active, stale };
}

// The readout panel mirrors telemetry fields verbatim (no recomputation).
export interface Readout {
  t: string;
  d: string;
  phi: string;
  active: string;
  pair: string;
}

export function buildReadout(state: StateMsg | null): Readout {
  if (state === null) {
    return { t: "-", d: "-", phi: "-", active: "-", pair: "-" };
  }
  return {
    t: state.t.toFixed(3),
    d: state.d === null ? "-" : state.d.toFixed(4),
    phi: state.phi === null ? "-" : state.phi.toFixed(4),
    active: state.active ? "ACTIVE" : "idle",
    pair: `robot ${state.robot_link} / agent ${state.agent_link}`,
  };
}
