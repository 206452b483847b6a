// Message schemas shared with the telemetry server. Field names are the
// protocol; serialization uses sorted keys so round-trips are exact.

export type Vec3 = [number, number, number];

export interface CapsuleShape {
  p0: Vec3;
  p1: Vec3;
  r: number;
  owner: string;
  link: number;
}

export interface Params {
  lambda1: number;
  lambda2: number;
  d_min: number;
}

export interface StateMsg {
  kind: "state";
  seq: number;
  t: number;
  theta: number[];
  capsules: CapsuleShape[];
  d: number | null;
  phi: number | null;
  active: boolean;
  robot_link: number;
  agent_link: number;
  params: Params;
  param_ranges: Record<string, [number, number]>;
}

export interface MetricsMsg {
  kind: "metrics";
  seq: number;
  min_distance: number;
  [key: string]: unknown;
}

export interface ErrorMsg {
  kind: "error";
  seq: number;
  code: string;
  detail: string;
}

export type ServerMsg = StateMsg | MetricsMsg | ErrorMsg;

export class WireError extends Error {}

function requireFields(obj: Record<string, unknown>, fields: string[], kind: string): void {
  for (const f of fields) {
    if (!(f in obj)) throw new WireError(`${kind} message missing field ${f}`);
  }
}

export function parseServerMessage(text: string): ServerMsg {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch (e) {
    throw new WireError(`not valid JSON: ${e}`);
  }
  if (typeof obj !== "object" || obj === null) throw new WireError("message must be an object");
  const msg = obj as Record<string, unknown>;
  switch (msg.kind) {
    case "state":
      requireFields(msg, ["t", "theta", "capsules", "d", "phi", "active", "robot_link", "agent_link", "seq"], "state");
      return msg as unknown as StateMsg;
    case "metrics":
      requireFields(msg, ["seq", "min_distance"], "metrics");
      return msg as unknown as MetricsMsg;
    case "error":
      requireFields(msg, ["seq", "code", "detail"], "error");
      return msg as unknown as ErrorMsg;
    default:
      throw new WireError(`unknown kind ${String(msg.kind)}`);
  }
}

// stable stringify: sorted keys, compact separators (matches the server)
export function stableStringify(value: unknown): string {
  if (Array.isArray(value)) {
    return `[${value.map(stableStringify).join(",")}]`;
  }
  if (value !== null && typeof value === "object") {
    const obj = value as Record<string, unknown>;
    const keys = Object.keys(obj).sort();
    return `{${keys.map((k) => `${JSON.stringify(k)}:${stableStringify(obj[k])}`).join(",")}}`;
  }
  return JSON.stringify(value);
}

export function controlMessage(seq: number, target: Vec3, agentId: string): string {
  return stableStringify({ kind: "control", seq, target_xyz: target, agent_id: agentId });
}

export function paramUpdateMessage(seq: number, update: Partial<Params>): string {
  return stableStringify({ kind: "param_update", seq, ...update });
}

export function scenarioCmdMessage(seq: number, op: "start" | "pause" | "reset" | "load", scenario?: unknown): string {
  const msg: Record<string, unknown> = { kind: "scenario_cmd", seq, op };
  if (scenario !== undefined) msg.scenario = scenario;
  return stableStringify(msg);
}
