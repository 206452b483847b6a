// The single view-state store: latest server state plus rolling strip
// windows. The client holds no physics; reloading mid-run rebuilds the
// view from the next state message.

import type { ServerMsg, StateMsg } from "./wire";

export const WINDOW_SECONDS = 10;
export const STALE_MS = 1000;

export interface Sample {
  t: number;
  d: number | null;
  phi: number | null;
  active: boolean;
}

export type Connection = "connecting" | "open" | "closed";

export class ViewState {
  latest: StateMsg | null = null;
  connection: Connection = "connecting";
  samples: Sample[] = [];
  lastMessageAt = 0; // wall-clock ms
  lastError: string | null = null;
  lastSeq = -1;

  apply(msg: ServerMsg, nowMs: number): void {
    this.lastMessageAt = nowMs;
    if (msg.seq <= this.lastSeq) return; // out-of-order: drop
    this.lastSeq = msg.seq;
    if (msg.kind === "state") {
      if (this.latest !== null && msg.t < this.latest.t) {
        // scenario reset: restart the strip window
        this.samples = [];
      }
      this.latest = msg;
      this.samples.push({ t: msg.t, d: msg.d, phi: msg.phi, active: msg.active });
      const cutoff = msg.t - WINDOW_SECONDS;
      while (this.samples.length > 0 && this.samples[0]!.t < cutoff) {
        this.samples.shift();
      }
    } else if (msg.kind === "error") {
      this.lastError = `${msg.code}: ${msg.detail}`;
    }
  }

  isStale(nowMs: number): boolean {
    return this.connection !== "open" || nowMs - this.lastMessageAt > STALE_MS;
  }

  window(): Sample[] {
    return this.samples;
  }
}
