// Rate limiter for outgoing control messages: at most maxHz sends per
// second regardless of the pointer event rate.

export class RateLimiter {
  private minIntervalMs: number;
  private lastAt = -Infinity;

  constructor(maxHz: number) {
    this.minIntervalMs = 1000 / maxHz;
  }

  allow(nowMs: number): boolean {
    // epsilon keeps metronome-exact streams from losing boundary ticks
    if (nowMs - this.lastAt >= this.minIntervalMs - 1e-6) {
      this.lastAt = nowMs;
      return true;
    }
    return false;
  }
}
