/** Session-side bookkeeping: what the update button may do, and scribbles
 * drawn while an update is in flight (sent when it completes). The mask is
 * never mutated locally; it always comes back from the service. */

import type { ScribbleClass, ScribblePayload } from "./api.js";

export interface CountState {
  foreground: number;
  background: number;
}

export class SessionState {
  counts: CountState = { foreground: 0, background: 0 };
  updating = false;
  private queued: ScribblePayload = { foreground: [], background: [] };

  /** Both classes must be represented before an update makes sense. */
  canUpdate(): boolean {
    return !this.updating && this.counts.foreground > 0 && this.counts.background > 0;
  }

  blockedReason(): string | null {
    if (this.updating) return "busy: an update is already running";
    if (this.counts.foreground === 0 || this.counts.background === 0) {
      return "add scribbles of both classes first";
    }
    return null;
  }

  recordAccepted(cls: ScribbleClass, n: number) {
    this.counts[cls] += n;
  }

  setTotals(counts: CountState) {
    this.counts = { ...counts };
  }

  /** Voxels drawn during an in-flight update wait here. */
  queue(cls: ScribbleClass, voxels: number[][]) {
    this.queued[cls].push(...voxels);
  }

  hasQueued(): boolean {
    return this.queued.foreground.length > 0 || this.queued.background.length > 0;
  }

  /** Hand over and clear the queue. */
  drainQueue(): ScribblePayload {
    const out = this.queued;
    this.queued = { foreground: [], background: [] };
    return out;
  }
}
