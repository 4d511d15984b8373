/**
 * The staged assessment flow behind the labeling mask.
 *
 * One recording walks through up to three stages:
 *
 *   quality   — "too bad to assess?"  yes -> submit bad_quality
 *   presence  — healthy / murmur from the studied condition / other cause
 *   intensity — mild / moderate / loud-thrilling (murmur path only)
 *
 * Exactly one assessment is posted per completed flow; abandoning a flow
 * (moving to another recording) posts nothing.  After a submission the mask
 * auto-advances to the next pending (recording, pass) of the session's
 * rater.
 */

import {
  AnnotationClient,
  AssessmentLabel,
  PassIndex,
  RecordingStatus,
  StoredAssessment,
} from "./api.js";

export type Stage = "quality" | "presence" | "intensity";

export type QualityChoice = "bad_quality" | "acceptable";
export type PresenceChoice = "healthy" | "murmur" | "other";
export type IntensityChoice = "mild" | "moderate" | "loud_thrilling";

export interface PendingItem {
  recordingId: string;
  passIndex: PassIndex;
}

export interface MaskSnapshot {
  current: PendingItem | null;
  stage: Stage;
  remaining: number;
  submitted: number;
  done: boolean;
}

export type MaskListener = (snapshot: MaskSnapshot) => void;

/** Ordered work queue: pass 1 over every recording, then pass 2 when the
 * session is configured for two passes. */
export function pendingItems(
  recordings: RecordingStatus[],
  twoPasses: boolean,
): PendingItem[] {
  const items: PendingItem[] = [];
  for (const rec of recordings) {
    if (!rec.completed_passes.includes(1)) {
      items.push({ recordingId: rec.id, passIndex: 1 });
    }
  }
  if (twoPasses) {
    for (const rec of recordings) {
      if (rec.completed_passes.includes(1) && !rec.completed_passes.includes(2)) {
        items.push({ recordingId: rec.id, passIndex: 2 });
      }
    }
  }
  return items;
}

export class AssessmentMask {
  private queue: PendingItem[] = [];
  private stage: Stage = "quality";
  private submitted = 0;
  private listeners: MaskListener[] = [];

  constructor(
    private client: AnnotationClient,
    private twoPasses: boolean,
  ) {}

  subscribe(listener: MaskListener): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    const snap = this.snapshot();
    for (const listener of this.listeners) {
      listener(snap);
    }
  }

  snapshot(): MaskSnapshot {
    return {
      current: this.queue.length ? { ...this.queue[0] } : null,
      stage: this.stage,
      remaining: this.queue.length,
      submitted: this.submitted,
      done: this.queue.length === 0,
    };
  }

  get current(): PendingItem | null {
    return this.queue.length ? this.queue[0] : null;
  }

  audioUrl(): string | null {
    const item = this.current;
    return item ? this.client.audioUrl(item.recordingId) : null;
  }

  /** Refresh the queue from the service; resets the stage. */
  async refresh(): Promise<void> {
    const recordings = await this.client.listRecordings();
    this.queue = pendingItems(recordings, this.twoPasses);
    this.stage = "quality";
    this.notify();
  }

  /** Skip the current recording without submitting anything. */
  skip(): void {
    if (this.queue.length) {
      this.queue.push(this.queue.shift() as PendingItem);
      this.stage = "quality";
      this.notify();
    }
  }

  private async submit(label: AssessmentLabel): Promise<StoredAssessment> {
    const item = this.current;
    if (!item) {
      throw new Error("no recording pending");
    }
    const stored = await this.client.submitAssessment(
      item.recordingId,
      item.passIndex,
      label,
    );
    this.queue.shift();
    this.submitted += 1;
    this.stage = "quality";
    this.notify();
    return stored;
  }

  /** Stage 1: unusable audio ends the flow immediately. */
  async chooseQuality(choice: QualityChoice): Promise<StoredAssessment | null> {
    if (this.stage !== "quality") {
      throw new Error(`quality choice not available in stage ${this.stage}`);
    }
    if (choice === "bad_quality") {
      return this.submit("bad_quality");
    }
    this.stage = "presence";
    this.notify();
    return null;
  }

  /** Stage 2: healthy and other-cause end the flow; a murmur moves on. */
  async choosePresence(choice: PresenceChoice): Promise<StoredAssessment | null> {
    if (this.stage !== "presence") {
      throw new Error(`presence choice not available in stage ${this.stage}`);
    }
    if (choice === "healthy") {
      return this.submit("healthy");
    }
    if (choice === "other") {
      return this.submit("other");
    }
    this.stage = "intensity";
    this.notify();
    return null;
  }

  /** Stage 3: grading the murmur completes the flow. */
  async chooseIntensity(choice: IntensityChoice): Promise<StoredAssessment> {
    if (this.stage !== "intensity") {
      throw new Error(`intensity choice not available in stage ${this.stage}`);
    }
    return this.submit(choice);
  }

  /**
   * Keyboard entry: 1/2 answer the current binary stage, 1-3 grade
   * intensity.  Returns the stored assessment when the key completed a flow.
   */
  async pressKey(key: string): Promise<StoredAssessment | null> {
    if (!this.current) {
      return null;
    }
    switch (this.stage) {
      case "quality":
        if (key === "1") return this.chooseQuality("bad_quality");
        if (key === "2") return this.chooseQuality("acceptable");
        return null;
      case "presence":
        if (key === "1") return this.choosePresence("healthy");
        if (key === "2") return this.choosePresence("murmur");
        if (key === "3") return this.choosePresence("other");
        return null;
      case "intensity":
        if (key === "1") return this.chooseIntensity("mild");
        if (key === "2") return this.chooseIntensity("moderate");
        if (key === "3") return this.chooseIntensity("loud_thrilling");
        return null;
    }
  }
}
