import { beforeEach, describe, expect, it } from "vitest";

import { AnnotationClient, ApiError } from "../src/api.js";
import { AssessmentMask, pendingItems } from "../src/mask.js";
import { FakeService } from "./fake_service.js";

const BASE = "http://svc.test";

let service: FakeService;

function mask(rater = "A", twoPasses = false): AssessmentMask {
  const client = new AnnotationClient(BASE, rater, service.fetch);
  return new AssessmentMask(client, twoPasses);
}

beforeEach(() => {
  service = new FakeService(["rec0", "rec1", "rec2"]);
});

describe("pendingItems", () => {
  it("orders pass 1 before pass 2", () => {
    const queue = pendingItems(
      [
        { id: "a", duration_s: 10, completed_passes: [1] },
        { id: "b", duration_s: 10, completed_passes: [] },
      ],
      true,
    );
    expect(queue).toEqual([
      { recordingId: "b", passIndex: 1 },
      { recordingId: "a", passIndex: 2 },
    ]);
  });

  it("single-pass sessions never schedule pass 2", () => {
    const queue = pendingItems(
      [{ id: "a", duration_s: 10, completed_passes: [1] }],
      false,
    );
    expect(queue).toEqual([]);
  });
});

describe("assessment flow", () => {
  it("bad-quality path posts exactly one assessment and skips later stages", async () => {
    const m = mask();
    await m.refresh();
    const stored = await m.chooseQuality("bad_quality");
    expect(stored?.label).toBe("bad_quality");
    expect(service.audit).toHaveLength(1);
    expect(m.snapshot().stage).toBe("quality"); // advanced to the next recording
    expect(m.snapshot().current?.recordingId).toBe("rec1");
  });

  it("healthy path never shows the intensity stage", async () => {
    const m = mask();
    await m.refresh();
    await m.chooseQuality("acceptable");
    expect(m.snapshot().stage).toBe("presence");
    const stored = await m.choosePresence("healthy");
    expect(stored?.label).toBe("healthy");
    expect(service.audit).toHaveLength(1);
  });

  it("murmur path grades intensity", async () => {
    const m = mask();
    await m.refresh();
    await m.chooseQuality("acceptable");
    await m.choosePresence("murmur");
    expect(m.snapshot().stage).toBe("intensity");
    const stored = await m.chooseIntensity("mild");
    expect(stored.label).toBe("mild");
    expect(service.audit).toHaveLength(1);
  });

  it("abandoning a flow posts nothing", async () => {
    const m = mask();
    await m.refresh();
    await m.chooseQuality("acceptable");
    m.skip(); // walks away mid-flow
    expect(service.audit).toHaveLength(0);
    expect(m.snapshot().stage).toBe("quality");
    expect(m.snapshot().current?.recordingId).toBe("rec1");
  });

  it("stage guards reject out-of-order choices", async () => {
    const m = mask();
    await m.refresh();
    await expect(m.chooseIntensity("mild")).rejects.toThrow("not available");
    await expect(m.choosePresence("healthy")).rejects.toThrow("not available");
  });

  it("keyboard shortcuts drive the full flow", async () => {
    const m = mask();
    await m.refresh();
    expect(await m.pressKey("2")).toBeNull(); // assessable
    expect(await m.pressKey("2")).toBeNull(); // murmur
    const stored = await m.pressKey("3"); // loud/thrilling
    expect(stored?.label).toBe("loud_thrilling");
    expect(service.audit).toHaveLength(1);
  });

  it("auto-advances through the whole queue and finishes", async () => {
    const m = mask();
    await m.refresh();
    while (!m.snapshot().done) {
      await m.chooseQuality("acceptable");
      await m.choosePresence("murmur");
      await m.chooseIntensity("moderate");
    }
    const snap = m.snapshot();
    expect(snap.submitted).toBe(3);
    expect(service.audit.map((a) => a.recording_id).sort()).toEqual([
      "rec0", "rec1", "rec2",
    ]);
  });

  it("two-pass sessions revisit recordings for pass 2", async () => {
    const m = mask("A", true);
    await m.refresh();
    for (let i = 0; i < 3; i++) {
      await m.chooseQuality("bad_quality");
    }
    await m.refresh(); // pick up pass-2 work
    const snap = m.snapshot();
    expect(snap.done).toBe(false);
    expect(snap.current).toEqual({ recordingId: "rec0", passIndex: 2 });
  });

  it("a rejected submission keeps the queue intact", async () => {
    const m = mask();
    await m.refresh();
    service.recordingIds.pop(); // rec2 disappears server-side
    m.skip();
    m.skip(); // current is now rec2
    await m.chooseQuality("acceptable");
    await expect(m.choosePresence("healthy")).rejects.toThrow(ApiError);
    expect(m.snapshot().remaining).toBe(3); // nothing consumed
  });
});

describe("blindness at the client", () => {
  it("requests carry only the session rater id", async () => {
    const a = mask("A");
    await a.refresh();
    await a.chooseQuality("bad_quality");
    const b = mask("B");
    await b.refresh();
    const raters = new Set(service.requests.map((r) => r.raterHeader));
    expect(raters).toEqual(new Set(["A", "B"]));
  });

  it("rater B sees no completions from rater A", async () => {
    const a = mask("A");
    await a.refresh();
    await a.chooseQuality("bad_quality");
    const clientB = new AnnotationClient(BASE, "B", service.fetch);
    const listing = await clientB.listRecordings();
    expect(listing.every((r) => r.completed_passes.length === 0)).toBe(true);
    const serialized = JSON.stringify(listing);
    expect(serialized).not.toContain("bad_quality");
  });
});
