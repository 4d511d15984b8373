/**
 * DOM wiring for the labeling mask: session start, audio playback, the
 * staged button panel, and keyboard shortcuts.
 */

import { AnnotationClient } from "./api.js";
import { AssessmentMask, MaskSnapshot, Stage } from "./mask.js";

const STAGE_BUTTONS: Record<Stage, { key: string; label: string }[]> = {
  quality: [
    { key: "1", label: "1 — bad quality" },
    { key: "2", label: "2 — assessable" },
  ],
  presence: [
    { key: "1", label: "1 — healthy" },
    { key: "2", label: "2 — murmur (studied condition)" },
    { key: "3", label: "3 — other cause" },
  ],
  intensity: [
    { key: "1", label: "1 — mild" },
    { key: "2", label: "2 — moderate" },
    { key: "3", label: "3 — loud / thrilling" },
  ],
};

const STAGE_PROMPTS: Record<Stage, string> = {
  quality: "Is the recording too poor to assess?",
  presence: "What do you hear?",
  intensity: "How intense is the murmur?",
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function banner(text: string, kind: "info" | "error"): void {
  const box = el<HTMLDivElement>("banner");
  box.textContent = text;
  box.className = kind;
  box.hidden = text === "";
}

export function startApp(): void {
  const form = el<HTMLFormElement>("session-form");
  const panel = el<HTMLDivElement>("assessment-panel");

  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    const raterId = el<HTMLInputElement>("rater-id").value.trim();
    const twoPasses = el<HTMLInputElement>("two-passes").checked;
    const baseUrl = el<HTMLInputElement>("service-url").value.trim().replace(/\/$/, "");
    if (!raterId) {
      banner("enter a rater id to start", "error");
      return;
    }
    const client = new AnnotationClient(baseUrl, raterId);
    const mask = new AssessmentMask(client, twoPasses);
    form.hidden = true;
    panel.hidden = false;
    wireMask(mask);
    try {
      await mask.refresh();
      banner("", "info");
    } catch (err) {
      banner(`service unreachable: ${String(err)} — retry with R`, "error");
    }
  });
}

function wireMask(mask: AssessmentMask): void {
  const audio = el<HTMLAudioElement>("player");
  const prompt = el<HTMLParagraphElement>("prompt");
  const buttons = el<HTMLDivElement>("choices");
  const progress = el<HTMLParagraphElement>("progress");

  const render = (snap: MaskSnapshot): void => {
    if (snap.done) {
      prompt.textContent = "All recordings assessed — thank you.";
      buttons.replaceChildren();
      audio.removeAttribute("src");
      progress.textContent = `${snap.submitted} assessments submitted`;
      return;
    }
    const item = snap.current!;
    prompt.textContent =
      `${item.recordingId} (pass ${item.passIndex}) — ${STAGE_PROMPTS[snap.stage]}`;
    progress.textContent =
      `${snap.remaining} pending · ${snap.submitted} submitted`;
    const url = mask.audioUrl();
    if (url && audio.getAttribute("src") !== url) {
      audio.src = url;
      void audio.play().catch(() => undefined);  // autoplay may need a gesture
    }
    buttons.replaceChildren(
      ...STAGE_BUTTONS[snap.stage].map(({ key, label }) => {
        const b = document.createElement("button");
        b.textContent = label;
        b.addEventListener("click", () => void press(key));
        return b;
      }),
    );
  };

  const press = async (key: string): Promise<void> => {
    try {
      await mask.pressKey(key);
      banner("", "info");
    } catch (err) {
      banner(`submission failed: ${String(err)} — nothing was lost, retry`, "error");
    }
  };

  mask.subscribe(render);
  render(mask.snapshot());

  document.addEventListener("keydown", (event) => {
    if (event.key >= "1" && event.key <= "6") {
      void press(event.key);
    } else if (event.key === " ") {
      event.preventDefault();
      audio.paused ? void audio.play() : audio.pause();
    } else if (event.key.toLowerCase() === "s") {
      mask.skip();
    } else if (event.key.toLowerCase() === "r") {
      void mask.refresh().catch((err) => banner(`refresh failed: ${String(err)}`, "error"));
    }
  });
}

if (typeof document !== "undefined" && document.getElementById("session-form")) {
  startApp();
}
