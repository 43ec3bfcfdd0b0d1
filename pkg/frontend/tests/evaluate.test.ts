// @vitest-environment jsdom
import { beforeEach, describe, expect, it } from "vitest";

import type { Client, NextStep, SubmitBody } from "../src/api.js";
import { EvaluateView } from "../src/evaluate.js";

const SVG = (i: number) =>
  `<svg viewBox="0 0 60 40"><path d="M1 ${i}"/><circle cx="3" cy="4" r="1"/></svg>`;

function step(id: string, completed: number, total = 2): NextStep {
  return {
    done: false,
    lineup_id: id,
    m: 20,
    token: "tok-" + id,
    panels: Array.from({ length: 20 }, (_, i) => ({
      position: i + 1,
      svg: SVG(i + 1),
    })),
    progress: { completed, total },
  };
}

class FakeClient {
  steps: NextStep[];
  submitted: SubmitBody[] = [];

  constructor(steps: NextStep[]) {
    this.steps = [...steps];
  }

  async nextLineup(): Promise<NextStep> {
    const next = this.steps[0];
    if (!next) throw new Error("no scripted step left");
    return next;
  }

  async submit(_study: string, body: SubmitBody) {
    this.submitted.push(body);
    this.steps.shift();
    return {
      stored: {
        lineup_id: body.lineup_id,
        participant_id: body.participant,
        selections: body.selections,
        reason: body.reason,
        rating: body.rating,
        timestamp: "2026-01-01T00:00:00+00:00",
      },
      replayed: false,
      progress: { completed: this.submitted.length, total: 2 },
    };
  }
}

async function flush(): Promise<void> {
  await new Promise((r) => setTimeout(r, 0));
  await new Promise((r) => setTimeout(r, 0));
}

function mount(steps: NextStep[]) {
  const root = document.createElement("div");
  document.body.textContent = "";
  document.body.append(root);
  const fake = new FakeClient(steps);
  const view = new EvaluateView(root, fake as unknown as Client, "st", "pp-9");
  return { root, fake, view };
}

function panel(root: HTMLElement, pos: number): HTMLElement {
  const fig = root.querySelector<HTMLElement>(`figure[data-panel="${pos}"]`);
  if (!fig) throw new Error(`no panel ${pos}`);
  return fig;
}

function typeReason(root: HTMLElement, text: string): void {
  const area = root.querySelector<HTMLTextAreaElement>("textarea.reason");
  if (!area) throw new Error("no reason box");
  area.value = text;
  area.dispatchEvent(new Event("input", { bubbles: true }));
}

function submitButton(root: HTMLElement): HTMLButtonElement {
  const btn = root.querySelector<HTMLButtonElement>("button.submit");
  if (!btn) throw new Error("no submit button");
  return btn;
}

describe("lineup screen", () => {
  let root: HTMLElement;
  let fake: FakeClient;
  let view: EvaluateView;

  beforeEach(async () => {
    ({ root, fake, view } = mount([
      step("lp-1", 0),
      step("lp-2", 1),
      { done: true, completed: 2, total: 2 },
    ]));
    await view.start();
  });

  it("renders all twenty panels with the server markup", () => {
    const figures = root.querySelectorAll("figure.panel");
    expect(figures.length).toBe(20);
    const art = root.querySelector(".panel-art");
    expect(art?.innerHTML).toContain('viewBox="0 0 60 40"');
    expect(art?.querySelector("circle")).toBeTruthy();
    const captions = [...root.querySelectorAll("figcaption")].map(
      (c) => c.textContent,
    );
    expect(captions).toEqual(
      Array.from({ length: 20 }, (_, i) => String(i + 1)),
    );
    expect(root.textContent).toContain("Lineup 1 of 2");
  });

  it("shows nothing about a panel beyond its number", () => {
    const html = root.innerHTML;
    for (const needle of ["data_position", "factors", "seed"]) {
      expect(html).not.toContain(needle);
    }
  });

  it("keeps submit disabled until the response is complete", () => {
    const btn = submitButton(root);
    expect(btn.disabled).toBe(true);
    panel(root, 6).click();
    expect(panel(root, 6).classList.contains("selected")).toBe(true);
    expect(btn.disabled).toBe(true);
    typeReason(root, "clear bend");
    expect(btn.disabled).toBe(false);
    typeReason(root, "");
    expect(btn.disabled).toBe(true);
  });

  it("submits a reasoned selection and advances", async () => {
    panel(root, 6).click();
    typeReason(root, "quadratic arc");
    const four = root.querySelector<HTMLInputElement>(
      'input[name="rating"][value="4"]',
    );
    four?.click();
    submitButton(root).click();
    await flush();
    expect(fake.submitted).toEqual([
      {
        participant: "pp-9",
        lineup_id: "lp-1",
        token: "tok-lp-1",
        selections: [6],
        reason: "quadratic arc",
        rating: 4,
      },
    ]);
    expect(root.textContent).toContain("Lineup 2 of 2");
    expect(submitButton(root).disabled).toBe(true);
  });

  it("multi-select keeps every toggled panel", async () => {
    panel(root, 3).click();
    panel(root, 7).click();
    typeReason(root, "both fan out");
    submitButton(root).click();
    await flush();
    expect(fake.submitted[0]?.selections).toEqual([3, 7]);
  });

  it("zero-selection skips the reason and posts an empty list", async () => {
    panel(root, 2).click();
    typeReason(root, "about to change my mind");
    const none = root.querySelector<HTMLButtonElement>("button.none-btn");
    none?.click();
    const area = root.querySelector<HTMLTextAreaElement>("textarea.reason");
    expect(area?.disabled).toBe(true);
    expect(submitButton(root).disabled).toBe(false);
    submitButton(root).click();
    await flush();
    expect(fake.submitted[0]?.selections).toEqual([]);
    expect(fake.submitted[0]?.reason).toBe("");
    expect(fake.submitted[0]?.rating).toBe(3);
  });

  it("shows the done screen after the block", async () => {
    for (const pos of [1, 2]) {
      panel(root, pos).click();
      typeReason(root, "r");
      submitButton(root).click();
      await flush();
    }
    expect(root.textContent).toContain("All done");
    expect(root.textContent).toContain("2 of 2");
    expect(root.querySelector("figure.panel")).toBeNull();
  });

  it("labels the rating with the comparison wording", () => {
    expect(root.textContent).toContain(
      "How different are the selected plots from the others?",
    );
    const radios = root.querySelectorAll('input[name="rating"]');
    expect(radios.length).toBe(5);
  });
});
