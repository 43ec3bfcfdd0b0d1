// Participant view: a 4x5 grid of panels, multi-select, a reason box,
// a similarity rating, and a progress line. The server's SVG markup is
// inserted verbatim; the page adds nothing about any panel beyond its
// display number.

import { Client } from "./api.js";
import { SessionState } from "./state.js";

const RATING_LABEL = "How different are the selected plots from the others?";

export class EvaluateView {
  readonly state: SessionState;
  private busy = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: Client,
    private readonly studyId: string,
    participant: string,
  ) {
    this.state = new SessionState(participant);
  }

  async start(): Promise<void> {
    const step = await this.client.nextLineup(this.studyId, this.state.participant);
    this.state.loadStep(step);
    this.render();
  }

  async submit(): Promise<void> {
    if (!this.state.canSubmit() || this.busy) return;
    this.busy = true;
    try {
      const body = this.state.submitBody();
      await this.client.submit(this.studyId, body);
      const step = await this.client.nextLineup(this.studyId, this.state.participant);
      this.state.loadStep(step);
      this.render();
    } finally {
      this.busy = false;
    }
  }

  render(): void {
    this.root.textContent = "";
    if (this.state.done) {
      this.renderDone();
      return;
    }
    this.renderLineup();
  }

  private renderDone(): void {
    const box = el("div", "done");
    box.append(
      el("h2", "", "All done"),
      el(
        "p",
        "",
        `You completed ${this.state.progress.completed} of ${this.state.progress.total} lineups. Thank you.`,
      ),
    );
    this.root.append(box);
  }

  private renderLineup(): void {
    const header = el("div", "header");
    header.append(el("h2", "", "Which plots look different?"));
    const progress = el(
      "p",
      "progress",
      `Lineup ${this.state.progress.completed + 1} of ${this.state.progress.total}`,
    );
    header.append(progress);

    const grid = el("div", "grid");
    for (const panel of this.state.panels) {
      const fig = document.createElement("figure");
      fig.className = "panel";
      fig.dataset["panel"] = String(panel.position);
      const art = el("div", "panel-art");
      art.innerHTML = panel.svg;
      const cap = document.createElement("figcaption");
      cap.textContent = String(panel.position);
      fig.append(art, cap);
      fig.addEventListener("click", () => {
        this.state.togglePanel(panel.position);
        this.refreshControls();
      });
      grid.append(fig);
    }

    const noneBtn = document.createElement("button");
    noneBtn.type = "button";
    noneBtn.className = "none-btn";
    noneBtn.textContent = "None are different";
    noneBtn.addEventListener("click", () => {
      this.state.chooseNone();
      this.refreshControls();
    });

    const reasonLabel = el("label", "reason-label", "Why do they stand out?");
    const reason = document.createElement("textarea");
    reason.className = "reason";
    reason.rows = 3;
    reason.addEventListener("input", () => {
      this.state.setReason(reason.value);
      this.refreshControls();
    });
    reasonLabel.append(reason);

    const ratingBox = el("fieldset", "rating");
    const legend = document.createElement("legend");
    legend.textContent = RATING_LABEL;
    ratingBox.append(legend);
    for (let v = 1; v <= 5; v += 1) {
      const lab = document.createElement("label");
      const radio = document.createElement("input");
      radio.type = "radio";
      radio.name = "rating";
      radio.value = String(v);
      radio.checked = v === this.state.rating;
      radio.addEventListener("change", () => {
        this.state.setRating(v);
        this.refreshControls();
      });
      lab.append(radio, document.createTextNode(` ${v}`));
      ratingBox.append(lab);
    }

    const submit = document.createElement("button");
    submit.type = "button";
    submit.className = "submit";
    submit.textContent = "Submit";
    submit.addEventListener("click", () => {
      void this.submit();
    });

    this.root.append(header, grid, noneBtn, reasonLabel, ratingBox, submit);
    this.refreshControls();
  }

  // Enablement and highlight classes are derived from state on every
  // interaction instead of re-rendering, so the textarea keeps focus.
  refreshControls(): void {
    const figures = this.root.querySelectorAll<HTMLElement>("figure.panel");
    figures.forEach((fig) => {
      const pos = Number(fig.dataset["panel"]);
      fig.classList.toggle("selected", this.state.selections.has(pos));
    });
    const noneBtn = this.root.querySelector<HTMLButtonElement>(".none-btn");
    if (noneBtn) noneBtn.classList.toggle("active", this.state.none);
    const reason = this.root.querySelector<HTMLTextAreaElement>(".reason");
    if (reason) {
      reason.disabled = this.state.none;
      if (this.state.none) reason.value = "";
    }
    const submit = this.root.querySelector<HTMLButtonElement>(".submit");
    if (submit) submit.disabled = !this.state.canSubmit();
  }
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}
