// Analyst dashboard: per-lineup visual-test table, reveal toggle that
// outlines the data panel, and render slots for the agreement table and
// power-curve chart produced by the command-line tools from this
// study's export.

import { ApiError, Client, LineupResult, StudyManifest } from "./api.js";

const LEVEL = 0.05;

export interface AgreementCell {
  counts: number[][];
  n: number;
  conventional_level: number;
  visual_level: number;
  conventional_reject_rate: number;
  visual_reject_rate: number;
}

type RowState =
  | { kind: "result"; result: LineupResult }
  | { kind: "empty" }
  | { kind: "error"; message: string };

export class ResultsView {
  reveal = false;
  manifest: StudyManifest | null = null;
  rows = new Map<string, RowState>();
  notice = "";

  constructor(
    private readonly root: HTMLElement,
    private readonly client: Client,
    private readonly studyId: string,
    private adminToken: string,
  ) {}

  async start(): Promise<void> {
    const exported = await this.client.exportStudy(this.studyId);
    this.manifest = exported.study;
    await this.refresh();
  }

  async refresh(): Promise<void> {
    if (!this.manifest) return;
    this.notice = "";
    for (const bundle of this.manifest.bundles) {
      try {
        const result = await this.client.result(this.studyId, bundle.id, {
          reveal: this.reveal,
          panels: this.reveal,
          adminToken: this.adminToken || undefined,
        });
        this.rows.set(bundle.id, { kind: "result", result });
        if (this.reveal && !result.revealed) {
          this.notice = "Reveal requires the admin token.";
        }
      } catch (err) {
        if (err instanceof ApiError && err.code === "no_evaluations") {
          this.rows.set(bundle.id, { kind: "empty" });
        } else if (err instanceof ApiError) {
          this.rows.set(bundle.id, { kind: "error", message: err.message });
        } else {
          throw err;
        }
      }
    }
    this.render();
  }

  async setReveal(on: boolean): Promise<void> {
    this.reveal = on;
    await this.refresh();
  }

  setAdminToken(token: string): void {
    this.adminToken = token;
  }

  render(): void {
    this.root.textContent = "";
    if (!this.manifest) return;

    const header = el("div", "header");
    header.append(el("h2", "", `Study ${this.manifest.id}`));
    header.append(
      el(
        "p",
        "meta",
        `mode ${this.manifest.mode}, state ${this.manifest.state}, ` +
          `block size ${this.manifest.block_size}`,
      ),
    );
    if (this.notice) header.append(el("p", "notice", this.notice));

    const controls = el("div", "controls");
    const tokenLabel = el("label", "", "Admin token ");
    const tokenInput = document.createElement("input");
    tokenInput.type = "password";
    tokenInput.className = "token";
    tokenInput.value = this.adminToken;
    tokenInput.addEventListener("input", () => {
      this.setAdminToken(tokenInput.value);
    });
    tokenLabel.append(tokenInput);

    const revealLabel = el("label", "", " Reveal ");
    const revealBox = document.createElement("input");
    revealBox.type = "checkbox";
    revealBox.className = "reveal";
    revealBox.checked = this.reveal;
    revealBox.addEventListener("change", () => {
      void this.setReveal(revealBox.checked);
    });
    revealLabel.append(revealBox);
    controls.append(tokenLabel, revealLabel);

    const table = document.createElement("table");
    table.className = "lineups";
    const head = document.createElement("tr");
    for (const col of ["Lineup", "Judges", "Hits", "p-value", "Verdict"]) {
      head.append(el("th", "", col));
    }
    table.append(head);
    for (const bundle of this.manifest.bundles) {
      const row = document.createElement("tr");
      row.dataset["lineup"] = bundle.id;
      const state = this.rows.get(bundle.id);
      if (!state || state.kind === "empty") {
        row.append(el("td", "", bundle.id), wideCell("no evaluations yet"));
      } else if (state.kind === "error") {
        row.append(el("td", "", bundle.id), wideCell(state.message));
      } else {
        const r = state.result;
        row.append(
          el("td", "", bundle.id),
          el("td", "k-judges", String(r.K)),
          el("td", "c-obs", String(r.c_obs)),
          el("td", "p-value", formatP(r.p_value)),
          el(
            "td",
            r.p_value <= LEVEL ? "verdict rejected" : "verdict",
            r.p_value <= LEVEL ? "rejected by visual test" : "not rejected",
          ),
        );
      }
      table.append(row);
    }

    this.root.append(header, controls, table);

    if (this.reveal) {
      for (const bundle of this.manifest.bundles) {
        const state = this.rows.get(bundle.id);
        if (!state || state.kind !== "result" || !state.result.panels) continue;
        this.root.append(
          renderRevealGrid(bundle.id, state.result),
        );
      }
    }

    this.root.append(this.renderArtifacts());
  }

  private renderArtifacts(): HTMLElement {
    const box = el("div", "artifacts");
    box.append(el("h3", "", "Analysis artifacts"));
    box.append(
      el(
        "p",
        "hint",
        "Paste agreement.json or power.svg produced by the command-line " +
          "tools from this study's export.",
      ),
    );

    const agreeArea = document.createElement("textarea");
    agreeArea.className = "agreement-input";
    agreeArea.rows = 4;
    const agreeBtn = document.createElement("button");
    agreeBtn.type = "button";
    agreeBtn.className = "render-agreement";
    agreeBtn.textContent = "Render agreement table";
    const agreeSlot = el("div", "agreement-slot");
    agreeBtn.addEventListener("click", () => {
      agreeSlot.textContent = "";
      try {
        const data = JSON.parse(agreeArea.value) as AgreementCell;
        agreeSlot.append(renderAgreementTable(data));
      } catch {
        agreeSlot.append(el("p", "error", "not valid agreement JSON"));
      }
    });

    const svgArea = document.createElement("textarea");
    svgArea.className = "power-input";
    svgArea.rows = 4;
    const svgBtn = document.createElement("button");
    svgBtn.type = "button";
    svgBtn.className = "embed-power";
    svgBtn.textContent = "Embed power chart";
    const svgSlot = el("div", "power-slot");
    svgBtn.addEventListener("click", () => {
      svgSlot.textContent = "";
      embedPowerSvg(svgSlot, svgArea.value);
    });

    box.append(agreeArea, agreeBtn, agreeSlot, svgArea, svgBtn, svgSlot);
    return box;
  }
}

export function renderAgreementTable(data: AgreementCell): HTMLElement {
  const table = document.createElement("table");
  table.className = "agreement";
  const head = document.createElement("tr");
  head.append(
    el("th", "", ""),
    el("th", "", "visual reject"),
    el("th", "", "visual accept"),
  );
  table.append(head);
  const names = ["conventional reject", "conventional accept"];
  data.counts.forEach((counts, i) => {
    const row = document.createElement("tr");
    row.append(el("th", "", names[i] ?? String(i)));
    for (const c of counts) row.append(el("td", "", String(c)));
    table.append(row);
  });
  const foot = el(
    "caption",
    "",
    `${data.n} lineups, conventional level ${data.conventional_level}, ` +
      `visual level ${data.visual_level}`,
  );
  table.append(foot);
  return table;
}

// The chart arrives as a complete SVG document; it is embedded verbatim
// so the dashboard shows exactly what the analysis produced.
export function embedPowerSvg(slot: HTMLElement, svg: string): void {
  const text = svg.trim();
  if (!text.startsWith("<svg")) {
    slot.append(el("p", "error", "not an SVG document"));
    return;
  }
  const wrap = el("div", "power-chart");
  wrap.innerHTML = text;
  slot.append(wrap);
}

function renderRevealGrid(lineupId: string, result: LineupResult): HTMLElement {
  const box = el("div", "reveal-grid");
  box.dataset["lineup"] = lineupId;
  box.append(el("h3", "", `Lineup ${lineupId}`));
  const grid = el("div", "grid");
  for (const panel of result.panels ?? []) {
    const fig = document.createElement("figure");
    fig.className = "panel";
    if (result.revealed && panel.position === result.data_position) {
      fig.classList.add("is-data");
    }
    const art = el("div", "panel-art");
    art.innerHTML = panel.svg;
    const cap = document.createElement("figcaption");
    cap.textContent = String(panel.position);
    fig.append(art, cap);
    grid.append(fig);
  }
  box.append(grid);
  return box;
}

function wideCell(text: string): HTMLTableCellElement {
  const cell = document.createElement("td");
  cell.className = "empty";
  cell.colSpan = 4;
  cell.textContent = text;
  return cell;
}

function formatP(p: number): string {
  if (p >= 0.001) return p.toFixed(4);
  return p.toExponential(2);
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}
