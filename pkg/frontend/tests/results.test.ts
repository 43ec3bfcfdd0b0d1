// @vitest-environment jsdom
import { describe, expect, it } from "vitest";

import { ApiError, Client, LineupResult, StudyExport } from "../src/api.js";
import {
  ResultsView,
  embedPowerSvg,
  renderAgreementTable,
} from "../src/results.js";

const MANIFEST = {
  id: "st-9",
  state: "Open",
  block_size: 3,
  mode: "UniformNull",
  alpha: null,
  replications: 100000,
  bundles: [
    { id: "lp-a", target: 5, attention: false },
    { id: "lp-b", target: 5, attention: false },
    { id: "lp-c", target: 5, attention: false },
  ],
};

function result(
  id: string,
  p: number,
  extra: Partial<LineupResult> = {},
): LineupResult {
  return {
    lineup_id: id,
    mode: "UniformNull",
    alpha: null,
    mc_se: null,
    K: 5,
    c_obs: 4,
    p_value: p,
    collected: 5,
    filtered_out: 0,
    target: 5,
    attention_check: false,
    revealed: false,
    ...extra,
  };
}

interface ResultCall {
  lineupId: string;
  opts: { reveal?: boolean; panels?: boolean; adminToken?: string };
}

class FakeClient {
  calls: ResultCall[] = [];

  constructor(
    private readonly results: Record<
      string,
      (opts: ResultCall["opts"]) => LineupResult
    >,
  ) {}

  async exportStudy(): Promise<StudyExport> {
    return { study: MANIFEST, evaluations: [], participants: [] };
  }

  async result(
    _study: string,
    lineupId: string,
    opts: ResultCall["opts"] = {},
  ): Promise<LineupResult> {
    this.calls.push({ lineupId, opts });
    const make = this.results[lineupId];
    if (!make) {
      throw new ApiError(409, "no_evaluations", "nothing collected");
    }
    return make(opts);
  }
}

function mount(results: ConstructorParameters<typeof FakeClient>[0], token = "") {
  const root = document.createElement("div");
  document.body.textContent = "";
  document.body.append(root);
  const fake = new FakeClient(results);
  const view = new ResultsView(root, fake as unknown as Client, "st-9", token);
  return { root, fake, view };
}

describe("lineup table", () => {
  it("lists K, c_obs, and p per lineup and flags rejections", async () => {
    const { root, view } = mount({
      "lp-a": () => result("lp-a", 0.0123, { K: 5, c_obs: 4 }),
      "lp-b": () => result("lp-b", 0.8901, { K: 5, c_obs: 1 }),
    });
    await view.start();
    const rowA = root.querySelector<HTMLElement>('tr[data-lineup="lp-a"]');
    expect(rowA?.querySelector(".k-judges")?.textContent).toBe("5");
    expect(rowA?.querySelector(".c-obs")?.textContent).toBe("4");
    expect(rowA?.querySelector(".p-value")?.textContent).toBe("0.0123");
    expect(rowA?.textContent).toContain("rejected by visual test");
    const rowB = root.querySelector<HTMLElement>('tr[data-lineup="lp-b"]');
    expect(rowB?.textContent).toContain("not rejected");
    const rowC = root.querySelector<HTMLElement>('tr[data-lineup="lp-c"]');
    expect(rowC?.textContent).toContain("no evaluations yet");
  });

  it("formats small p-values in scientific notation", async () => {
    const { root, view } = mount({
      "lp-a": () => result("lp-a", 1.25e-4),
      "lp-b": () => result("lp-b", 0.5),
      "lp-c": () => result("lp-c", 0.5),
    });
    await view.start();
    const rowA = root.querySelector<HTMLElement>('tr[data-lineup="lp-a"]');
    expect(rowA?.querySelector(".p-value")?.textContent).toBe("1.25e-4");
  });
});

describe("reveal toggle", () => {
  const panels = Array.from({ length: 20 }, (_, i) => ({
    position: i + 1,
    svg: `<svg viewBox="0 0 6 4"><circle cx="${i}" cy="1" r="1"/></svg>`,
  }));

  it("asks for panels and outlines the data panel when granted", async () => {
    const { root, fake, view } = mount(
      {
        "lp-a": (opts) =>
          opts.reveal && opts.adminToken === "sekrit"
            ? result("lp-a", 0.02, {
                revealed: true,
                data_position: 13,
                panels,
              })
            : result("lp-a", 0.02),
        "lp-b": () => result("lp-b", 0.5),
        "lp-c": () => result("lp-c", 0.5),
      },
      "sekrit",
    );
    await view.start();
    expect(root.querySelector(".reveal-grid")).toBeNull();
    await view.setReveal(true);
    const call = fake.calls.find(
      (c) => c.lineupId === "lp-a" && c.opts.reveal,
    );
    expect(call?.opts.panels).toBe(true);
    expect(call?.opts.adminToken).toBe("sekrit");
    const grid = root.querySelector('[data-lineup="lp-a"].reveal-grid');
    expect(grid).toBeTruthy();
    const outlined = grid?.querySelectorAll("figure.is-data");
    expect(outlined?.length).toBe(1);
    const caption = outlined?.[0]?.querySelector("figcaption");
    expect(caption?.textContent).toBe("13");
  });

  it("reports unauthorized reveals", async () => {
    const { root, view } = mount({
      "lp-a": (opts) =>
        result("lp-a", 0.02, { revealed: false, panels: opts.panels ? panels : undefined }),
      "lp-b": () => result("lp-b", 0.5),
      "lp-c": () => result("lp-c", 0.5),
    });
    await view.start();
    await view.setReveal(true);
    expect(root.textContent).toContain("Reveal requires the admin token.");
    expect(root.querySelector("figure.is-data")).toBeNull();
  });
});

describe("analysis artifacts", () => {
  it("renders an agreement table from the exported counts", () => {
    const table = renderAgreementTable({
      counts: [
        [11, 4],
        [2, 33],
      ],
      n: 50,
      conventional_level: 0.05,
      visual_level: 0.05,
      conventional_reject_rate: 0.3,
      visual_reject_rate: 0.26,
    });
    const cells = [...table.querySelectorAll("td")].map((c) => c.textContent);
    expect(cells).toEqual(["11", "4", "2", "33"]);
    expect(table.textContent).toContain("50 lineups");
  });

  it("embeds a power chart verbatim and rejects other content", () => {
    const slot = document.createElement("div");
    embedPowerSvg(slot, '<svg viewBox="0 0 10 10"><path d="M0 0"/></svg>');
    expect(slot.querySelector(".power-chart svg")).toBeTruthy();
    const bad = document.createElement("div");
    embedPowerSvg(bad, "<script>alert(1)</script>");
    expect(bad.querySelector("svg")).toBeNull();
    expect(bad.textContent).toContain("not an SVG document");
  });
});
