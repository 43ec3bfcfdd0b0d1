// @vitest-environment jsdom
// End-to-end checks against a real evaluation service: a scripted
// browser session completes a 3-lineup block (criterion: UI round
// trip), and the dashboard's figures are recomputed independently from
// the exported log via the command-line tools (criterion: dashboard
// consistency).
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import fs from "node:fs";
import net from "node:net";
import os from "node:os";
import path from "node:path";
import { fileURLToPath } from "node:url";

import { Client } from "./../src/api.js";
import { EvaluateView } from "../src/evaluate.js";
import { ResultsView } from "../src/results.js";

const HERE = path.dirname(fileURLToPath(import.meta.url));
const DIST = path.resolve(HERE, "..", "dist");
const ADMIN = "uitok-acceptance";

let tmp: string;
let server: ChildProcess | null = null;
let base = "";
let api = "";
const bundleDirs: Record<string, string> = {};
let bundleIds: string[] = [];

function cli(...argv: string[]): string {
  const proc = spawnSync("python3", ["-m", "lineupdx", ...argv], {
    encoding: "utf8",
  });
  if (proc.status !== 0) {
    throw new Error(`lineupdx ${argv[0]} failed: ${proc.stderr}`);
  }
  return proc.stdout;
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = net.createServer();
    srv.on("error", reject);
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address() as net.AddressInfo;
      srv.close(() => resolve(addr.port));
    });
  });
}

async function until(
  pred: () => boolean | Promise<boolean>,
  ms = 30000,
): Promise<void> {
  const end = Date.now() + ms;
  for (;;) {
    if (await pred()) return;
    if (Date.now() > end) throw new Error("condition not reached in time");
    await new Promise((r) => setTimeout(r, 50));
  }
}

async function post(url: string, body: unknown): Promise<Response> {
  return fetch(url, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
}

beforeAll(async () => {
  if (!fs.existsSync(path.join(DIST, "index.html"))) {
    throw new Error("dist/ is missing; `npm run build` must run first");
  }
  tmp = fs.mkdtempSync(path.join(os.tmpdir(), "lineupdx-ui-"));
  const bundleRoot = path.join(tmp, "bundles");
  const scenarios: [string, string[]][] = [
    ["alpha", ["--departure", "nonlinear", "--j", "2", "--sigma", "0.5"]],
    ["beta", ["--departure", "nonlinear", "--j", "3", "--sigma", "0.5"]],
    ["gamma", ["--departure", "heteroskedastic", "--a", "0", "--b", "1.0"]],
  ];
  scenarios.forEach(([name, flags], i) => {
    const sim = path.join(tmp, `sim_${name}`);
    cli(
      "simulate", ...flags, "--n", "80", "--dist", "uniform",
      "--seed", String(5100 + i), "--out", sim,
    );
    const out = path.join(bundleRoot, name);
    const lastLine = cli(
      "lineup", sim, "--seed", String(5200 + i), "--out", out,
    )
      .trim()
      .split("\n")
      .at(-1);
    const made = JSON.parse(lastLine ?? "{}") as { id: string };
    bundleDirs[made.id] = out;
  });
  bundleIds = Object.keys(bundleDirs);

  const port = await freePort();
  base = `http://127.0.0.1:${port}`;
  api = `${base}/api/studies`;
  server = spawn(
    "python3",
    [
      "-m", "lineupdx", "serve",
      "--host", "127.0.0.1", "--port", String(port),
      "--data-dir", path.join(tmp, "studies"),
      "--bundle-root", bundleRoot,
      "--token", ADMIN,
      "--webui", DIST,
    ],
    { stdio: "ignore" },
  );
  await until(async () => {
    try {
      const resp = await fetch(`${base}/api/studies/nope/export`);
      return resp.status === 404;
    } catch {
      return false;
    }
  });
});

afterAll(async () => {
  if (server) {
    server.kill("SIGTERM");
    await new Promise((resolve) => {
      server?.once("exit", resolve);
      setTimeout(resolve, 10000);
    });
  }
  if (tmp) fs.rmSync(tmp, { recursive: true, force: true });
});

function mountRoot(): HTMLElement {
  const node = document.createElement("div");
  document.body.append(node);
  return node;
}

describe("UI round trip", () => {
  it("completes a 3-lineup block and the export matches field-for-field", async () => {
    const created = await post(api, {
      id: "crit11",
      bundles: bundleIds.map((id) => ({ id })),
    });
    expect(created.status).toBe(201);

    const client = new Client(base);
    const root = mountRoot();
    const view = new EvaluateView(root, client, "crit11", "pp-ui-1");
    await view.start();

    const pages: string[] = [];
    const expected: {
      lineup_id: string;
      participant_id: string;
      selections: number[];
      reason: string;
      rating: number;
    }[] = [];

    const panel = (pos: number) => {
      const fig = root.querySelector<HTMLElement>(
        `figure[data-panel="${pos}"]`,
      );
      if (!fig) throw new Error(`no panel ${pos}`);
      return fig;
    };
    const reasonBox = () =>
      root.querySelector<HTMLTextAreaElement>("textarea.reason");
    const submitBtn = () =>
      root.querySelector<HTMLButtonElement>("button.submit");
    const submitAndWait = async () => {
      const before = view.state.lineupId;
      expect(submitBtn()?.disabled).toBe(false);
      submitBtn()?.click();
      await until(() => view.state.done || view.state.lineupId !== before);
    };

    // Lineup 1: multi-select {3, 7} with a reason and a rating of 4.
    expect(root.querySelectorAll("figure.panel").length).toBe(20);
    expect(root.textContent).toContain("Lineup 1 of 3");
    pages.push(root.innerHTML);
    panel(3).click();
    panel(7).click();
    const area1 = reasonBox();
    expect(submitBtn()?.disabled).toBe(true);
    if (area1) {
      area1.value = "two panels fan out";
      area1.dispatchEvent(new Event("input", { bubbles: true }));
    }
    root
      .querySelector<HTMLInputElement>('input[name="rating"][value="4"]')
      ?.click();
    const first = view.state.lineupId;
    expected.push({
      lineup_id: first ?? "",
      participant_id: "pp-ui-1",
      selections: [3, 7],
      reason: "two panels fan out",
      rating: 4,
    });
    await submitAndWait();

    // Reloading mid-block restores the same assignment, not a new one.
    expect(root.textContent).toContain("Lineup 2 of 3");
    const resumed = new EvaluateView(
      mountRoot(), client, "crit11", "pp-ui-1",
    );
    await resumed.start();
    expect(resumed.state.lineupId).toBe(view.state.lineupId);
    expect(resumed.state.token).toBe(view.state.token);

    // Lineup 2: explicit zero-selection; the service normalizes it to
    // the full panel set in the stored record.
    pages.push(root.innerHTML);
    root.querySelector<HTMLButtonElement>("button.none-btn")?.click();
    expect(reasonBox()?.disabled).toBe(true);
    expected.push({
      lineup_id: view.state.lineupId ?? "",
      participant_id: "pp-ui-1",
      selections: Array.from({ length: 20 }, (_, i) => i + 1),
      reason: "",
      rating: 3,
    });
    await submitAndWait();

    // Lineup 3: a single reasoned selection at the default rating.
    expect(root.textContent).toContain("Lineup 3 of 3");
    pages.push(root.innerHTML);
    panel(12).click();
    const area3 = reasonBox();
    if (area3) {
      area3.value = "residuals bend upward";
      area3.dispatchEvent(new Event("input", { bubbles: true }));
    }
    expected.push({
      lineup_id: view.state.lineupId ?? "",
      participant_id: "pp-ui-1",
      selections: [12],
      reason: "residuals bend upward",
      rating: 3,
    });
    await submitAndWait();

    expect(view.state.done).toBe(true);
    expect(root.textContent).toContain("All done");
    expect(root.textContent).toContain("3 of 3");
    pages.push(root.innerHTML);

    // The three lineups of the block are all distinct.
    expect(new Set(expected.map((e) => e.lineup_id)).size).toBe(3);

    // Leak scan over every rendered page of the session.
    for (const html of pages) {
      for (const needle of ["data_position", "factors", "seed"]) {
        expect(html).not.toContain(needle);
      }
    }

    // Exported log lines match the submissions field-for-field.
    const exported = await fetch(`${api}/crit11/export?format=jsonl`);
    expect(exported.status).toBe(200);
    const lines = (await exported.text()).trim().split("\n");
    expect(lines.length).toBe(3);
    lines.forEach((line, i) => {
      const record = JSON.parse(line) as Record<string, unknown>;
      const want = expected[i];
      expect(record["lineup_id"]).toBe(want?.lineup_id);
      expect(record["participant_id"]).toBe(want?.participant_id);
      expect(record["selections"]).toEqual(want?.selections);
      expect(record["reason"]).toBe(want?.reason);
      expect(record["rating"]).toBe(want?.rating);
      expect(typeof record["timestamp"]).toBe("string");
    });
  });

  it("serves the built interface as its static front page", async () => {
    const page = await fetch(`${base}/`);
    expect(page.status).toBe(200);
    const html = await page.text();
    expect(html).toContain('id="app"');
    expect(html).toContain("app.js");
    const script = await fetch(`${base}/app.js`);
    expect(script.status).toBe(200);
    expect(await script.text()).toContain("hashchange");
  });
});

describe("dashboard consistency", () => {
  it("matches a CLI recomputation from the same export", async () => {
    const created = await post(api, {
      id: "crit12",
      bundles: bundleIds.map((id) => ({ id })),
      mode: "AlphaAdjusted",
      alpha: 1.0,
      seed: 9900,
      replications: 100000,
    });
    expect(created.status).toBe(201);

    // Scripted judges, driven straight through the HTTP API.
    for (let p = 0; p < 4; p += 1) {
      const pid = `judge-${p}`;
      for (;;) {
        const step = (await (
          await fetch(`${api}/crit12/next?participant=${pid}`)
        ).json()) as {
          done?: boolean;
          lineup_id?: string;
          token?: string;
        };
        if (step.done) break;
        const idx = bundleIds.indexOf(step.lineup_id ?? "");
        const resp = await post(`${api}/crit12/evaluations`, {
          participant: pid,
          lineup_id: step.lineup_id,
          token: step.token,
          selections: [((p * 5 + idx * 3) % 20) + 1],
          reason: "scripted pick",
          rating: 3,
        });
        expect(resp.status).toBe(201);
      }
    }

    const client = new Client(base);
    const root = mountRoot();
    const view = new ResultsView(root, client, "crit12", ADMIN);
    await view.start();
    await view.setReveal(true);

    const log = path.join(tmp, "crit12.jsonl");
    fs.writeFileSync(
      log,
      await (await fetch(`${api}/crit12/export?format=jsonl`)).text(),
    );

    let checked = 0;
    for (const id of bundleIds) {
      const row = root.querySelector<HTMLElement>(`tr[data-lineup="${id}"]`);
      expect(row).toBeTruthy();
      const kText = row?.querySelector(".k-judges")?.textContent ?? "";
      const cText = row?.querySelector(".c-obs")?.textContent ?? "";
      const pText = row?.querySelector(".p-value")?.textContent ?? "";

      const verdict = JSON.parse(
        cli(
          "pvalue", "--bundle", bundleDirs[id] ?? "", "--log", log,
          "--mode", "AlphaAdjusted", "--alpha", "1.0",
          "--replications", "100000", "--seed", String(7000 + checked),
        )
          .trim()
          .split("\n")
          .at(-1) ?? "{}",
      ) as { K: number; c_obs: number; p_value: number; mc_se: number };

      expect(Number(kText)).toBe(verdict.K);
      expect(Number(cText)).toBe(verdict.c_obs);

      const state = view.rows.get(id);
      const body = state?.kind === "result" ? state.result : null;
      expect(body).toBeTruthy();
      const tolerance =
        3 * ((body?.mc_se ?? 0) + verdict.mc_se) + 1e-4;
      expect(Math.abs(Number(pText) - verdict.p_value)).toBeLessThanOrEqual(
        tolerance,
      );
      // The row flag agrees with the recomputed verdict when the
      // p-value is not sitting on the 0.05 boundary.
      const flagged = row?.textContent?.includes("rejected by visual test");
      if (Math.abs(verdict.p_value - 0.05) > tolerance) {
        expect(flagged).toBe(verdict.p_value <= 0.05);
      }
      checked += 1;
    }
    expect(checked).toBe(3);

    // Reveal grants through the admin token and outlines one data
    // panel per lineup.
    const grids = root.querySelectorAll(".reveal-grid");
    expect(grids.length).toBe(3);
    grids.forEach((grid) => {
      expect(grid.querySelectorAll("figure.is-data").length).toBe(1);
    });
  });
});
