// Entry point: hash routing between the participant flow and the
// analyst dashboard. The participant id is kept in localStorage so a
// reload resumes the same block at the same lineup.

import { Client } from "./api.js";
import { EvaluateView } from "./evaluate.js";
import { ResultsView } from "./results.js";

const PARTICIPANT_KEY = "lineupdx.participant";

export function currentParticipant(): string {
  return localStorage.getItem(PARTICIPANT_KEY) ?? "";
}

export function setParticipant(id: string): void {
  localStorage.setItem(PARTICIPANT_KEY, id);
}

export async function route(root: HTMLElement, client: Client): Promise<void> {
  const hash = location.hash.replace(/^#\/?/, "");
  const [page, studyId] = hash.split("/");
  root.textContent = "";
  if (page === "evaluate" && studyId) {
    const participant = currentParticipant();
    if (!participant) {
      renderParticipantForm(root, studyId);
      return;
    }
    const view = new EvaluateView(root, client, studyId, participant);
    await view.start();
    return;
  }
  if (page === "results" && studyId) {
    const view = new ResultsView(root, client, studyId, "");
    await view.start();
    return;
  }
  renderLanding(root);
}

function renderParticipantForm(root: HTMLElement, studyId: string): void {
  const box = document.createElement("div");
  box.className = "participant-form";
  const label = document.createElement("label");
  label.textContent = "Your participant id ";
  const input = document.createElement("input");
  input.type = "text";
  input.className = "participant";
  label.append(input);
  const go = document.createElement("button");
  go.type = "button";
  go.textContent = "Start";
  go.addEventListener("click", () => {
    const id = input.value.trim();
    if (!id) return;
    setParticipant(id);
    location.hash = `#/evaluate/${studyId}`;
    location.reload();
  });
  box.append(label, go);
  root.append(box);
}

function renderLanding(root: HTMLElement): void {
  const box = document.createElement("div");
  box.className = "landing";
  const h = document.createElement("h1");
  h.textContent = "Lineup evaluation";
  const p = document.createElement("p");
  p.textContent =
    "Open #/evaluate/<study> to judge lineups or #/results/<study> " +
    "to review a study.";
  box.append(h, p);
  root.append(box);
}

export function main(): void {
  const root = document.getElementById("app");
  if (!root) return;
  const client = new Client("");
  const go = () => {
    void route(root, client);
  };
  window.addEventListener("hashchange", go);
  go();
}

// Only auto-start in a real page; tests drive route() directly.
if (typeof document !== "undefined" && document.getElementById("app")) {
  main();
}
