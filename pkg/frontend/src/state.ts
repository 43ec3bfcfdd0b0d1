// Session state for one participant working through a block.
// Kept free of DOM concerns so the submit-enablement rule is testable
// on its own.

import type { NextStep, Panel, Progress, SubmitBody } from "./api.js";

export class SessionState {
  participant: string;
  lineupId: string | null = null;
  token: string | null = null;
  m = 0;
  panels: Panel[] = [];
  progress: Progress = { completed: 0, total: 0 };
  done = false;

  selections = new Set<number>();
  reason = "";
  rating = 3;
  none = false;

  constructor(participant: string) {
    this.participant = participant;
  }

  loadStep(step: NextStep): void {
    if (step.done) {
      this.done = true;
      this.lineupId = null;
      this.token = null;
      this.panels = [];
      this.progress = { completed: step.completed, total: step.total };
      return;
    }
    this.done = false;
    this.lineupId = step.lineup_id;
    this.token = step.token;
    this.m = step.m;
    this.panels = step.panels;
    this.progress = step.progress;
    this.resetResponse();
  }

  resetResponse(): void {
    this.selections.clear();
    this.reason = "";
    this.rating = 3;
    this.none = false;
  }

  // Selecting a panel and declaring "none are different" are mutually
  // exclusive answers, so each clears the other.
  togglePanel(position: number): void {
    if (position < 1 || position > this.m) return;
    this.none = false;
    if (this.selections.has(position)) {
      this.selections.delete(position);
    } else {
      this.selections.add(position);
    }
  }

  chooseNone(): void {
    this.none = true;
    this.selections.clear();
    this.reason = "";
  }

  setReason(text: string): void {
    this.reason = text;
  }

  setRating(value: number): void {
    if (value >= 1 && value <= 5) this.rating = Math.trunc(value);
  }

  // Submit is allowed once the answer is complete: either at least one
  // panel is picked and a reason is given, or the participant has
  // explicitly said none stand out.
  canSubmit(): boolean {
    if (this.done || this.lineupId === null) return false;
    if (this.none) return true;
    return this.selections.size > 0 && this.reason.trim().length > 0;
  }

  submitBody(): SubmitBody {
    if (!this.canSubmit() || this.lineupId === null || this.token === null) {
      throw new Error("response is not complete");
    }
    return {
      participant: this.participant,
      lineup_id: this.lineupId,
      token: this.token,
      selections: [...this.selections].sort((a, b) => a - b),
      reason: this.none ? "" : this.reason.trim(),
      rating: this.rating,
    };
  }
}
