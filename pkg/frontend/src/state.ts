/**
 * Run-board model: a map of summary rows kept current by applying stream
 * events, so the board never re-fetches to learn what it was just told.
 *
 * Rows are seeded from GET /runs and then patched field by field from the
 * event stream; every patched value is copied from an API payload, never
 * derived client-side.
 */

import type { RunSummary, StreamEvent } from "./api.js";
import { TERMINAL_STEPS } from "./api.js";

export type BoardModel = {
  rows: Map<string, RunSummary>;
};

export type BoardView = {
  /** Live runs, pending-review first, then by run id. */
  active: RunSummary[];
  /** Runs that reached a terminal step, by run id. */
  finished: RunSummary[];
};

export function emptyBoard(): BoardModel {
  return { rows: new Map() };
}

export function seedRows(model: BoardModel, rows: RunSummary[]): void {
  model.rows.clear();
  for (const row of rows) {
    model.rows.set(row.run_id, { ...row });
  }
}

/**
 * Fold one stream event into its run's row. Returns true when the row
 * changed, so callers know a re-render is due. Events for unknown runs
 * create the row lazily (a run started after the board loaded).
 */
export function applyStreamEvent(model: BoardModel, event: StreamEvent): boolean {
  if (event.kind === "header") {
    return false;
  }
  let row = model.rows.get(event.run_id);
  if (!row) {
    row = {
      run_id: event.run_id,
      step: "generate",
      iteration: 0,
      consecutive_passes: 0,
      latest_verdict: null,
      pending_review: false,
    };
    model.rows.set(event.run_id, row);
  }
  const payload = event.payload;
  switch (event.kind) {
    case "step_entered": {
      const step = payload["step"] as string;
      row.step = step;
      row.pending_review = step === "review";
      return true;
    }
    case "report_parsed": {
      const report = payload["report"] as { verdict_kind?: string } | undefined;
      if (report && typeof report.verdict_kind === "string") {
        row.latest_verdict = report.verdict_kind;
        return true;
      }
      return false;
    }
    case "decision_made": {
      row.iteration = payload["iteration"] as number;
      row.consecutive_passes = payload["consecutive_passes"] as number;
      return true;
    }
    case "terminal": {
      row.step = payload["terminal"] as string;
      row.iteration = payload["iterations"] as number;
      row.pending_review = false;
      return true;
    }
    default:
      return false;
  }
}

export function isFinished(row: RunSummary): boolean {
  return TERMINAL_STEPS.has(row.step);
}

export function partition(model: BoardModel): BoardView {
  const active: RunSummary[] = [];
  const finished: RunSummary[] = [];
  for (const row of model.rows.values()) {
    (isFinished(row) ? finished : active).push(row);
  }
  active.sort((a, b) => {
    if (a.pending_review !== b.pending_review) {
      return a.pending_review ? -1 : 1;
    }
    return a.run_id.localeCompare(b.run_id);
  });
  finished.sort((a, b) => a.run_id.localeCompare(b.run_id));
  return { active, finished };
}
