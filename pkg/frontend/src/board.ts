/**
 * DOM rendering for the run board: an "active" section with
 * pending-review runs flagged and sorted first, and a "finished" section
 * for terminal runs. Rendering is a pure function of the board model;
 * callers re-render after seeding rows or applying a stream event.
 */

import type { RunSummary } from "./api.js";
import type { BoardModel } from "./state.js";
import { partition } from "./state.js";

export type BoardCallbacks = {
  onOpenRun?: (runId: string) => void;
};

function rowElement(row: RunSummary, callbacks: BoardCallbacks): HTMLElement {
  const el = document.createElement("div");
  el.className = "run-row";
  el.dataset.runId = row.run_id;
  if (row.pending_review) {
    el.classList.add("pending");
  }

  const id = document.createElement("span");
  id.className = "run-id";
  id.textContent = row.run_id;
  el.appendChild(id);

  const step = document.createElement("span");
  step.className = `run-step step-${row.step}`;
  step.textContent = row.step;
  el.appendChild(step);

  const counters = document.createElement("span");
  counters.className = "run-counters";
  counters.textContent = `iter ${row.iteration} · passes ${row.consecutive_passes}`;
  el.appendChild(counters);

  const verdict = document.createElement("span");
  verdict.className = "run-verdict";
  verdict.textContent = row.latest_verdict ?? "";
  el.appendChild(verdict);

  if (row.pending_review) {
    const flag = document.createElement("span");
    flag.className = "review-flag";
    flag.textContent = "needs review";
    el.appendChild(flag);
  }

  el.addEventListener("click", () => callbacks.onOpenRun?.(row.run_id));
  return el;
}

function section(title: string, rows: RunSummary[], callbacks: BoardCallbacks): HTMLElement {
  const el = document.createElement("section");
  el.className = `board-section board-${title}`;
  const heading = document.createElement("h2");
  heading.textContent = title;
  el.appendChild(heading);
  for (const row of rows) {
    el.appendChild(rowElement(row, callbacks));
  }
  return el;
}

export function renderBoard(
  root: HTMLElement,
  model: BoardModel,
  callbacks: BoardCallbacks = {},
): void {
  const view = partition(model);
  root.replaceChildren();

  if (view.active.length === 0 && view.finished.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "No runs yet. Start one with the CLI and it will appear here.";
    root.appendChild(empty);
    return;
  }

  root.appendChild(section("active", view.active, callbacks));
  root.appendChild(section("finished", view.finished, callbacks));
}
