/**
 * Dashboard bootstrap: load the run board, subscribe every visible run's
 * event stream so rows update live, and open the review panel when a row
 * is clicked. If the API is unreachable a banner with a retry button
 * appears; the board keeps whatever it already has.
 */

import { ApiClient } from "./api.js";
import { renderBoard } from "./board.js";
import { ReviewPanel } from "./panel.js";
import { applyStreamEvent, emptyBoard, seedRows } from "./state.js";

export function startApp(root: HTMLElement): void {
  const params = new URLSearchParams(window.location.search);
  const client = new ApiClient({
    baseUrl: params.get("api") ?? "",
    token: params.get("token"),
  });

  const banner = document.createElement("div");
  banner.className = "error-banner";
  banner.hidden = true;
  root.appendChild(banner);

  const boardRoot = document.createElement("div");
  boardRoot.className = "board-root";
  root.appendChild(boardRoot);

  const panelRoot = document.createElement("div");
  panelRoot.className = "panel-root";
  root.appendChild(panelRoot);

  const model = emptyBoard();
  const disposers = new Map<string, () => void>();

  const showError = (message: string): void => {
    banner.hidden = false;
    banner.replaceChildren();
    banner.appendChild(document.createTextNode(message + " "));
    const retry = document.createElement("button");
    retry.textContent = "retry";
    retry.addEventListener("click", () => void refresh());
    banner.appendChild(retry);
  };

  const draw = (): void => {
    renderBoard(boardRoot, model, { onOpenRun: openPanel });
  };

  const follow = (runId: string): void => {
    if (disposers.has(runId)) {
      return;
    }
    const dispose = client.subscribeEvents(runId, (_kind, event) => {
      if (applyStreamEvent(model, event)) {
        draw();
      }
    });
    disposers.set(runId, dispose);
  };

  const refresh = async (): Promise<void> => {
    try {
      const rows = await client.listRuns();
      banner.hidden = true;
      seedRows(model, rows);
      draw();
      for (const row of rows) {
        follow(row.run_id);
      }
    } catch {
      showError("Cannot reach the run API.");
    }
  };

  const openPanel = (runId: string): void => {
    const panel = new ReviewPanel(client, runId, panelRoot, {
      onError: showError,
    });
    void panel.load();
  };

  void refresh();
}
