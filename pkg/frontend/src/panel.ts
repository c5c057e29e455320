/**
 * Review panel for one blocked run: the pending bug report's verdict and
 * findings, buttons that queue confirm/delete/re-rate actions locally, a
 * submit that POSTs the queued batch, and a release that lets the run
 * continue.
 *
 * Queued actions live only in the panel until submit; a successful submit
 * replaces the displayed report with the server's copy and clears the
 * queue. A conflict response means the run advanced without us (timeout
 * release, another operator), and the panel drops to read-only rather
 * than guessing.
 */

import type {
  ApiClient,
  DecisionItem,
  DecisionsBody,
  PendingReport,
} from "./api.js";
import { ApiError } from "./api.js";

export type PanelOptions = {
  /** Confirmation dialog, injectable for tests. Defaults to window.confirm. */
  confirmDialog?: (message: string) => boolean;
  onError?: (message: string) => void;
};

export class ReviewPanel {
  private pendingReport: PendingReport | null = null;
  private queued = new Map<number, DecisionItem>();
  private readOnly = false;
  private released = false;
  private readonly confirmDialog: (message: string) => boolean;
  private readonly onError: (message: string) => void;

  constructor(
    private readonly client: ApiClient,
    private readonly runId: string,
    private readonly root: HTMLElement,
    options: PanelOptions = {},
  ) {
    this.confirmDialog = options.confirmDialog ?? ((m) => window.confirm(m));
    this.onError = options.onError ?? (() => {});
  }

  async load(): Promise<void> {
    try {
      this.pendingReport = await this.client.getPendingReport(this.runId);
      this.readOnly = false;
    } catch (err) {
      if (err instanceof ApiError && err.isConflict) {
        this.readOnly = true;
      } else {
        this.onError(err instanceof Error ? err.message : String(err));
      }
    }
    this.render();
  }

  /** Queue one local action for a finding; nothing is sent until submit. */
  queueAction(findingIndex: number, item: DecisionItem): void {
    if (this.readOnly || this.released) {
      return;
    }
    this.queued.set(findingIndex, item);
    this.render();
  }

  clearAction(findingIndex: number): void {
    this.queued.delete(findingIndex);
    this.render();
  }

  /** The exact body the next submit will POST, for display and tests. */
  decisionsBody(): DecisionsBody | null {
    if (!this.pendingReport || this.queued.size === 0) {
      return null;
    }
    const decisions = [...this.queued.values()].sort(
      (a, b) => a.finding_index - b.finding_index,
    );
    return { report_index: this.pendingReport.report_index, decisions };
  }

  async submit(): Promise<void> {
    const body = this.decisionsBody();
    if (!body || this.readOnly || this.released) {
      return;
    }
    try {
      this.pendingReport = await this.client.postDecisions(this.runId, body);
      this.queued.clear();
    } catch (err) {
      if (err instanceof ApiError && err.isConflict) {
        this.readOnly = true;
      } else {
        // Queue is kept so the operator can retry or adjust.
        this.onError(err instanceof Error ? err.message : String(err));
      }
    }
    this.render();
  }

  async release(note?: string): Promise<void> {
    if (this.readOnly || this.released) {
      return;
    }
    const unreviewed = this.unreviewedCount();
    if (unreviewed > 0) {
      const message =
        `${unreviewed} finding(s) are still unreviewed. ` +
        "Release anyway and let them count as-is?";
      if (!this.confirmDialog(message)) {
        return;
      }
    }
    try {
      await this.client.postRelease(this.runId, note);
      this.released = true;
    } catch (err) {
      if (err instanceof ApiError && err.isConflict) {
        this.readOnly = true;
      } else {
        this.onError(err instanceof Error ? err.message : String(err));
      }
    }
    this.render();
  }

  get isReadOnly(): boolean {
    return this.readOnly;
  }

  get isReleased(): boolean {
    return this.released;
  }

  private unreviewedCount(): number {
    const report = this.pendingReport?.report;
    if (!report) {
      return 0;
    }
    return report.findings.filter(
      (f, i) => f.review_status === "unreviewed" && !this.queued.has(i),
    ).length;
  }

  render(): void {
    this.root.replaceChildren();
    this.root.className = "review-panel";

    if (this.readOnly) {
      const notice = document.createElement("p");
      notice.className = "panel-readonly";
      notice.textContent =
        "This run moved on; the report is shown read-only.";
      this.root.appendChild(notice);
    }
    if (!this.pendingReport) {
      if (!this.readOnly) {
        const empty = document.createElement("p");
        empty.className = "panel-empty";
        empty.textContent = "No report is waiting for review.";
        this.root.appendChild(empty);
      }
      return;
    }

    const { report } = this.pendingReport;
    const verdict = document.createElement("p");
    verdict.className = "panel-verdict";
    verdict.textContent = report.verdict_sentence;
    this.root.appendChild(verdict);

    report.findings.forEach((finding, index) => {
      this.root.appendChild(this.findingCard(finding, index));
    });

    const controls = document.createElement("div");
    controls.className = "panel-controls";

    const submit = document.createElement("button");
    submit.className = "submit-button";
    submit.textContent = `Submit ${this.queued.size} decision(s)`;
    submit.disabled =
      this.queued.size === 0 || this.readOnly || this.released;
    submit.addEventListener("click", () => void this.submit());
    controls.appendChild(submit);

    const release = document.createElement("button");
    release.className = "release-button";
    release.textContent = this.released ? "Released" : "Release run";
    release.disabled = this.readOnly || this.released;
    release.addEventListener("click", () => void this.release());
    controls.appendChild(release);

    this.root.appendChild(controls);
  }

  private findingCard(
    finding: PendingReport["report"]["findings"][number],
    index: number,
  ): HTMLElement {
    const card = document.createElement("div");
    card.className = `finding-card status-${finding.review_status}`;
    card.dataset.findingIndex = String(index);

    const head = document.createElement("div");
    head.className = "finding-head";
    head.textContent = `${finding.classification} · ${finding.severity}`;
    card.appendChild(head);

    const quote = document.createElement("blockquote");
    quote.className = "finding-quote";
    quote.textContent = finding.location_quote;
    card.appendChild(quote);

    const explanation = document.createElement("p");
    explanation.className = "finding-explanation";
    explanation.textContent = finding.explanation;
    card.appendChild(explanation);

    const queued = this.queued.get(index);
    if (queued) {
      const badge = document.createElement("span");
      badge.className = "queued-badge";
      badge.textContent =
        queued.action === "set_severity"
          ? `queued: set_severity ${queued.severity}`
          : `queued: ${queued.action}`;
      card.appendChild(badge);
    }

    if (this.readOnly || this.released) {
      return card;
    }

    const actions = document.createElement("div");
    actions.className = "finding-actions";

    const confirm = document.createElement("button");
    confirm.className = "action-confirm";
    confirm.textContent = "confirm";
    confirm.addEventListener("click", () =>
      this.queueAction(index, { finding_index: index, action: "confirm" }),
    );
    actions.appendChild(confirm);

    const del = document.createElement("button");
    del.className = "action-delete";
    del.textContent = "delete";
    del.addEventListener("click", () =>
      this.queueAction(index, { finding_index: index, action: "delete" }),
    );
    actions.appendChild(del);

    for (const severity of ["major", "minor"] as const) {
      const rate = document.createElement("button");
      rate.className = `action-severity-${severity}`;
      rate.textContent = severity;
      rate.addEventListener("click", () =>
        this.queueAction(index, {
          finding_index: index,
          action: "set_severity",
          severity,
        }),
      );
      actions.appendChild(rate);
    }

    card.appendChild(actions);
    return card;
  }
}
