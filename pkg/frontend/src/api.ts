/**
 * Typed client for the run-review HTTP API.
 *
 * Every shape here mirrors a server payload byte for byte; the UI renders
 * these fields as received and never recomputes pass/fail on its own. All
 * mutation goes through the two POST endpoints below, nothing else.
 */

export type RunSummary = {
  run_id: string;
  step: string;
  iteration: number;
  consecutive_passes: number;
  latest_verdict: string | null;
  pending_review: boolean;
};

export type RunDetail = RunSummary & {
  consecutive_major_fails: number;
  problem: { id: string; statement: string; hint: string | null };
  config: Record<string, unknown>;
  reports: number;
  terminal_reason: string | null;
  created_at: string;
};

export type Classification = "critical_error" | "justification_gap";
export type Severity = "major" | "minor" | "unrated";
export type ReviewStatus = "unreviewed" | "confirmed" | "deleted";

export type Finding = {
  location_quote: string;
  classification: Classification;
  explanation: string;
  severity: Severity;
  review_status: ReviewStatus;
};

export type BugReport = {
  verdict_sentence: string;
  verdict_kind: "correct" | "invalid" | "gaps_only" | "unparsed";
  findings: Finding[];
  raw: string;
};

export type PendingReport = {
  run_id: string;
  report_index: number;
  report: BugReport;
};

export type DecisionAction = "confirm" | "delete" | "set_severity";

export type DecisionItem = {
  finding_index: number;
  action: DecisionAction;
  severity?: "major" | "minor";
};

export type DecisionsBody = {
  report_index: number;
  decisions: DecisionItem[];
};

export type ReleaseResponse = { run_id: string; released: boolean };

/** One line of a run's event log, as streamed over SSE. */
export type StreamEvent = {
  run_id: string;
  sequence_no: number;
  timestamp: string;
  kind: string;
  payload: Record<string, unknown>;
};

export const TERMINAL_STEPS = new Set(["accepted", "rejected", "aborted", "failed"]);

/** Server-side failure, carrying the error envelope the API returns. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly detail: unknown = null,
  ) {
    super(message);
    this.name = "ApiError";
  }

  /** Conflicts mean the run moved on under us; the panel goes read-only. */
  get isConflict(): boolean {
    return this.status === 409;
  }
}

export type ClientOptions = {
  baseUrl?: string;
  token?: string | null;
};

async function raiseFromResponse(res: Response): Promise<never> {
  let code = "unknown";
  let message = `request failed with status ${res.status}`;
  let detail: unknown = null;
  try {
    const body = await res.json();
    if (body && typeof body.code === "string") {
      code = body.code;
      message = body.message ?? message;
      detail = body.detail ?? null;
    }
  } catch {
    // Non-JSON error body; keep the generic message.
  }
  throw new ApiError(res.status, code, message, detail);
}

export class ApiClient {
  private readonly base: string;
  private readonly token: string | null;

  constructor(options: ClientOptions = {}) {
    this.base = (options.baseUrl ?? "").replace(/\/+$/, "");
    this.token = options.token ?? null;
  }

  async listRuns(): Promise<RunSummary[]> {
    return this.get("/runs");
  }

  async getRun(runId: string): Promise<RunDetail> {
    return this.get(`/runs/${encodeURIComponent(runId)}`);
  }

  async getPendingReport(runId: string): Promise<PendingReport> {
    return this.get(`/runs/${encodeURIComponent(runId)}/report`);
  }

  async postDecisions(runId: string, body: DecisionsBody): Promise<PendingReport> {
    return this.post(`/runs/${encodeURIComponent(runId)}/decisions`, body);
  }

  async postRelease(runId: string, note?: string): Promise<ReleaseResponse> {
    const body = note ? { note } : {};
    return this.post(`/runs/${encodeURIComponent(runId)}/release`, body);
  }

  /**
   * Subscribe to a run's event stream. The server sends the log header
   * first, then one named event per log line, and closes after the
   * terminal event. Returns a disposer.
   */
  subscribeEvents(
    runId: string,
    onEvent: (kind: string, event: StreamEvent) => void,
    onError?: () => void,
  ): () => void {
    const url = `${this.base}/runs/${encodeURIComponent(runId)}/events`;
    const source = new EventSource(url);
    const kinds = [
      "header",
      "step_entered",
      "prompt_sent",
      "response_received",
      "report_parsed",
      "review_decision_applied",
      "decision_made",
      "terminal",
    ];
    for (const kind of kinds) {
      source.addEventListener(kind, (raw) => {
        const data = JSON.parse((raw as MessageEvent).data) as StreamEvent;
        onEvent(kind, data);
        if (kind === "terminal") {
          source.close();
        }
      });
    }
    source.onerror = () => {
      source.close();
      onError?.();
    };
    return () => source.close();
  }

  private async get<T>(path: string): Promise<T> {
    const res = await fetch(this.base + path);
    if (!res.ok) {
      await raiseFromResponse(res);
    }
    return res.json();
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const headers: Record<string, string> = {
      "content-type": "application/json",
    };
    if (this.token) {
      headers["authorization"] = `Bearer ${this.token}`;
    }
    const res = await fetch(this.base + path, {
      method: "POST",
      headers,
      body: JSON.stringify(body),
    });
    if (!res.ok) {
      await raiseFromResponse(res);
    }
    return res.json();
  }
}
