/** Typed client for the restoration service HTTP API. */

export interface GapSpan {
  start: number;
  length: number;
}

export interface HypothesisView {
  text: string;
  log_prob: number;
  /** Scaled attention, rows = decode steps, columns = window characters. */
  attention: number[][];
}

export interface ProposeResponse {
  gap: GapSpan;
  window_start: number;
  window: string;
  hypotheses: HypothesisView[];
}

export interface AcceptedStep {
  start: number;
  length: number;
  text: string;
  log_prob: number | null;
  ts: number;
}

export interface SessionView {
  id: string;
  text: string;
  initial_text: string;
  model: string;
  history: AcceptedStep[];
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private fetchFn: FetchLike,
    private baseUrl: string = "",
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    let resp: Response;
    try {
      resp = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `network failure: ${String(err)}`);
    }
    const payload = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const detail = typeof payload?.detail === "string" ? payload.detail : resp.statusText;
      throw new ApiError(resp.status, detail);
    }
    return payload as T;
  }

  createSession(text: string): Promise<{ id: string }> {
    return this.request("POST", "/v1/sessions", { text });
  }

  getSession(id: string): Promise<SessionView> {
    return this.request("GET", `/v1/sessions/${id}`);
  }

  propose(id: string, start: number, length: number, beamWidth?: number, topK?: number): Promise<ProposeResponse> {
    return this.request("POST", `/v1/sessions/${id}/propose`, {
      start,
      length,
      beam_width: beamWidth ?? null,
      top_k: topK ?? null,
    });
  }

  accept(id: string, start: number, length: number, text: string): Promise<SessionView> {
    return this.request("POST", `/v1/sessions/${id}/accept`, { start, length, text });
  }

  health(): Promise<{ status: string; model: string }> {
    return this.request("GET", "/v1/health");
  }
}
