/** Typed client for the essence-coach chat service HTTP API.
 *
 * The UI is a pure API consumer: no retrieval or scoring happens here,
 * every method maps one-to-one onto a service endpoint.
 */

export interface Persona {
  role: string | null;
  event: string | null;
  word_limit: [number, number] | null;
}

export interface SourceCard {
  chunk_id: string;
  doc_id: string;
  heading_path: string[];
  fused_score: number;
  rank: number;
}

export interface MessageReply {
  reply: string;
  contexts: SourceCard[];
  latency_ms: number;
  retrieval_fallback: boolean;
}

export interface TranscriptTurn {
  speaker: "user" | "assistant";
  text: string;
  timestamp: number;
  contexts: SourceCard[];
  latency_ms: number | null;
  error: boolean;
  retrieval_fallback: boolean;
}

export interface SessionSummary {
  session_id: string;
  persona: Persona;
  rag_enabled: boolean;
  created_at: number;
  updated_at: number;
  turn_count: number;
}

export interface Transcript extends SessionSummary {
  turns: TranscriptTurn[];
  summaries: string[];
}

export interface Health {
  status: string;
  corpus_chunks: number;
  index_ready: boolean;
}

export interface PersonaPatch {
  role?: string | null;
  event?: string | null;
  word_limit?: [number, number] | null;
}

export interface CreateSessionOptions {
  persona?: PersonaPatch;
  rag_enabled?: boolean;
}

export interface SessionPatch {
  persona?: PersonaPatch;
  rag_enabled?: boolean;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly errorCode: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async health(): Promise<Health> {
    return this.request("GET", "/api/health");
  }

  async createSession(options: CreateSessionOptions = {}): Promise<SessionSummary> {
    return this.request("POST", "/api/sessions", options);
  }

  async listSessions(): Promise<SessionSummary[]> {
    return this.request("GET", "/api/sessions");
  }

  async getSession(sessionId: string): Promise<Transcript> {
    return this.request("GET", `/api/sessions/${encodeURIComponent(sessionId)}`);
  }

  async patchSession(sessionId: string, patch: SessionPatch): Promise<SessionSummary> {
    return this.request("PATCH", `/api/sessions/${encodeURIComponent(sessionId)}`, patch);
  }

  async deleteSession(sessionId: string): Promise<void> {
    await this.request("DELETE", `/api/sessions/${encodeURIComponent(sessionId)}`);
  }

  async sendMessage(sessionId: string, text: string): Promise<MessageReply> {
    return this.request(
      "POST",
      `/api/sessions/${encodeURIComponent(sessionId)}/messages`,
      { text },
    );
  }

  async summarize(sessionId: string): Promise<{ summary: string | null }> {
    return this.request(
      "POST",
      `/api/sessions/${encodeURIComponent(sessionId)}/summarize`,
    );
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (cause) {
      throw new ApiError(0, "network_error", `service unreachable: ${String(cause)}`);
    }
    if (response.status === 204) {
      return undefined as T;
    }
    const payload = await response.json().catch(() => null);
    if (!response.ok) {
      const code =
        payload && typeof payload.error_code === "string"
          ? payload.error_code
          : "unknown_error";
      const message =
        payload && typeof payload.message === "string"
          ? payload.message
          : `request failed with status ${response.status}`;
      throw new ApiError(response.status, code, message);
    }
    return payload as T;
  }
}
