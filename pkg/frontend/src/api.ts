// Typed client over the session API. No elicitation logic lives here: the
// server decides everything, the client only transports.

export interface GranuleOption {
  index: number;
  label: string;
  attributes: Record<string, unknown>;
  candidates: number;
}

export interface ProviderView {
  provider_id: string;
  match_score: number;
  attributes: Record<string, string>;
}

export type ReplyKind = "chat_deflection" | "question" | "final_recommendation";

export interface Reply {
  schema_version: number;
  kind: ReplyKind;
  text: string;
  options: GranuleOption[];
  services: ProviderView[];
  end_tag: number;
  round: number;
}

export interface SessionResponse {
  session_id: string | null;
  reply: Reply;
}

export interface HealthResponse {
  status: string;
  service_types: string[];
  strategy: string;
}

export type TurnInput = { utterance: string } | { option: number };

type FetchLike = typeof fetch;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(private baseUrl: string, private fetchFn: FetchLike = fetch) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  async health(): Promise<HealthResponse> {
    return this.request("GET", "/health");
  }

  async createSession(utterance: string): Promise<SessionResponse> {
    return this.request("POST", "/sessions", { utterance });
  }

  async postTurn(sessionId: string, input: TurnInput): Promise<Reply> {
    try {
      return await this.request("POST", `/sessions/${sessionId}/turns`, input);
    } catch (err) {
      // another turn may still be in flight; one retry is enough for a UI
      if (err instanceof ApiError && err.status === 409) {
        await new Promise((resolve) => setTimeout(resolve, 150));
        return this.request("POST", `/sessions/${sessionId}/turns`, input);
      }
      throw err;
    }
  }

  private async request(method: string, path: string, body?: unknown): Promise<any> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const data = await response.json();
        if (data && data.detail) detail = String(data.detail);
      } catch {
        // keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return response.json();
  }
}
