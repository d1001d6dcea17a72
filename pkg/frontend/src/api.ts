import type {
  ApiTurn,
  DatabaseInfo,
  SessionCreated,
  TranscriptView,
} from "./types.js";

export class GatewayError extends Error {
  kind: string;
  status: number;

  constructor(status: number, kind: string, message: string) {
    super(message);
    this.kind = kind;
    this.status = status;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseOrThrow<T>(resp: Response): Promise<T> {
  const body = await resp.json();
  if (!resp.ok || (body && body.error)) {
    const err = body?.error ?? { kind: "http_error", message: `HTTP ${resp.status}` };
    throw new GatewayError(resp.status, err.kind, err.message);
  }
  return body as T;
}

export class GatewayClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async listDatabases(): Promise<DatabaseInfo[]> {
    return parseOrThrow(await this.fetchImpl(this.url("/api/databases")));
  }

  async createSession(dbId: string): Promise<SessionCreated> {
    const resp = await this.fetchImpl(this.url("/api/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ db_id: dbId }),
    });
    return parseOrThrow(resp);
  }

  async sendMessage(
    sessionId: string,
    question: string,
    withTrace = false,
  ): Promise<ApiTurn> {
    const suffix = withTrace ? "?trace=true" : "";
    const resp = await this.fetchImpl(
      this.url(`/api/sessions/${sessionId}/messages${suffix}`),
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ question }),
      },
    );
    return parseOrThrow(resp);
  }

  async getTranscript(sessionId: string): Promise<TranscriptView> {
    return parseOrThrow(await this.fetchImpl(this.url(`/api/sessions/${sessionId}`)));
  }
}
