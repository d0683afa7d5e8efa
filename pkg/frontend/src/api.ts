import {
  ProjectDraft,
  ProjectRow,
  ProjectSummary,
  StatusSnapshot,
} from "./types.js";

/**
 * Error raised for any non-2xx reply. The server wraps failures in
 * {"error": {"code", "message", "details"?}}; code and details are kept
 * so callers can branch on them (credential failures, unknown projects).
 */
export class ApiError extends Error {
  readonly code: string;
  readonly status: number;
  readonly details: Record<string, unknown>;

  constructor(
    code: string,
    message: string,
    status: number,
    details: Record<string, unknown> = {},
  ) {
    super(message);
    this.name = "ApiError";
    this.code = code;
    this.status = status;
    this.details = details;
  }
}

async function toApiError(reply: Response): Promise<ApiError> {
  let code = "HttpError";
  let message = `request failed with status ${reply.status}`;
  let details: Record<string, unknown> = {};
  try {
    const body = (await reply.json()) as {
      error?: { code?: string; message?: string; details?: Record<string, unknown> };
    };
    if (body && body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
      details = body.error.details ?? {};
    }
  } catch {
    // Non-JSON body (static 404 page, proxy error); keep the fallback text.
  }
  return new ApiError(code, message, reply.status, details);
}

/** Thin client for the coordination server. Holds at most a session token. */
export class ApiClient {
  session = "";

  constructor(private baseUrl = "") {}

  private headers(): Record<string, string> {
    const out: Record<string, string> = {};
    if (this.session) {
      out["X-Session"] = this.session;
    }
    return out;
  }

  private async request(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<unknown> {
    const headers = this.headers();
    let payload: string | undefined;
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      payload = JSON.stringify(body);
    }
    const reply = await fetch(this.baseUrl + path, { method, headers, body: payload });
    if (!reply.ok) {
      throw await toApiError(reply);
    }
    return reply.json();
  }

  async signup(username: string, password: string): Promise<void> {
    await this.request("POST", "/auth/signup", { username, password });
  }

  /** Logs in and remembers the session token for later calls. */
  async login(username: string, password: string): Promise<string> {
    const out = (await this.request("POST", "/auth/login", {
      username,
      password,
    })) as { session: string };
    this.session = out.session;
    return out.session;
  }

  async createProject(draft: ProjectDraft): Promise<ProjectSummary> {
    return (await this.request("POST", "/projects", draft)) as ProjectSummary;
  }

  /** Issues participant tokens. The server returns each token exactly once. */
  async issueTokens(projectId: string, count: number): Promise<string[]> {
    const path = `/projects/${encodeURIComponent(projectId)}/tokens?count=${count}`;
    const out = (await this.request("POST", path)) as { tokens: string[] };
    return out.tokens;
  }

  async listProjects(): Promise<ProjectRow[]> {
    const out = (await this.request("GET", "/projects")) as { projects: ProjectRow[] };
    return out.projects;
  }

  async projectInfo(projectId: string): Promise<ProjectSummary> {
    const path = `/projects/${encodeURIComponent(projectId)}/info`;
    return (await this.request("GET", path)) as ProjectSummary;
  }

  async projectStatus(projectId: string): Promise<StatusSnapshot> {
    const path = `/projects/${encodeURIComponent(projectId)}/status`;
    return (await this.request("GET", path)) as StatusSnapshot;
  }

  async abortProject(projectId: string): Promise<void> {
    await this.request("POST", `/projects/${encodeURIComponent(projectId)}/abort`);
  }

  /** Downloads the result file as raw bytes (the server replies octet-stream). */
  async downloadResult(projectId: string): Promise<Uint8Array> {
    const path = `/projects/${encodeURIComponent(projectId)}/result`;
    const reply = await fetch(this.baseUrl + path, {
      method: "GET",
      headers: this.headers(),
    });
    if (!reply.ok) {
      throw await toApiError(reply);
    }
    return new Uint8Array(await reply.arrayBuffer());
  }
}
