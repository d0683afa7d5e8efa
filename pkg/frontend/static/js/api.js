/**
 * Error raised for any non-2xx reply. The server wraps failures in
 * {"error": {"code", "message", "details"?}}; code and details are kept
 * so callers can branch on them (credential failures, unknown projects).
 */
export class ApiError extends Error {
    constructor(code, message, status, details = {}) {
        super(message);
        this.name = "ApiError";
        this.code = code;
        this.status = status;
        this.details = details;
    }
}
async function toApiError(reply) {
    let code = "HttpError";
    let message = `request failed with status ${reply.status}`;
    let details = {};
    try {
        const body = (await reply.json());
        if (body && body.error) {
            code = body.error.code ?? code;
            message = body.error.message ?? message;
            details = body.error.details ?? {};
        }
    }
    catch {
        // Non-JSON body (static 404 page, proxy error); keep the fallback text.
    }
    return new ApiError(code, message, reply.status, details);
}
/** Thin client for the coordination server. Holds at most a session token. */
export class ApiClient {
    constructor(baseUrl = "") {
        this.baseUrl = baseUrl;
        this.session = "";
    }
    headers() {
        const out = {};
        if (this.session) {
            out["X-Session"] = this.session;
        }
        return out;
    }
    async request(method, path, body) {
        const headers = this.headers();
        let payload;
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
    async signup(username, password) {
        await this.request("POST", "/auth/signup", { username, password });
    }
    /** Logs in and remembers the session token for later calls. */
    async login(username, password) {
        const out = (await this.request("POST", "/auth/login", {
            username,
            password,
        }));
        this.session = out.session;
        return out.session;
    }
    async createProject(draft) {
        return (await this.request("POST", "/projects", draft));
    }
    /** Issues participant tokens. The server returns each token exactly once. */
    async issueTokens(projectId, count) {
        const path = `/projects/${encodeURIComponent(projectId)}/tokens?count=${count}`;
        const out = (await this.request("POST", path));
        return out.tokens;
    }
    async listProjects() {
        const out = (await this.request("GET", "/projects"));
        return out.projects;
    }
    async projectInfo(projectId) {
        const path = `/projects/${encodeURIComponent(projectId)}/info`;
        return (await this.request("GET", path));
    }
    async projectStatus(projectId) {
        const path = `/projects/${encodeURIComponent(projectId)}/status`;
        return (await this.request("GET", path));
    }
    async abortProject(projectId) {
        await this.request("POST", `/projects/${encodeURIComponent(projectId)}/abort`);
    }
    /** Downloads the result file as raw bytes (the server replies octet-stream). */
    async downloadResult(projectId) {
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
