import { ApiClient, ApiError } from "./api.js";
import { Poller } from "./progress.js";
import { checkDraft } from "./validate.js";
const api = new ApiClient("");
let poller = null;
function esc(text) {
    return text
        .replace(/&/g, "&amp;")
        .replace(/</g, "&lt;")
        .replace(/>/g, "&gt;")
        .replace(/"/g, "&quot;");
}
function root() {
    const el = document.getElementById("app");
    if (!el) {
        throw new Error("missing #app mount point");
    }
    return el;
}
function navigate(hash) {
    window.location.hash = hash;
}
function stopPolling() {
    if (poller) {
        poller.stop();
        poller = null;
    }
}
/** Credential failures send the user back to the login page. */
function handleApiError(err) {
    if (err instanceof ApiError && err.code === "BadCredentials") {
        stopPolling();
        sessionStorage.removeItem("session");
        api.session = "";
        navigate("#/login");
        return;
    }
    if (err instanceof ApiError && err.code === "UnknownProject") {
        stopPolling();
        renderNotFound();
        return;
    }
    flash(err instanceof Error ? err.message : String(err));
}
function flash(message) {
    const bar = document.getElementById("flash");
    if (bar) {
        bar.textContent = message;
        bar.classList.toggle("hidden", !message);
    }
}
// -- login ----------------------------------------------------------------------
function renderLogin() {
    root().innerHTML = `
    <section class="card narrow">
      <h2>Sign in</h2>
      <label>Username <input id="login-username" autocomplete="username"></label>
      <label>Password <input id="login-password" type="password" autocomplete="current-password"></label>
      <p class="field-error hidden" id="login-error"></p>
      <div class="row">
        <button id="login-go">Sign in</button>
        <button id="signup-go" class="secondary">Create account</button>
      </div>
    </section>`;
    const username = document.getElementById("login-username");
    const password = document.getElementById("login-password");
    const error = document.getElementById("login-error");
    const fail = (message) => {
        error.textContent = message;
        error.classList.remove("hidden");
    };
    const signIn = async () => {
        try {
            await api.login(username.value.trim(), password.value);
            sessionStorage.setItem("session", api.session);
            navigate("#/projects");
        }
        catch (err) {
            fail(err instanceof Error ? err.message : String(err));
        }
    };
    document.getElementById("login-go")?.addEventListener("click", () => void signIn());
    password.addEventListener("keydown", (ev) => {
        if (ev.key === "Enter") {
            void signIn();
        }
    });
    document.getElementById("signup-go")?.addEventListener("click", () => {
        void (async () => {
            try {
                await api.signup(username.value.trim(), password.value);
                await signIn();
            }
            catch (err) {
                fail(err instanceof Error ? err.message : String(err));
            }
        })();
    });
}
// -- project list -----------------------------------------------------------------
function projectRowHtml(row) {
    return `
    <tr>
      <td><a href="#/projects/${encodeURIComponent(row.id)}">${esc(row.name)}</a></td>
      <td>${esc(row.algorithm)}</td>
      <td>${row.joined} / ${row.participant_count}</td>
      <td><span class="badge badge-${esc(row.status.toLowerCase())}">${esc(row.status)}</span></td>
    </tr>`;
}
function renderProjects() {
    root().innerHTML = `
    <section class="card">
      <div class="row spread">
        <h2>Projects</h2>
        <a class="button" href="#/new">New project</a>
      </div>
      <div id="project-list">Loading...</div>
    </section>`;
    void (async () => {
        try {
            const rows = await api.listProjects();
            const list = document.getElementById("project-list");
            if (!list) {
                return;
            }
            if (rows.length === 0) {
                list.innerHTML = `<p class="muted">No projects yet.</p>`;
                return;
            }
            list.innerHTML = `
        <table>
          <thead><tr><th>Name</th><th>Algorithm</th><th>Joined</th><th>Status</th></tr></thead>
          <tbody>${rows.map(projectRowHtml).join("")}</tbody>
        </table>`;
        }
        catch (err) {
            handleApiError(err);
        }
    })();
}
// -- create form and one-time token panel --------------------------------------------
function readDraftInput() {
    const value = (id) => document.getElementById(id).value;
    return {
        name: value("draft-name"),
        description: value("draft-description"),
        tool: value("draft-tool"),
        algorithm: document.getElementById("draft-algorithm").value,
        participants: value("draft-participants"),
        hyperparameters: value("draft-hyperparameters"),
    };
}
function showFieldErrors(errors) {
    for (const field of ["name", "algorithm", "participants", "hyperparameters"]) {
        const slot = document.getElementById(`error-${field}`);
        if (slot) {
            slot.textContent = errors[field] ?? "";
            slot.classList.toggle("hidden", !errors[field]);
        }
    }
}
function renderCreate() {
    root().innerHTML = `
    <section class="card narrow">
      <h2>New project</h2>
      <label>Name <input id="draft-name"></label>
      <p class="field-error hidden" id="error-name"></p>
      <label>Description <input id="draft-description"></label>
      <label>Tool <input id="draft-tool" placeholder="stats"></label>
      <label>Algorithm
        <select id="draft-algorithm">
          <option value="variance">variance</option>
        </select>
      </label>
      <p class="field-error hidden" id="error-algorithm"></p>
      <label>Participants <input id="draft-participants" inputmode="numeric" value="3"></label>
      <p class="field-error hidden" id="error-participants"></p>
      <label>Hyperparameters <textarea id="draft-hyperparameters" rows="3"
        placeholder="one name=number per line"></textarea></label>
      <p class="field-error hidden" id="error-hyperparameters"></p>
      <div class="row">
        <button id="draft-submit">Create</button>
        <a class="button secondary" href="#/projects">Back</a>
      </div>
    </section>
    <section class="card narrow hidden" id="token-panel"></section>`;
    document.getElementById("draft-submit")?.addEventListener("click", () => {
        const check = checkDraft(readDraftInput());
        showFieldErrors(check.errors);
        if (!check.ok || !check.draft) {
            return;
        }
        const draft = check.draft;
        void (async () => {
            try {
                const summary = await api.createProject(draft);
                const tokens = await api.issueTokens(summary.project.id, draft.participant_count);
                renderTokenPanel(summary.project.id, tokens);
            }
            catch (err) {
                handleApiError(err);
            }
        })();
    });
}
/**
 * Shows freshly issued tokens exactly once. The server never returns a token
 * a second time, so this panel is the only chance to copy them out.
 */
function renderTokenPanel(projectId, tokens) {
    const panel = document.getElementById("token-panel");
    if (!panel) {
        return;
    }
    const rows = tokens
        .map((token, i) => `
      <li>
        <code>${esc(token)}</code>
        <button class="copy" data-token="${esc(token)}">Copy ${i + 1}</button>
      </li>`)
        .join("");
    panel.innerHTML = `
    <h2>Participant tokens</h2>
    <p class="warning">Shown once. Copy each token now; they cannot be fetched again.</p>
    <ul class="token-list">${rows}</ul>
    <a class="button" href="#/projects/${encodeURIComponent(projectId)}">Open progress page</a>`;
    panel.classList.remove("hidden");
    for (const button of Array.from(panel.querySelectorAll("button.copy"))) {
        button.addEventListener("click", () => {
            void navigator.clipboard.writeText(button.dataset.token ?? "").then(() => {
                button.textContent = "Copied";
            }, () => flash("clipboard unavailable; select the token text manually"));
        });
    }
}
// -- progress page ------------------------------------------------------------------
function renderProgressInto(el, view, projectId) {
    const failure = view.failureText
        ? `<p class="banner error-banner">${esc(view.failureText)}</p>`
        : "";
    const result = view.resultReady
        ? `<button id="result-download">Download result</button>`
        : "";
    const abort = view.terminal
        ? ""
        : `<button id="abort-project" class="secondary">Abort project</button>`;
    el.innerHTML = `
    ${failure}
    <dl class="status-grid">
      <dt>Status</dt><dd><span class="badge badge-${esc(view.statusLabel.toLowerCase())}">${esc(view.statusLabel)}</span></dd>
      <dt>Step</dt><dd>${esc(view.stepLabel)}</dd>
      <dt>Round</dt><dd>${view.round}</dd>
      <dt>Roster</dt><dd>${esc(view.joinedText)}</dd>
      <dt>Submissions</dt><dd>${esc(view.submittedText)}</dd>
      <dt>Compensation</dt><dd>${esc(view.compensatedText)}</dd>
    </dl>
    <div class="row">${result}${abort}</div>`;
    document.getElementById("result-download")?.addEventListener("click", () => {
        void (async () => {
            try {
                const bytes = await api.downloadResult(projectId);
                const blob = new Blob([bytes.buffer], { type: "text/csv" });
                const anchor = document.createElement("a");
                anchor.href = URL.createObjectURL(blob);
                anchor.download = "result.csv";
                anchor.click();
                URL.revokeObjectURL(anchor.href);
            }
            catch (err) {
                handleApiError(err);
            }
        })();
    });
    document.getElementById("abort-project")?.addEventListener("click", () => {
        void api.abortProject(projectId).catch(handleApiError);
    });
}
function renderProject(projectId) {
    root().innerHTML = `
    <section class="card">
      <div class="row spread">
        <h2 id="project-title">Project</h2>
        <a class="button secondary" href="#/projects">All projects</a>
      </div>
      <p class="muted" id="project-subtitle"></p>
      <div id="progress">Loading...</div>
    </section>`;
    void api
        .projectInfo(projectId)
        .then((summary) => {
        const title = document.getElementById("project-title");
        const subtitle = document.getElementById("project-subtitle");
        if (title) {
            title.textContent = summary.project.name;
        }
        if (subtitle) {
            subtitle.textContent = `${summary.project.algorithm} with ${summary.project.participant_count} participants`;
        }
    })
        .catch(handleApiError);
    poller = new Poller(() => api.projectStatus(projectId), (view) => {
        const el = document.getElementById("progress");
        if (el) {
            renderProgressInto(el, view, projectId);
        }
    }, handleApiError);
    poller.start();
}
function renderNotFound() {
    root().innerHTML = `
    <section class="card narrow">
      <h2>Not found</h2>
      <p>No project lives at this address. It may have been created on another server.</p>
      <a class="button" href="#/projects">Back to projects</a>
    </section>`;
}
// -- router ---------------------------------------------------------------------
function route() {
    stopPolling();
    flash("");
    const hash = window.location.hash || "#/projects";
    const stored = sessionStorage.getItem("session") ?? "";
    api.session = stored;
    if (hash === "#/login") {
        renderLogin();
        return;
    }
    if (!stored) {
        navigate("#/login");
        return;
    }
    if (hash === "#/projects") {
        renderProjects();
        return;
    }
    if (hash === "#/new") {
        renderCreate();
        return;
    }
    const match = hash.match(/^#\/projects\/([^/]+)$/);
    if (match) {
        renderProject(decodeURIComponent(match[1]));
        return;
    }
    renderNotFound();
}
window.addEventListener("hashchange", route);
window.addEventListener("DOMContentLoaded", route);
