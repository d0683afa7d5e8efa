const TERMINAL_STATUSES = ["Done", "Failed", "Aborted"];
export function isTerminal(status) {
    return TERMINAL_STATUSES.includes(status);
}
export function toProgressView(snapshot) {
    const total = snapshot.participant_count;
    let failureText = "";
    if (snapshot.status === "Failed") {
        const where = `round ${snapshot.sync.round}`;
        failureText = snapshot.failure
            ? `failed in ${where}: ${snapshot.failure}`
            : `failed in ${where}`;
    }
    return {
        statusLabel: snapshot.status,
        stepLabel: snapshot.sync.step,
        round: snapshot.sync.round,
        joinedText: `${snapshot.joined} / ${total} joined`,
        submittedText: `${snapshot.submitted} / ${total} submitted this round`,
        compensatedText: snapshot.compensated
            ? "noise totals received"
            : "waiting for noise totals",
        resultReady: snapshot.result_ready,
        terminal: isTerminal(snapshot.status),
        failureText,
    };
}
/**
 * Polls a status source on a fixed cadence and pushes each snapshot to the
 * page. Stops itself once the project reaches a terminal status; transient
 * fetch errors are reported but do not stop the loop (the caller stops the
 * poller explicitly when an error means the page must navigate away).
 */
export class Poller {
    constructor(fetchStatus, onUpdate, onError = () => undefined, intervalMs = 2000) {
        this.fetchStatus = fetchStatus;
        this.onUpdate = onUpdate;
        this.onError = onError;
        this.intervalMs = intervalMs;
        this.timer = null;
        this.stopped = false;
    }
    start() {
        this.stopped = false;
        void this.tick();
    }
    stop() {
        this.stopped = true;
        if (this.timer !== null) {
            clearTimeout(this.timer);
            this.timer = null;
        }
    }
    async tick() {
        if (this.stopped) {
            return;
        }
        let terminal = false;
        try {
            const snapshot = await this.fetchStatus();
            const view = toProgressView(snapshot);
            terminal = view.terminal;
            this.onUpdate(view, snapshot);
        }
        catch (err) {
            this.onError(err);
        }
        if (this.stopped || terminal) {
            this.timer = null;
            return;
        }
        this.timer = setTimeout(() => void this.tick(), this.intervalMs);
    }
}
