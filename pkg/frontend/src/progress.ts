import { StatusSnapshot } from "./types.js";

/** Everything the progress page needs to render one status snapshot. */
export interface ProgressView {
  statusLabel: string;
  stepLabel: string;
  round: number;
  joinedText: string;
  submittedText: string;
  compensatedText: string;
  resultReady: boolean;
  terminal: boolean;
  failureText: string;
}

const TERMINAL_STATUSES = ["Done", "Failed", "Aborted"];

export function isTerminal(status: string): boolean {
  return TERMINAL_STATUSES.includes(status);
}

export function toProgressView(snapshot: StatusSnapshot): ProgressView {
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
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;

  constructor(
    private readonly fetchStatus: () => Promise<StatusSnapshot>,
    private readonly onUpdate: (view: ProgressView, snapshot: StatusSnapshot) => void,
    private readonly onError: (err: unknown) => void = () => undefined,
    private readonly intervalMs = 2000,
  ) {}

  start(): void {
    this.stopped = false;
    void this.tick();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  private async tick(): Promise<void> {
    if (this.stopped) {
      return;
    }
    let terminal = false;
    try {
      const snapshot = await this.fetchStatus();
      const view = toProgressView(snapshot);
      terminal = view.terminal;
      this.onUpdate(view, snapshot);
    } catch (err) {
      this.onError(err);
    }
    if (this.stopped || terminal) {
      this.timer = null;
      return;
    }
    this.timer = setTimeout(() => void this.tick(), this.intervalMs);
  }
}
