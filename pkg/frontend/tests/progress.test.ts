import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { Poller, toProgressView } from "../src/progress.js";
import { StatusSnapshot } from "../src/types.js";

function snapshot(overrides: Partial<StatusSnapshot> = {}): StatusSnapshot {
  return {
    status: "Running",
    failure: "",
    sync: { step: "Sum", round: 1 },
    participant_count: 3,
    joined: 3,
    submitted: 2,
    compensated: false,
    result_ready: false,
    ...overrides,
  };
}

describe("toProgressView", () => {
  it("renders a mid-run snapshot with counters", () => {
    const view = toProgressView(
      snapshot({ sync: { step: "Sum-square-error", round: 2 }, compensated: true }),
    );
    expect(view.stepLabel).toBe("Sum-square-error");
    expect(view.round).toBe(2);
    expect(view.joinedText).toBe("3 / 3 joined");
    expect(view.submittedText).toBe("2 / 3 submitted this round");
    expect(view.compensatedText).toBe("noise totals received");
    expect(view.terminal).toBe(false);
    expect(view.failureText).toBe("");
  });

  it("marks a finished project terminal with the result ready", () => {
    const view = toProgressView(
      snapshot({
        status: "Done",
        sync: { step: "Finished", round: 3 },
        result_ready: true,
      }),
    );
    expect(view.terminal).toBe(true);
    expect(view.resultReady).toBe(true);
    expect(view.failureText).toBe("");
  });

  it("builds a failure banner naming the round", () => {
    const view = toProgressView(
      snapshot({
        status: "Failed",
        failure: "participant timed out",
        sync: { step: "Sum", round: 1 },
      }),
    );
    expect(view.terminal).toBe(true);
    expect(view.failureText).toBe("failed in round 1: participant timed out");
  });
});

describe("Poller", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("polls on a two second cadence until the status is terminal", async () => {
    const replies = [
      snapshot(),
      snapshot({ sync: { step: "Sum-square-error", round: 2 } }),
      snapshot({ status: "Done", sync: { step: "Finished", round: 3 }, result_ready: true }),
    ];
    let calls = 0;
    const fetchStatus = vi.fn(() => Promise.resolve(replies[Math.min(calls++, 2)]));
    const seen: string[] = [];
    const poller = new Poller(fetchStatus, (view) => seen.push(view.statusLabel));

    poller.start();
    await vi.advanceTimersByTimeAsync(0);
    expect(fetchStatus).toHaveBeenCalledTimes(1);

    await vi.advanceTimersByTimeAsync(1999);
    expect(fetchStatus).toHaveBeenCalledTimes(1);
    await vi.advanceTimersByTimeAsync(1);
    expect(fetchStatus).toHaveBeenCalledTimes(2);

    await vi.advanceTimersByTimeAsync(2000);
    expect(fetchStatus).toHaveBeenCalledTimes(3);
    expect(seen).toEqual(["Running", "Running", "Done"]);

    await vi.advanceTimersByTimeAsync(10000);
    expect(fetchStatus).toHaveBeenCalledTimes(3);
  });

  it("keeps polling through transient errors", async () => {
    const fetchStatus = vi
      .fn<() => Promise<StatusSnapshot>>()
      .mockRejectedValueOnce(new Error("connection refused"))
      .mockResolvedValue(snapshot({ status: "Done", sync: { step: "Finished", round: 3 } }));
    const errors: unknown[] = [];
    const updates: string[] = [];
    const poller = new Poller(
      fetchStatus,
      (view) => updates.push(view.statusLabel),
      (err) => errors.push(err),
    );

    poller.start();
    await vi.advanceTimersByTimeAsync(0);
    expect(errors).toHaveLength(1);
    expect(updates).toHaveLength(0);

    await vi.advanceTimersByTimeAsync(2000);
    expect(updates).toEqual(["Done"]);
  });

  it("stops scheduling once stopped", async () => {
    const fetchStatus = vi.fn(() => Promise.resolve(snapshot()));
    const poller = new Poller(fetchStatus, () => undefined);
    poller.start();
    await vi.advanceTimersByTimeAsync(0);
    poller.stop();
    await vi.advanceTimersByTimeAsync(10000);
    expect(fetchStatus).toHaveBeenCalledTimes(1);
  });
});
