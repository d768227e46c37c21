import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { createSolveScheduler } from "../src/scheduler.js";

interface Scene {
  u0: number;
}

describe("solve scheduler", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("collapses rapid changes into exactly one solve and one frame", async () => {
    const solves: Scene[] = [];
    const frames: Array<{ scene: Scene; result: string }> = [];
    const scheduler = createSolveScheduler<Scene, string>({
      debounceMs: 50,
      solve: async (s) => {
        solves.push(s);
        return `solved u0=${s.u0}`;
      },
      onResult: (scene, result) => frames.push({ scene, result }),
    });

    for (let k = 1; k <= 10; k++) {
      scheduler.schedule({ u0: k / 10 });
      vi.advanceTimersByTime(5); // faster than the debounce window
    }
    await vi.advanceTimersByTimeAsync(60);

    expect(solves).toHaveLength(1);
    expect(frames).toHaveLength(1);
    expect(frames[0].scene.u0).toBe(1.0);
    expect(frames[0].result).toBe("solved u0=1");
  });

  it("discards stale responses by sequence number", async () => {
    const frames: Array<{ u0: number; result: string }> = [];
    const resolvers: Array<(v: string) => void> = [];
    const scheduler = createSolveScheduler<Scene, string>({
      debounceMs: 10,
      solve: () =>
        new Promise<string>((resolve) => {
          resolvers.push(resolve);
        }),
      onResult: (scene, result) => frames.push({ u0: scene.u0, result }),
    });

    scheduler.schedule({ u0: 0.1 });
    await vi.advanceTimersByTimeAsync(15); // dispatch #1, stays in flight
    scheduler.schedule({ u0: 0.9 });
    await vi.advanceTimersByTimeAsync(15); // dispatch #2

    expect(resolvers).toHaveLength(2);
    resolvers[1]("late-state");
    resolvers[0]("early-state");
    await vi.advanceTimersByTimeAsync(1);

    expect(frames).toHaveLength(1);
    expect(frames[0].u0).toBe(0.9);
    expect(frames[0].result).toBe("late-state");
  });

  it("final render matches the final drag position", async () => {
    // simulate a drag across 10 positions with some requests resolving
    // out of order; only the final position may paint
    const frames: number[] = [];
    const pending: Array<{ resolve: (v: number) => void; u0: number }> = [];
    const scheduler = createSolveScheduler<Scene, number>({
      debounceMs: 10,
      solve: (s) =>
        new Promise<number>((resolve) => {
          pending.push({ resolve, u0: s.u0 });
        }),
      onResult: (_s, result) => frames.push(result),
    });

    for (let k = 1; k <= 10; k++) {
      scheduler.schedule({ u0: k });
      await vi.advanceTimersByTimeAsync(12); // each change dispatches
    }
    // resolve shuffled
    for (const p of [...pending].sort((a, b) => (a.u0 % 3) - (b.u0 % 3))) {
      p.resolve(p.u0);
    }
    await vi.advanceTimersByTimeAsync(1);

    expect(frames).toEqual([10]);
  });

  it("errors on superseded requests are swallowed", async () => {
    const errors: number[] = [];
    let reject1: ((e: Error) => void) | null = null;
    const scheduler = createSolveScheduler<Scene, string>({
      debounceMs: 10,
      solve: (s) =>
        s.u0 === 1
          ? new Promise<string>((_r, rej) => {
              reject1 = rej;
            })
          : Promise.resolve("ok"),
      onResult: () => undefined,
      onError: (s) => errors.push(s.u0),
    });
    scheduler.schedule({ u0: 1 });
    await vi.advanceTimersByTimeAsync(15);
    scheduler.schedule({ u0: 2 });
    await vi.advanceTimersByTimeAsync(15);
    reject1!(new Error("boom"));
    await vi.advanceTimersByTimeAsync(1);
    expect(errors).toEqual([]);
  });
});
