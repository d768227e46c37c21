// Debounced solve dispatch with stale-response discard.
//
// Every scene change bumps a version counter and re-arms a trailing-edge
// timer; when it fires, the latest scene is dispatched with its version.
// A response is rendered only if its version is still the newest, so
// out-of-order completions and superseded requests never paint a frame.

export interface SchedulerOptions<S, R> {
  debounceMs: number;
  solve: (state: S) => Promise<R>;
  onResult: (state: S, result: R) => void;
  onError?: (state: S, error: unknown) => void;
}

export interface SolveScheduler<S> {
  schedule(state: S): void;
  flush(): void;
  inFlight(): number;
  dispose(): void;
}

export function createSolveScheduler<S, R>(opts: SchedulerOptions<S, R>): SolveScheduler<S> {
  let version = 0;
  let pendingState: S | null = null;
  let timer: ReturnType<typeof setTimeout> | null = null;
  let inFlight = 0;
  let disposed = false;

  const dispatch = () => {
    timer = null;
    if (pendingState === null || disposed) return;
    const state = pendingState;
    const myVersion = version;
    pendingState = null;
    inFlight += 1;
    opts.solve(state).then(
      (result) => {
        inFlight -= 1;
        if (!disposed && myVersion === version) {
          opts.onResult(state, result);
        }
      },
      (error) => {
        inFlight -= 1;
        if (!disposed && myVersion === version && opts.onError) {
          opts.onError(state, error);
        }
      }
    );
  };

  return {
    schedule(state: S) {
      if (disposed) return;
      version += 1;
      pendingState = state;
      if (timer !== null) clearTimeout(timer);
      timer = setTimeout(dispatch, opts.debounceMs);
    },
    flush() {
      if (timer !== null) {
        clearTimeout(timer);
        dispatch();
      }
    },
    inFlight: () => inFlight,
    dispose() {
      disposed = true;
      if (timer !== null) clearTimeout(timer);
    },
  };
}
