/** Session polling with linear backoff: 1 s after the first probe, +1 s per
 * probe, capped at 5 s. A desk tool watching one training job does not need
 * anything fancier than that. */

export const MIN_DELAY_MS = 1000;
export const MAX_DELAY_MS = 5000;

export function nextDelay(previous: number | null): number {
  if (previous === null) return MIN_DELAY_MS;
  return Math.min(previous + 1000, MAX_DELAY_MS);
}

export type Sleep = (ms: number) => Promise<void>;

const defaultSleep: Sleep = (ms) => new Promise((resolve) => setTimeout(resolve, ms));

/** Fetch state repeatedly until `done` accepts it; resolves with that state. */
export async function pollUntil<T>(
  fetchState: () => Promise<T>,
  done: (state: T) => boolean,
  sleep: Sleep = defaultSleep,
): Promise<T> {
  let delay: number | null = null;
  for (;;) {
    const state = await fetchState();
    if (done(state)) return state;
    delay = nextDelay(delay);
    await sleep(delay);
  }
}
