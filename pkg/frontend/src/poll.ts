import { useCallback, useEffect, useRef, useState } from "react";

export const POLL_INTERVAL_MS = 2000;

export interface PollState<T> {
  /** Last successfully fetched value; never mutated locally. */
  data: T | null;
  /** Set when the most recent poll failed while older data is still shown. */
  stale: boolean;
  /** Message from the most recent failure, cleared by the next success. */
  error: string | null;
  /** Trigger an immediate re-fetch (e.g. right after a mutation). */
  refresh: () => void;
}

/**
 * Poll `fetcher` on a fixed interval.  The rendered value only ever advances
 * to a fresh server response; failures keep the previous snapshot and raise
 * the `stale` flag instead of guessing at local state.
 */
export function usePoll<T>(
  fetcher: () => Promise<T>,
  intervalMs: number = POLL_INTERVAL_MS,
): PollState<T> {
  const [data, setData] = useState<T | null>(null);
  const [stale, setStale] = useState(false);
  const [error, setError] = useState<string | null>(null);
  const [generation, setGeneration] = useState(0);
  const fetcherRef = useRef(fetcher);
  fetcherRef.current = fetcher;

  const refresh = useCallback(() => setGeneration((n) => n + 1), []);

  useEffect(() => {
    let active = true;
    let timer: ReturnType<typeof setTimeout> | undefined;

    const tick = async () => {
      try {
        const value = await fetcherRef.current();
        if (!active) return;
        setData(value);
        setStale(false);
        setError(null);
      } catch (err) {
        if (!active) return;
        setStale(true);
        setError(err instanceof Error ? err.message : String(err));
      }
      if (active) {
        timer = setTimeout(tick, intervalMs);
      }
    };

    void tick();
    return () => {
      active = false;
      if (timer !== undefined) clearTimeout(timer);
    };
  }, [intervalMs, generation]);

  return { data, stale, error, refresh };
}
