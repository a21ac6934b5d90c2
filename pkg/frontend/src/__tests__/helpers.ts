import { vi } from "vitest";
import type { ClientView, RequestDetail, RunView } from "../types";

type Handler = (init?: RequestInit) => { status: number; body: unknown };

/**
 * Install a fetch stub that routes "METHOD /path" to canned responses and
 * records every call for assertions.
 */
export function stubFetch(routes: Record<string, Handler>) {
  const calls: Array<{ method: string; path: string; init?: RequestInit }> = [];
  const mock = vi.fn(async (input: RequestInfo | URL, init?: RequestInit) => {
    const path = String(input);
    const method = init?.method ?? "GET";
    calls.push({ method, path, init });
    const handler = routes[`${method} ${path}`];
    if (!handler) {
      return new Response(JSON.stringify({ error: "UnknownEntity", detail: "no route" }), {
        status: 404,
        headers: { "Content-Type": "application/json" },
      });
    }
    const { status, body } = handler(init);
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  });
  vi.stubGlobal("fetch", mock);
  return { mock, calls };
}

export function jsonBody(init?: RequestInit): unknown {
  return JSON.parse(String(init?.body));
}

export function makeRun(overrides: Partial<RunView> = {}): RunView {
  return {
    run_id: 1,
    request_id: 1,
    rank: 0,
    client_id: 7,
    status: 2,
    obs: "",
    attempt: 1,
    dispatched_at: 100,
    started_at: 101,
    finished_at: null,
    has_bundle: false,
    progress_pct: null,
    progress_message: "",
    ...overrides,
  };
}

export function makeRequestDetail(overrides: Partial<RequestDetail> = {}): RequestDetail {
  return {
    request_id: 1,
    user: "alice",
    domain_id: 1,
    process_id: 1,
    repetitions: 2,
    parallel: false,
    parameters: ["a"],
    needs_gpu: false,
    same_machine: false,
    shared_file_ids: [],
    room_ids: [1],
    status: "running",
    created_at: 100,
    progress: 0.5,
    runs: [makeRun()],
    ...overrides,
  };
}

export function makeClient(overrides: Partial<ClientView> = {}): ClientView {
  return {
    client_id: 1,
    address: "10.0.0.5:9000",
    room_id: 1,
    has_gpu: false,
    cores: 8,
    ram_mb: 16384,
    availability: "free",
    accepting_new: true,
    snapshot: {
      cpu_pct: 25,
      ram_pct: 40,
      gpu_ram_pct: 0,
      interactive_user_present: false,
      taken_at: 100,
    },
    active_runs: 1,
    max_concurrent_runs: 4,
    last_seen: 100,
    ...overrides,
  };
}
