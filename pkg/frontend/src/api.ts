// HTTP client for the inference service; the oracle endpoint streams
// server-sent events which we parse from a fetch body reader (EventSource
// cannot POST).

import type { ModelInfo } from "./state.js";
import type { FieldPayload } from "./render.js";

export interface SolveResponse {
  fields: FieldPayload;
  meta: { latency_ms: number; model_id: string; grid_size: number };
}

export interface OracleEvent {
  event: "progress" | "result" | "timeout" | "error";
  data: Record<string, unknown>;
}

export async function fetchModels(base: string): Promise<ModelInfo[]> {
  const r = await fetch(`${base}/models`);
  if (!r.ok) throw new Error(`GET /models -> ${r.status}`);
  return (await r.json()) as ModelInfo[];
}

export async function postSolve(
  base: string,
  request: Record<string, unknown>
): Promise<SolveResponse> {
  const r = await fetch(`${base}/solve`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(request),
  });
  if (!r.ok) {
    const detail = await r.json().catch(() => ({ detail: r.statusText }));
    throw Object.assign(new Error(String(detail.detail ?? r.statusText)), { status: r.status });
  }
  return (await r.json()) as SolveResponse;
}

export function parseSseChunk(buffer: string): { events: OracleEvent[]; rest: string } {
  const events: OracleEvent[] = [];
  const blocks = buffer.split("\n\n");
  const rest = blocks.pop() ?? "";
  for (const block of blocks) {
    let event = "message";
    let data = "";
    for (const line of block.split("\n")) {
      if (line.startsWith("event: ")) event = line.slice(7).trim();
      else if (line.startsWith("data: ")) data += line.slice(6);
    }
    if (data) {
      events.push({ event: event as OracleEvent["event"], data: JSON.parse(data) });
    }
  }
  return { events, rest };
}

export async function streamOracleSolve(
  base: string,
  request: Record<string, unknown>,
  onEvent: (ev: OracleEvent) => void,
  signal?: AbortSignal
): Promise<void> {
  const r = await fetch(`${base}/oracle-solve`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(request),
    signal,
  });
  if (!r.ok || !r.body) {
    const detail = await r.json().catch(() => ({ detail: r.statusText }));
    throw Object.assign(new Error(String(detail.detail ?? r.statusText)), { status: r.status });
  }
  const reader = r.body.getReader();
  const decoder = new TextDecoder();
  let buffer = "";
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    buffer += decoder.decode(value, { stream: true });
    const { events, rest } = parseSseChunk(buffer);
    buffer = rest;
    for (const ev of events) onEvent(ev);
  }
}
