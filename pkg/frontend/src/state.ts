// Scene state and range enforcement. All outbound requests validate against
// the ranges advertised by GET /models; out-of-range inputs are clamped and
// annotated with an inline message rather than sent.

export interface ModelInfo {
  model_id: string;
  stage: string;
  grid_size: number;
  channels: number;
  ranges: Record<string, unknown>;
  channel_scales: number[];
}

export type ShapeSpec =
  | { kind: "rectangle"; x: number; y: number; width: number; height: number }
  | { kind: "circle"; cx: number; cy: number; radius: number };

export type ChannelSelector = "u" | "v" | "p" | "speed";

export interface SceneState {
  modelId: string;
  u0: number;
  v0: number | null;
  lidStart: number | null;
  lidExtent: number | null;
  obstacles: ShapeSpec[];
  channel: ChannelSelector;
  showProfiles: boolean;
}

export interface ClampResult {
  value: number;
  message: string | null;
}

export function clampValue(name: string, value: number, bounds: [number, number]): ClampResult {
  const [lo, hi] = bounds;
  if (Number.isNaN(value)) {
    return { value: lo, message: `${name} is not a number; reset to ${lo}` };
  }
  if (value < lo) {
    return { value: lo, message: `${name} clamped to the trained minimum ${lo}` };
  }
  if (value > hi) {
    return { value: hi, message: `${name} clamped to the trained maximum ${hi}` };
  }
  return { value, message: null };
}

function bounds(ranges: Record<string, unknown>, key: string): [number, number] | null {
  const raw = ranges[key];
  if (Array.isArray(raw) && raw.length === 2) {
    return [Number(raw[0]), Number(raw[1])];
  }
  return null;
}

// Clamp every slider of a scene against a model's ranges; returns the
// corrected scene plus the first clamp message (for the inline status line).
export function clampScene(
  scene: SceneState,
  model: ModelInfo
): { scene: SceneState; message: string | null } {
  const out: SceneState = { ...scene, obstacles: scene.obstacles.slice() };
  let message: string | null = null;
  const take = (r: ClampResult) => {
    if (r.message && message === null) message = r.message;
    return r.value;
  };
  const u0b = bounds(model.ranges, "u0");
  if (u0b) out.u0 = take(clampValue("u0", scene.u0, u0b));
  const v0b = bounds(model.ranges, "v0");
  if (v0b && scene.v0 !== null) out.v0 = take(clampValue("v0", scene.v0, v0b));
  const lsb = bounds(model.ranges, "lid_start");
  if (lsb && scene.lidStart !== null) out.lidStart = take(clampValue("lid_start", scene.lidStart, lsb));
  const leb = bounds(model.ranges, "lid_extent");
  if (leb && scene.lidExtent !== null) {
    out.lidExtent = take(clampValue("lid_extent", scene.lidExtent, leb));
    if (out.lidStart !== null && out.lidStart + out.lidExtent > 1) {
      out.lidExtent = 1 - out.lidStart;
      if (message === null) message = "lid_extent clamped so the lid fits the top edge";
    }
  }
  out.obstacles = out.obstacles.map((s) => clampObstacle(s, model.grid_size));
  return { scene: out, message };
}

// Obstacles stay strictly inside the boundary ring while dragging.
export function clampObstacle(shape: ShapeSpec, gridSize: number): ShapeSpec {
  const lo = 2;
  if (shape.kind === "circle") {
    const r = shape.radius;
    const min = lo + r;
    const max = gridSize - 1 - lo - r;
    return {
      kind: "circle",
      cx: Math.min(Math.max(shape.cx, min), max),
      cy: Math.min(Math.max(shape.cy, min), max),
      radius: r,
    };
  }
  const maxX = gridSize - 1 - lo - shape.width;
  const maxY = gridSize - 1 - lo - shape.height;
  return {
    kind: "rectangle",
    x: Math.min(Math.max(shape.x, lo), maxX),
    y: Math.min(Math.max(shape.y, lo), maxY),
    width: shape.width,
    height: shape.height,
  };
}

export function solveRequestFor(scene: SceneState): Record<string, unknown> {
  const req: Record<string, unknown> = { model_id: scene.modelId, u0: scene.u0 };
  if (scene.v0 !== null) req.v0 = scene.v0;
  if (scene.lidStart !== null) req.lid_start = scene.lidStart;
  if (scene.lidExtent !== null) req.lid_extent = scene.lidExtent;
  if (scene.obstacles.length) req.shapes = scene.obstacles;
  return req;
}
