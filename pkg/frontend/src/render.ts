// Pure rendering helpers: a frame is a function of the latest accepted
// response plus render options, nothing else.

import type { ChannelSelector } from "./state.js";

export interface FieldPayload {
  u: number[][];
  v: number[][];
  p: number[][];
}

// ImageData-compatible target so tests can pass a plain object.
export interface PixelBuffer {
  width: number;
  height: number;
  data: Uint8ClampedArray;
}

// Compact five-stop approximation of a perceptually ordered colormap.
const STOPS: Array<[number, number, number]> = [
  [68, 1, 84],
  [59, 82, 139],
  [33, 145, 140],
  [94, 201, 98],
  [253, 231, 37],
];

export function colormap(t: number): [number, number, number] {
  const x = Math.min(Math.max(t, 0), 1) * (STOPS.length - 1);
  const i = Math.min(Math.floor(x), STOPS.length - 2);
  const f = x - i;
  const a = STOPS[i];
  const b = STOPS[i + 1];
  return [
    Math.round(a[0] + (b[0] - a[0]) * f),
    Math.round(a[1] + (b[1] - a[1]) * f),
    Math.round(a[2] + (b[2] - a[2]) * f),
  ];
}

export function channelValues(fields: FieldPayload, channel: ChannelSelector): number[][] {
  if (channel === "speed") {
    return fields.u.map((row, j) => row.map((u, i) => Math.hypot(u, fields.v[j][i])));
  }
  return fields[channel];
}

// Fixed normalization from the model's channel scales keeps frames visually
// comparable across slider moves.
export function channelRange(channel: ChannelSelector, scales: number[]): [number, number] {
  if (channel === "speed") return [0, Math.SQRT2 * scales[0]];
  if (channel === "p") return [-scales[2], scales[2]];
  const s = channel === "u" ? scales[0] : scales[1];
  return [-s, s];
}

export function renderHeatmap(
  target: PixelBuffer,
  values: number[][],
  range: [number, number],
  solid?: boolean[][]
): void {
  const ny = values.length;
  const nx = values[0].length;
  const [lo, hi] = range;
  const span = hi - lo || 1;
  for (let py = 0; py < target.height; py++) {
    // row 0 of the field is the bottom edge; canvases draw top-down
    const j = Math.min(ny - 1, Math.floor(((target.height - 1 - py) / target.height) * ny));
    for (let px = 0; px < target.width; px++) {
      const i = Math.min(nx - 1, Math.floor((px / target.width) * nx));
      const k = (py * target.width + px) * 4;
      if (solid && solid[j][i]) {
        target.data[k] = 40;
        target.data[k + 1] = 40;
        target.data[k + 2] = 40;
        target.data[k + 3] = 255;
        continue;
      }
      const [r, g, b] = colormap((values[j][i] - lo) / span);
      target.data[k] = r;
      target.data[k + 1] = g;
      target.data[k + 2] = b;
      target.data[k + 3] = 255;
    }
  }
}

export interface ProfilePoint {
  x: number;
  y: number;
}

// Polyline for one cross-section in normalized [0,1]^2 chart coordinates.
export function profilePolyline(values: number[], range: [number, number]): ProfilePoint[] {
  const [lo, hi] = range;
  const span = hi - lo || 1;
  return values.map((v, k) => ({
    x: k / (values.length - 1),
    y: 1 - (v - lo) / span,
  }));
}

export function extractProfile(
  fields: FieldPayload,
  channel: ChannelSelector,
  line: "centerline" | "outlet" | { row: number }
): number[] {
  const values = channelValues(fields, channel);
  const n = values.length;
  if (line === "centerline") return values.map((row) => row[Math.floor(n / 2)]);
  if (line === "outlet") return values.map((row) => row[n - 1]);
  return values[line.row].slice();
}
