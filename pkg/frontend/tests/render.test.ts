import { describe, expect, it } from "vitest";
import {
  channelRange,
  channelValues,
  colormap,
  extractProfile,
  profilePolyline,
  renderHeatmap,
  PixelBuffer,
} from "../src/render.js";

const fields = {
  u: [
    [0, 0.5],
    [1, 0],
  ],
  v: [
    [0, 0],
    [0, 1],
  ],
  p: [
    [0.1, 0.2],
    [0.3, 0.4],
  ],
};

function buffer(w: number, h: number): PixelBuffer {
  return { width: w, height: h, data: new Uint8ClampedArray(w * h * 4) };
}

describe("rendering", () => {
  it("is a pure function of response and options", () => {
    const a = buffer(8, 8);
    const b = buffer(8, 8);
    renderHeatmap(a, fields.u, [-1, 1]);
    renderHeatmap(b, fields.u, [-1, 1]);
    expect(Array.from(a.data)).toEqual(Array.from(b.data));
  });

  it("uses fixed ranges from the channel scales", () => {
    expect(channelRange("u", [1, 1, 2])).toEqual([-1, 1]);
    expect(channelRange("p", [1, 1, 2])).toEqual([-2, 2]);
    const [lo, hi] = channelRange("speed", [1, 1, 2]);
    expect(lo).toBe(0);
    expect(hi).toBeCloseTo(Math.SQRT2);
  });

  it("computes |velocity| per node", () => {
    const speed = channelValues(fields, "speed");
    expect(speed[1][1]).toBeCloseTo(1);
    expect(speed[0][1]).toBeCloseTo(0.5);
  });

  it("paints solid nodes with the mask color", () => {
    const target = buffer(2, 2);
    const solid = [
      [true, false],
      [false, false],
    ];
    renderHeatmap(target, fields.u, [-1, 1], solid);
    // field row 0 = bottom -> pixel row 1
    const k = (1 * 2 + 0) * 4;
    expect(target.data[k]).toBe(40);
    expect(target.data[k + 3]).toBe(255);
  });

  it("colormap endpoints are the first and last stops", () => {
    expect(colormap(0)).toEqual([68, 1, 84]);
    expect(colormap(1)).toEqual([253, 231, 37]);
  });

  it("extracts centerline / outlet / row profiles", () => {
    expect(extractProfile(fields, "u", "centerline")).toEqual([0.5, 0]);
    expect(extractProfile(fields, "u", "outlet")).toEqual([0.5, 0]);
    expect(extractProfile(fields, "u", { row: 1 })).toEqual([1, 0]);
  });

  it("polyline normalizes into the unit chart box", () => {
    const pts = profilePolyline([0, 1], [0, 1]);
    expect(pts[0]).toEqual({ x: 0, y: 1 });
    expect(pts[1]).toEqual({ x: 1, y: 0 });
  });
});
