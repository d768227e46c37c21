import { describe, expect, it } from "vitest";
import { decodeNsf1, encodeNsf1 } from "../src/nsf1.js";

describe("nsf1 decoding", () => {
  it("round-trips f32 planes", () => {
    const nx = 4;
    const u = Float64Array.from({ length: 16 }, (_, k) => k / 8);
    const v = Float64Array.from({ length: 16 }, (_, k) => -k / 16);
    const bytes = encodeNsf1(nx, nx, [u, v]);
    const decoded = decodeNsf1(bytes);
    expect(decoded.nx).toBe(4);
    expect(decoded.ny).toBe(4);
    expect(decoded.channels).toHaveLength(2);
    for (let k = 0; k < 16; k++) {
      expect(decoded.channels[0][k]).toBeCloseTo(u[k], 6);
      expect(decoded.channels[1][k]).toBeCloseTo(v[k], 6);
    }
  });

  it("round-trips f64 planes exactly", () => {
    const p = Float64Array.from({ length: 16 }, (_, k) => Math.sin(k) * 1e-7);
    const decoded = decodeNsf1(encodeNsf1(4, 4, [p], true));
    for (let k = 0; k < 16; k++) {
      expect(decoded.channels[0][k]).toBe(p[k]);
    }
  });

  it("rejects bad magic", () => {
    const bytes = encodeNsf1(4, 4, [new Float64Array(16)]);
    bytes[0] = 88;
    expect(() => decodeNsf1(bytes)).toThrow(/magic/);
  });

  it("rejects truncated payloads", () => {
    const bytes = encodeNsf1(4, 4, [new Float64Array(16)]);
    expect(() => decodeNsf1(bytes.slice(0, bytes.length - 3))).toThrow(/expected/);
  });
});
