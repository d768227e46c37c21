import { describe, expect, it } from "vitest";
import { clampObstacle, clampScene, clampValue, solveRequestFor, ModelInfo, SceneState } from "../src/state.js";

const model: ModelInfo = {
  model_id: "B3",
  stage: "B3",
  grid_size: 64,
  channels: 4,
  ranges: {
    problem: "internal",
    u0: [0, 0.5],
    v0: [0, 0.5],
    obstacles: 3,
  },
  channel_scales: [1, 1, 2],
};

const scene = (over: Partial<SceneState> = {}): SceneState => ({
  modelId: "B3",
  u0: 0.2,
  v0: 0.3,
  lidStart: null,
  lidExtent: null,
  obstacles: [],
  channel: "u",
  showProfiles: false,
  ...over,
});

describe("clamping", () => {
  it("passes in-range values through silently", () => {
    const r = clampValue("u0", 0.3, [0, 0.5]);
    expect(r.value).toBe(0.3);
    expect(r.message).toBeNull();
  });

  it("clamps above-range values with an inline message", () => {
    const { scene: out, message } = clampScene(scene({ u0: 0.9 }), model);
    expect(out.u0).toBe(0.5);
    expect(message).toContain("u0");
    expect(message).toContain("0.5");
  });

  it("clamps below-range values", () => {
    const { scene: out, message } = clampScene(scene({ v0: -0.2 }), model);
    expect(out.v0).toBe(0);
    expect(message).toContain("v0");
  });

  it("keeps dragged obstacles strictly interior", () => {
    const shape = clampObstacle({ kind: "circle", cx: 1, cy: 70, radius: 5 }, 64);
    expect(shape.kind).toBe("circle");
    if (shape.kind === "circle") {
      expect(shape.cx).toBe(7); // margin 2 + radius 5
      expect(shape.cy).toBe(56); // 63 - 2 - 5
    }
    const rect = clampObstacle({ kind: "rectangle", x: -5, y: 100, width: 11, height: 11 }, 64);
    if (rect.kind === "rectangle") {
      expect(rect.x).toBe(2);
      expect(rect.y).toBe(50); // 63 - 2 - 11
    }
  });

  it("keeps the lid segment inside the top edge", () => {
    const cavityModel: ModelInfo = {
      ...model,
      ranges: { problem: "cavity", u0: [0, 0.5], lid: "segment", lid_start: [0, 0.5], lid_extent: [0.25, 1] },
    };
    const { scene: out } = clampScene(scene({ lidStart: 0.5, lidExtent: 0.9, v0: null }), cavityModel);
    expect(out.lidStart! + out.lidExtent!).toBeLessThanOrEqual(1);
  });
});

describe("request building", () => {
  it("maps scene fields onto the solve request", () => {
    const req = solveRequestFor(
      scene({ obstacles: [{ kind: "circle", cx: 20, cy: 20, radius: 4 }] })
    );
    expect(req).toEqual({
      model_id: "B3",
      u0: 0.2,
      v0: 0.3,
      shapes: [{ kind: "circle", cx: 20, cy: 20, radius: 4 }],
    });
  });

  it("omits inactive parameters", () => {
    const req = solveRequestFor(scene({ v0: null, obstacles: [] }));
    expect(req).toEqual({ model_id: "B3", u0: 0.2 });
  });
});
