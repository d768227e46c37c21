// Interactive explorer: sliders and draggable obstacles drive debounced
// solve requests; the selected channel renders as a heatmap with optional
// profile overlays and an oracle comparison stream.

import { fetchModels, postSolve, streamOracleSolve, SolveResponse } from "./api.js";
import {
  channelRange,
  channelValues,
  extractProfile,
  profilePolyline,
  renderHeatmap,
  FieldPayload,
} from "./render.js";
import { createSolveScheduler } from "./scheduler.js";
import {
  ChannelSelector,
  ModelInfo,
  SceneState,
  ShapeSpec,
  clampObstacle,
  clampScene,
  solveRequestFor,
} from "./state.js";

const base = "";

interface Ui {
  model: HTMLSelectElement;
  u0: HTMLInputElement;
  v0: HTMLInputElement;
  lidStart: HTMLInputElement;
  lidExtent: HTMLInputElement;
  channel: HTMLSelectElement;
  profiles: HTMLInputElement;
  oracle: HTMLInputElement;
  addCircle: HTMLButtonElement;
  addRect: HTMLButtonElement;
  clearShapes: HTMLButtonElement;
  message: HTMLElement;
  status: HTMLElement;
  canvas: HTMLCanvasElement;
  oracleCanvas: HTMLCanvasElement;
  profileCanvas: HTMLCanvasElement;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function solidMask(scene: SceneState, n: number): boolean[][] {
  const mask = Array.from({ length: n }, () => Array<boolean>(n).fill(false));
  for (const s of scene.obstacles) {
    for (let j = 0; j < n; j++) {
      for (let i = 0; i < n; i++) {
        if (s.kind === "circle") {
          if ((i - s.cx) ** 2 + (j - s.cy) ** 2 <= s.radius ** 2) mask[j][i] = true;
        } else if (i >= s.x && i <= s.x + s.width && j >= s.y && j <= s.y + s.height) {
          mask[j][i] = true;
        }
      }
    }
  }
  return mask;
}

function paint(
  canvas: HTMLCanvasElement,
  fields: FieldPayload,
  scene: SceneState,
  model: ModelInfo
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const image = ctx.createImageData(canvas.width, canvas.height);
  const values = channelValues(fields, scene.channel);
  const range = channelRange(scene.channel, model.channel_scales);
  renderHeatmap(image, values, range, solidMask(scene, model.grid_size));
  ctx.putImageData(image, 0, 0);
}

function paintProfiles(
  canvas: HTMLCanvasElement,
  fields: FieldPayload,
  scene: SceneState,
  model: ModelInfo
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const range = channelRange(scene.channel, model.channel_scales);
  const lines: Array<{ name: string; color: string; line: "centerline" | "outlet" | { row: number } }> = [
    { name: "centerline", color: "#ff7f0e", line: "centerline" },
    { name: "row 40", color: "#2ca02c", line: { row: Math.min(40, model.grid_size - 1) } },
    { name: "outlet", color: "#1f77b4", line: "outlet" },
  ];
  lines.forEach((spec, idx) => {
    const pts = profilePolyline(extractProfile(fields, scene.channel, spec.line), range);
    ctx.strokeStyle = spec.color;
    ctx.beginPath();
    pts.forEach((p, k) => {
      const x = p.x * canvas.width;
      const y = p.y * canvas.height;
      if (k === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
    ctx.fillStyle = spec.color;
    ctx.fillText(spec.name, 6, 12 + idx * 12);
  });
}

async function bootstrap(): Promise<void> {
  const ui: Ui = {
    model: el("model"),
    u0: el("u0"),
    v0: el("v0"),
    lidStart: el("lid-start"),
    lidExtent: el("lid-extent"),
    channel: el("channel"),
    profiles: el("profiles"),
    oracle: el("oracle"),
    addCircle: el("add-circle"),
    addRect: el("add-rect"),
    clearShapes: el("clear-shapes"),
    message: el("message"),
    status: el("status"),
    canvas: el("view"),
    oracleCanvas: el("oracle-view"),
    profileCanvas: el("profile-view"),
  };

  const models = await fetchModels(base);
  if (!models.length) {
    ui.status.textContent = "no models registered";
    return;
  }
  for (const m of models) {
    const opt = document.createElement("option");
    opt.value = m.model_id;
    opt.textContent = `${m.model_id} (${m.stage}, ${m.grid_size}x${m.grid_size})`;
    ui.model.append(opt);
  }

  let scene: SceneState = {
    modelId: models[0].model_id,
    u0: 0.2,
    v0: 0.2,
    lidStart: null,
    lidExtent: null,
    obstacles: [],
    channel: "speed",
    showProfiles: false,
  };
  let lastResponse: SolveResponse | null = null;
  let oracleAbort: AbortController | null = null;

  const currentModel = () => models.find((m) => m.model_id === scene.modelId) ?? models[0];

  const renderLatest = () => {
    if (!lastResponse) return;
    paint(ui.canvas, lastResponse.fields, scene, currentModel());
    if (scene.showProfiles) paintProfiles(ui.profileCanvas, lastResponse.fields, scene, currentModel());
    ui.profileCanvas.style.display = scene.showProfiles ? "block" : "none";
  };

  const scheduler = createSolveScheduler<SceneState, SolveResponse>({
    debounceMs: 50,
    solve: (s) => postSolve(base, solveRequestFor(s)),
    onResult: (s, result) => {
      lastResponse = result;
      ui.status.textContent = `${result.meta.model_id}: ${result.meta.latency_ms.toFixed(1)} ms`;
      ui.status.classList.remove("stale");
      renderLatest();
    },
    onError: (s, error) => {
      const status = (error as { status?: number }).status;
      if (status === 400) {
        ui.message.textContent = String((error as Error).message);
        const clamped = clampScene(s, currentModel());
        scene = clamped.scene;
        syncInputs();
      } else {
        ui.status.textContent = "service unreachable; showing last frame";
        ui.status.classList.add("stale");
      }
    },
  });

  const syncInputs = () => {
    ui.u0.value = String(scene.u0);
    if (scene.v0 !== null) ui.v0.value = String(scene.v0);
    if (scene.lidStart !== null) ui.lidStart.value = String(scene.lidStart);
    if (scene.lidExtent !== null) ui.lidExtent.value = String(scene.lidExtent);
  };

  const applyScene = (next: SceneState) => {
    const { scene: clamped, message } = clampScene(next, currentModel());
    scene = clamped;
    ui.message.textContent = message ?? "";
    syncInputs();
    scheduler.schedule(scene);
    if (ui.oracle.checked) startOracle();
    renderLatest(); // local option changes repaint immediately
  };

  const configureForModel = () => {
    const m = currentModel();
    const cavity = (m.ranges as { problem?: string }).problem === "cavity";
    ui.v0.disabled = cavity;
    ui.lidStart.disabled = !cavity || (m.ranges as { lid?: string }).lid !== "segment";
    ui.lidExtent.disabled = ui.lidStart.disabled;
    scene = {
      ...scene,
      modelId: m.model_id,
      v0: cavity ? null : Number(ui.v0.value),
      lidStart: ui.lidStart.disabled ? null : Number(ui.lidStart.value),
      lidExtent: ui.lidExtent.disabled ? null : Number(ui.lidExtent.value),
      obstacles: [],
    };
  };

  function startOracle(): void {
    oracleAbort?.abort();
    oracleAbort = new AbortController();
    const m = currentModel();
    const req = { ...solveRequestFor(scene), budget_s: 20.0 };
    ui.oracleCanvas.style.display = "block";
    streamOracleSolve(
      base,
      req,
      (ev) => {
        if (ev.event === "progress") {
          ui.status.textContent = `oracle step ${ev.data.step}, delta ${Number(ev.data.delta).toExponential(1)}`;
        } else if (ev.event === "result" || ev.event === "timeout") {
          const fields = ev.data.fields as FieldPayload | undefined;
          if (fields) paint(ui.oracleCanvas, fields, scene, m);
        }
      },
      oracleAbort.signal
    ).catch(() => undefined);
  }

  ui.model.addEventListener("change", () => {
    configureForModel();
    applyScene(scene);
  });
  ui.u0.addEventListener("input", () => applyScene({ ...scene, u0: Number(ui.u0.value) }));
  ui.v0.addEventListener("input", () => applyScene({ ...scene, v0: Number(ui.v0.value) }));
  ui.lidStart.addEventListener("input", () =>
    applyScene({ ...scene, lidStart: Number(ui.lidStart.value) })
  );
  ui.lidExtent.addEventListener("input", () =>
    applyScene({ ...scene, lidExtent: Number(ui.lidExtent.value) })
  );
  ui.channel.addEventListener("change", () => {
    scene = { ...scene, channel: ui.channel.value as ChannelSelector };
    renderLatest();
  });
  ui.profiles.addEventListener("change", () => {
    scene = { ...scene, showProfiles: ui.profiles.checked };
    renderLatest();
  });
  ui.oracle.addEventListener("change", () => {
    if (ui.oracle.checked) startOracle();
    else {
      oracleAbort?.abort();
      ui.oracleCanvas.style.display = "none";
    }
  });

  const defaultShape = (kind: "circle" | "rectangle"): ShapeSpec => {
    const n = currentModel().grid_size;
    const ranges = currentModel().ranges as { square_nodes?: number; circle_radius_nodes?: [number, number] };
    if (kind === "circle") {
      const r = ranges.circle_radius_nodes ? ranges.circle_radius_nodes[0] + 2 : 5;
      return { kind: "circle", cx: n / 2, cy: n / 2, radius: r };
    }
    const side = (ranges.square_nodes ?? 8) - 1;
    return { kind: "rectangle", x: n / 2 - side / 2, y: n / 2 - side / 2, width: side, height: side };
  };
  ui.addCircle.addEventListener("click", () =>
    applyScene({ ...scene, obstacles: [...scene.obstacles, defaultShape("circle")] })
  );
  ui.addRect.addEventListener("click", () =>
    applyScene({ ...scene, obstacles: [...scene.obstacles, defaultShape("rectangle")] })
  );
  ui.clearShapes.addEventListener("click", () => applyScene({ ...scene, obstacles: [] }));

  // drag obstacles: node coordinates track the pointer, clamped interior
  let dragging = -1;
  const toNode = (ev: MouseEvent) => {
    const rect = ui.canvas.getBoundingClientRect();
    const n = currentModel().grid_size;
    return {
      i: ((ev.clientX - rect.left) / rect.width) * (n - 1),
      j: (1 - (ev.clientY - rect.top) / rect.height) * (n - 1),
    };
  };
  ui.canvas.addEventListener("mousedown", (ev) => {
    const { i, j } = toNode(ev);
    dragging = scene.obstacles.findIndex((s) =>
      s.kind === "circle"
        ? (i - s.cx) ** 2 + (j - s.cy) ** 2 <= (s.radius + 2) ** 2
        : i >= s.x - 2 && i <= s.x + s.width + 2 && j >= s.y - 2 && j <= s.y + s.height + 2
    );
  });
  ui.canvas.addEventListener("mousemove", (ev) => {
    if (dragging < 0) return;
    const { i, j } = toNode(ev);
    const obstacles = scene.obstacles.slice();
    const s = obstacles[dragging];
    obstacles[dragging] = clampObstacle(
      s.kind === "circle"
        ? { ...s, cx: Math.round(i), cy: Math.round(j) }
        : { ...s, x: Math.round(i - s.width / 2), y: Math.round(j - s.height / 2) },
      currentModel().grid_size
    );
    applyScene({ ...scene, obstacles });
  });
  window.addEventListener("mouseup", () => {
    dragging = -1;
  });

  configureForModel();
  applyScene(scene);
}

bootstrap().catch((err) => {
  const status = document.getElementById("status");
  if (status) status.textContent = `failed to start: ${err}`;
});
