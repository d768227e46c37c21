"""HTTP service exposing trained checkpoints for interactive solving.

Endpoints: ``GET /models``, ``POST /solve``, ``POST /oracle-solve`` (SSE
progress stream), ``GET /healthz``; the browser UI is served under ``/ui``
when a static bundle directory is configured.  Loaded models are read-only
shared state; requests outside a model's advertised training ranges are
rejected with the violated bound named.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import time
from pathlib import Path
from typing import Optional, Union

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field

from . import nsf1
from .grid import (
    BoundarySpec,
    Circle,
    GeometryError,
    GeometryMask,
    GridSpec,
    Rectangle,
    Shape,
    embed_boundary_conditions,
    initial_state,
    rasterize_obstacles,
    with_mask_channel,
)
from .model import load_checkpoint, predict
from .solver import SolverParams, _advance, divergence_linf

log = logging.getLogger(__name__)

DEFAULT_PORT = 8089

STAGE_RANGES = {
    "A0": {"u0": [0.0, 0.5], "problem": "cavity", "lid": "full", "obstacles": 0},
    "A": {
        "u0": [0.0, 0.5],
        "problem": "cavity",
        "lid": "segment",
        "lid_start": [0.0, 0.5],
        "lid_extent": [0.25, 1.0],
        "obstacles": 0,
    },
    "B0": {"u0": [0.0, 0.5], "v0": [0.0, 0.5], "problem": "internal", "obstacles": 0},
    "B1": {
        "u0": [0.0, 0.5], "v0": [0.0, 0.5], "problem": "internal",
        "obstacles": 1, "shape_kinds": ["rectangle"], "square_nodes": 6,
    },
    "B2": {
        "u0": [0.0, 0.5], "v0": [0.0, 0.5], "problem": "internal",
        "obstacles": 1, "shape_kinds": ["rectangle"], "square_nodes": 12,
    },
    "B3": {
        "u0": [0.0, 0.5], "v0": [0.0, 0.5], "problem": "internal",
        "obstacles": 3, "shape_kinds": ["rectangle", "circle"],
        "rect_side_nodes": [4, 12], "circle_radius_nodes": [3, 8],
    },
}


class SolveRequest(BaseModel):
    model_id: str
    u0: float
    v0: Optional[float] = None
    lid_start: Optional[float] = None
    lid_extent: Optional[float] = None
    shapes: list = Field(default_factory=list)


class OracleSolveRequest(SolveRequest):
    budget_s: float = 10.0
    progress_every: int = 500


class ModelRegistry:
    """Eagerly loaded checkpoints plus their advertised request ranges."""

    def __init__(self):
        self.entries: dict = {}

    @classmethod
    def from_config(cls, path: Union[str, Path]) -> "ModelRegistry":
        reg = cls()
        config = json.loads(Path(path).read_text())
        for item in config.get("models", []):
            reg.register(item["id"], item["checkpoint"])
        return reg

    def register(self, model_id: str, checkpoint: Union[str, Path]) -> None:
        model, meta = load_checkpoint(checkpoint)
        model.eval()
        stage = meta.get("stage", "A0")
        if stage not in STAGE_RANGES:
            raise ValueError(f"checkpoint stage {stage!r} has no advertised ranges")
        self.entries[model_id] = {
            "model": model,
            "meta": meta,
            "stage": stage,
            "grid_size": model.config.input_size,
            "channels": model.config.in_channels,
            "ranges": STAGE_RANGES[stage],
        }

    def listing(self) -> list:
        return [
            {
                "model_id": mid,
                "stage": e["stage"],
                "grid_size": e["grid_size"],
                "channels": e["channels"],
                "ranges": e["ranges"],
                "channel_scales": list(e["model"].config.channel_scales),
            }
            for mid, e in sorted(self.entries.items())
        ]

    def get(self, model_id: str):
        entry = self.entries.get(model_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown model id {model_id!r}")
        return entry


def _check_range(name: str, value: float, bounds) -> None:
    lo, hi = bounds
    if not lo <= value <= hi:
        raise HTTPException(
            status_code=400,
            detail=f"{name}={value} outside the trained range [{lo}, {hi}]",
        )


def _parse_shapes(raw_shapes: list, entry: dict) -> list[Shape]:
    ranges = entry["ranges"]
    allowed = ranges.get("obstacles", 0)
    if len(raw_shapes) > allowed:
        raise HTTPException(
            status_code=400,
            detail=f"{len(raw_shapes)} obstacles exceed the trained maximum of {allowed}",
        )
    shapes: list[Shape] = []
    for raw in raw_shapes:
        kind = raw.get("kind")
        if kind not in ranges.get("shape_kinds", []):
            raise HTTPException(status_code=400, detail=f"shape kind {kind!r} not supported")
        try:
            if kind == "rectangle":
                shape: Shape = Rectangle(raw["x"], raw["y"], raw["width"], raw["height"])
                if "square_nodes" in ranges:
                    side = ranges["square_nodes"] - 1
                    if shape.width != side or shape.height != side:
                        raise HTTPException(
                            status_code=400,
                            detail=f"rectangle extent must be {side} nodes "
                            f"(trained square size), got {shape.width}x{shape.height}",
                        )
                if "rect_side_nodes" in ranges:
                    lo, hi = ranges["rect_side_nodes"]
                    for extent in (shape.width, shape.height):
                        if not lo - 1 <= extent <= hi - 1:
                            raise HTTPException(
                                status_code=400,
                                detail=f"rectangle side {extent + 1} outside trained "
                                f"range [{lo}, {hi}] nodes",
                            )
            else:
                shape = Circle(raw["cx"], raw["cy"], raw["radius"])
                if "circle_radius_nodes" in ranges:
                    lo, hi = ranges["circle_radius_nodes"]
                    if not lo <= shape.radius <= hi:
                        raise HTTPException(
                            status_code=400,
                            detail=f"circle radius {shape.radius} outside trained "
                            f"range [{lo}, {hi}] nodes",
                        )
            shapes.append(shape)
        except (KeyError, GeometryError) as exc:
            raise HTTPException(status_code=422, detail=f"unrasterizable shape: {exc}")
    return shapes


def _build_case(req: SolveRequest, entry: dict):
    ranges = entry["ranges"]
    _check_range("u0", req.u0, ranges["u0"])
    if ranges["problem"] == "cavity":
        if ranges.get("lid") == "segment" and req.lid_start is not None:
            _check_range("lid_start", req.lid_start, ranges["lid_start"])
            extent = req.lid_extent if req.lid_extent is not None else 1.0 - req.lid_start
            _check_range("lid_extent", extent, ranges["lid_extent"])
            bc = BoundarySpec.cavity(req.u0, lid_start=req.lid_start, lid_extent=extent)
        else:
            bc = BoundarySpec.cavity(req.u0)
    else:
        v0 = req.v0 if req.v0 is not None else 0.0
        _check_range("v0", v0, ranges["v0"])
        bc = BoundarySpec.internal_flow(req.u0, v0)
    shapes = _parse_shapes(req.shapes, entry)
    grid = GridSpec.square(entry["grid_size"])
    try:
        geometry = rasterize_obstacles(shapes, grid) if shapes else None
    except GeometryError as exc:
        raise HTTPException(status_code=422, detail=f"unrasterizable shape: {exc}")
    return bc, shapes, geometry, grid


def _field_payload(field, accept: str) -> dict:
    if "application/x-nsf1" in accept:
        blob = nsf1.encode(field.stack().astype(np.float32))
        return {"nsf1_base64": base64.b64encode(blob).decode("ascii")}
    return {
        "fields": {
            "u": field.u.tolist(),
            "v": field.v.tolist(),
            "p": field.p.tolist(),
        }
    }


def create_app(
    registry: ModelRegistry,
    ui_dir: Optional[Union[str, Path]] = None,
) -> FastAPI:
    app = FastAPI(title="nsgen inference service")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "models": len(registry.entries)}

    @app.get("/models")
    def list_models():
        return registry.listing()

    @app.post("/solve")
    def solve(req: SolveRequest, request: Request):
        entry = registry.get(req.model_id)
        bc, shapes, geometry, grid = _build_case(req, entry)
        t0 = time.perf_counter()
        tensor = embed_boundary_conditions(bc, grid)
        if entry["channels"] == 4:
            tensor = with_mask_channel(tensor, geometry or GeometryMask.empty(grid))
        field = predict(entry["model"], tensor)
        latency_ms = (time.perf_counter() - t0) * 1e3
        payload = _field_payload(field, request.headers.get("accept", ""))
        payload["meta"] = {
            "latency_ms": latency_ms,
            "model_id": req.model_id,
            "grid_size": grid.nx,
        }
        return payload

    @app.post("/oracle-solve")
    def oracle_solve(req: OracleSolveRequest, request: Request):
        entry = registry.get(req.model_id)
        bc, shapes, geometry, grid = _build_case(req, entry)
        if req.budget_s <= 0:
            raise HTTPException(status_code=408, detail="solve budget exhausted")
        accept = request.headers.get("accept", "")
        params = SolverParams.for_case(bc, grid)

        def stream():
            deadline = time.monotonic() + req.budget_s
            field = initial_state(bc, grid)
            done = 0
            delta = float("inf")
            converged = False
            while done < params.max_steps:
                chunk = min(req.progress_every, params.max_steps - done)
                steps, delta, status = _advance(
                    field, bc, geometry, params, chunk, params.steady_tol
                )
                done += steps
                if status == 2:
                    yield _sse("error", {"detail": f"solver diverged at step {done}"})
                    return
                yield _sse("progress", {"step": done, "delta": delta})
                if status == 0:
                    converged = True
                    break
                if time.monotonic() > deadline:
                    body = _field_payload(field, accept)
                    body.update({"steps": done, "converged": False})
                    yield _sse("timeout", body)
                    return
            body = _field_payload(field, accept)
            body.update(
                {
                    "steps": done,
                    "converged": converged,
                    "divergence_linf": divergence_linf(field, geometry),
                }
            )
            yield _sse("result", body)

        return StreamingResponse(stream(), media_type="text/event-stream")

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def _sse(event: str, data: dict) -> str:
    return f"event: {event}\ndata: {json.dumps(data)}\n\n"


def app_from_env() -> FastAPI:
    """Uvicorn entry point: registry path from NSGEN_REGISTRY."""
    registry_path = os.environ.get("NSGEN_REGISTRY")
    if not registry_path:
        raise RuntimeError("set NSGEN_REGISTRY to a registry config file")
    registry = ModelRegistry.from_config(registry_path)
    return create_app(registry, ui_dir=os.environ.get("NSGEN_UI_DIR"))
