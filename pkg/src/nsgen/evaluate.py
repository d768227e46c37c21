"""Model evaluation against the iterative oracle, latency benchmarks, and
profile/contour exports."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import nsf1
from .grid import (
    BoundarySpec,
    Circle,
    FlowField,
    GeometryMask,
    GridSpec,
    InputTensor,
    Rectangle,
    Shape,
    embed_boundary_conditions,
    interpolate_field,
    rasterize_obstacles,
    rmse,
    with_mask_channel,
)
from .model import UNetGenerator, load_checkpoint, predict
from .solver import SolverParams, coarse_solution, prerun, solve_steady
from .train import STAGE_SETUP

ORACLE_TOL = 1e-6


@dataclass
class EvalCase:
    name: str
    bc: BoundarySpec
    shapes: list = field(default_factory=list)


def table_cases(stage: str) -> list[EvalCase]:
    """The four summary comparison cases; obstacle placements for the
    internal-flow rows use a fixed recorded layout."""
    if stage == "A0":
        return [EvalCase("cavity-u0.5", BoundarySpec.cavity(0.5))]
    if stage == "A":
        return [EvalCase("half-lid-u0.5", BoundarySpec.cavity(0.5, lid_start=0.5, lid_extent=0.5))]
    if stage in ("B0",):
        return [EvalCase("inlet-0.05-0.5", BoundarySpec.internal_flow(0.05, 0.5))]
    if stage in ("B1", "B2"):
        side = 12 if stage == "B2" else 6
        n = 64 if stage == "B2" else 32
        corner = (n - side) // 2
        return [
            EvalCase(
                "inlet-0.05-0.5-square",
                BoundarySpec.internal_flow(0.05, 0.5),
                [Rectangle(corner, corner, side - 1, side - 1)],
            )
        ]
    if stage == "B3":
        return [
            EvalCase(
                "inlet-0.2-0.5-circles",
                BoundarySpec.internal_flow(0.2, 0.5),
                [Circle(16, 20, 5), Circle(40, 36, 6), Circle(28, 52, 4)],
            )
        ]
    raise ValueError(f"no table case for stage {stage!r}")


def _case_key(bc: BoundarySpec, shapes: Sequence[Shape], grid: GridSpec) -> str:
    payload = json.dumps(
        {
            "bc": bc.to_jsonable(),
            "shapes": [s.to_jsonable() for s in shapes],
            "n": grid.nx,
            "tol": ORACLE_TOL,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


class TruthCache:
    """Converged oracle fields keyed by (bc, shapes, grid); optional disk tier."""

    def __init__(self, cache_dir: Optional[Union[str, Path]] = None):
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self._mem: dict = {}

    def get(self, bc: BoundarySpec, shapes: Sequence[Shape], grid: GridSpec):
        key = _case_key(bc, shapes, grid)
        if key in self._mem:
            return self._mem[key]
        if self.cache_dir is not None:
            path = self.cache_dir / f"truth_{key}.nsf1"
            if path.exists():
                channels, _, _ = nsf1.read_field(path)
                f = FlowField(channels[0], channels[1], channels[2], grid)
                self._mem[key] = (f, True)
                return f, True
        mask = rasterize_obstacles(shapes, grid) if shapes else None
        params = SolverParams.for_case(bc, grid, steady_tol=ORACLE_TOL)
        result = solve_steady(bc, mask, grid, params)
        self._mem[key] = (result.field, result.converged)
        if self.cache_dir is not None and result.converged:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            nsf1.write_field(
                self.cache_dir / f"truth_{key}.nsf1", result.field.stack(), bc=bc, shapes=shapes
            )
        return result.field, result.converged


def prepare_input(
    recipe: str,
    bc: BoundarySpec,
    shapes: Sequence[Shape],
    grid: GridSpec,
    channels: int,
) -> tuple[InputTensor, float]:
    """Build the stage-appropriate model input; returns (tensor, prep seconds)."""
    t0 = time.perf_counter()
    if recipe == "prerun20":
        warm = prerun(bc, grid, n_steps=20)
        tensor = embed_boundary_conditions(bc, grid, interior=warm)
    elif recipe in ("coarse8", "coarse8+square"):
        warm = interpolate_field(coarse_solution(bc), grid)
        tensor = embed_boundary_conditions(bc, grid, interior=warm)
    elif recipe == "bc-only":
        tensor = embed_boundary_conditions(bc, grid)
    else:
        raise ValueError(f"unknown input recipe {recipe!r}")
    if channels == 4:
        geometry = (
            rasterize_obstacles(shapes, grid) if shapes else GeometryMask.empty(grid)
        )
        tensor = with_mask_channel(tensor, geometry)
    return tensor, time.perf_counter() - t0


def evaluate_model(
    model: UNetGenerator,
    stage: str,
    cases: Sequence[EvalCase],
    cache: Optional[TruthCache] = None,
) -> dict:
    """Per-case RMSE of the generated fields against converged oracle truth."""
    cache = cache or TruthCache()
    recipe = STAGE_SETUP[stage]["recipe"]
    grid = GridSpec.square(model.config.input_size)
    rows = []
    for case in cases:
        truth, converged = cache.get(case.bc, case.shapes, grid)
        tensor, prep_s = prepare_input(
            recipe, case.bc, case.shapes, grid, model.config.in_channels
        )
        pred = predict(model, tensor)
        mask = rasterize_obstacles(case.shapes, grid) if case.shapes else None
        ru, rv, rp = rmse(pred, truth, exclude=mask)
        rows.append(
            {
                "case": case.name,
                "rmse_u": ru,
                "rmse_v": rv,
                "rmse_p": rp,
                "prep_seconds": prep_s,
                "oracle_converged": bool(converged),
            }
        )
    usable = [r for r in rows if r["oracle_converged"]]
    means = {
        f"mean_{k}": float(np.mean([r[k] for r in usable])) if usable else float("nan")
        for k in ("rmse_u", "rmse_v", "rmse_p")
    }
    return {"stage": stage, "cases": rows, **means}


def evaluate_checkpoint(
    checkpoint: Union[str, Path],
    cases: Optional[Sequence[EvalCase]] = None,
    cache: Optional[TruthCache] = None,
) -> dict:
    model, meta = load_checkpoint(checkpoint)
    stage = meta.get("stage", "A0")
    cases = cases if cases is not None else table_cases(stage)
    report = evaluate_model(model, stage, cases, cache)
    report["checkpoint"] = str(checkpoint)
    return report


def benchmark_latency(model: UNetGenerator, n_runs: int = 100, warmup: int = 5) -> dict:
    """Median/p95 wall-clock of single forward passes at the native size."""
    if n_runs < 30:
        raise ValueError("need at least 30 timed runs")
    import torch

    model.eval()
    n = model.config.input_size
    x = torch.zeros(1, model.config.in_channels, n, n)
    times = []
    with torch.no_grad():
        for _ in range(warmup):
            model(x)
        for _ in range(n_runs):
            t0 = time.perf_counter()
            model(x)
            times.append((time.perf_counter() - t0) * 1e3)
    times = np.array(times)
    return {
        "median_ms": float(np.median(times)),
        "p95_ms": float(np.percentile(times, 95)),
        "n_runs": n_runs,
        "input_size": n,
        "cpu": platform.processor() or platform.machine(),
        "threads": torch.get_num_threads(),
    }


# -- profile and contour exports --------------------------------------------


def _resolve_line(field: FlowField, line: str):
    n = field.grid.nx
    if line == "centerline":
        i = n // 2
        coord = np.arange(n) * field.grid.h
        return coord, field.u[:, i], field.v[:, i]
    if line.startswith("row:"):
        j = int(line.split(":", 1)[1])
        if not 0 <= j < n:
            raise ValueError(f"row {j} outside grid of {n} rows")
        coord = np.arange(n) * field.grid.h
        return coord, field.u[j, :], field.v[j, :]
    if line == "outlet":
        coord = np.arange(n) * field.grid.h
        return coord, field.u[:, -1], field.v[:, -1]
    raise ValueError(f"unknown profile line {line!r}")


def export_profiles(
    field: FlowField,
    lines: Sequence[str],
    out_csv: Union[str, Path],
) -> None:
    """Write (line, coordinate, u, v) rows for each requested cross-section."""
    with Path(out_csv).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["line", "coordinate", "u", "v"])
        for line in lines:
            coord, u, v = _resolve_line(field, line)
            for c, uu, vv in zip(coord, u, v):
                writer.writerow([line, f"{c:.8g}", f"{uu:.10g}", f"{vv:.10g}"])


def export_contours(
    field: FlowField,
    out_prefix: Union[str, Path],
    fmt: str = "png",
    mask: Optional[GeometryMask] = None,
) -> list[Path]:
    """Per-channel contour rasters (PNG via matplotlib) or an NSF1 dump."""
    out_prefix = Path(out_prefix)
    if fmt == "nsf1":
        path = out_prefix.with_suffix(".nsf1")
        nsf1.write_field(path, field.stack())
        return [path]
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    x, y = field.grid.coords()
    for name in ("u", "v", "p"):
        values = getattr(field, name)
        if mask is not None and mask.mask.any():
            values = np.where(mask.mask == 1, np.nan, values)
        fig, ax = plt.subplots(figsize=(4, 3.2))
        im = ax.contourf(x, y, values, levels=24)
        fig.colorbar(im, ax=ax)
        ax.set_title(name)
        ax.set_aspect("equal")
        path = Path(f"{out_prefix}_{name}.png")
        fig.savefig(path, dpi=110, bbox_inches="tight")
        plt.close(fig)
        paths.append(path)
    return paths
