"""Training-input generation: warm-up recipes, sampling, 80/20 split, storage.

A dataset is a directory of NSF1 sample files plus ``manifest.json``.  Inputs
are never converged solutions: the two warm recipes are a 20-step solver
pre-run (cavity) and a coarse 8x8 solve interpolated up (internal flow); the
bc-only recipe embeds boundary values into a zero interior.
"""

from __future__ import annotations

import json
import logging
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
    shape_from_jsonable,
    with_mask_channel,
)
from .solver import DivergenceError, coarse_solution, prerun

log = logging.getLogger(__name__)

TRAIN_FRACTION = 0.8
PRERUN_STEPS = 20

# fixed-size square obstacles for the single-obstacle stages (side in nodes)
FIXED_SQUARE_NODES = {32: 6, 64: 12}
# random-shape ranges for the multi-obstacle stage, sized for 64x64 domains
RECT_SIDE_NODES = (4, 12)
CIRCLE_RADIUS_NODES = (3, 8)
INTERIOR_MARGIN = 2


@dataclass
class SampleRecord:
    id: int
    file: str
    split: str
    params: dict

    def to_jsonable(self):
        return {"id": self.id, "file": self.file, "split": self.split, "params": self.params}


@dataclass
class DatasetManifest:
    problem: str
    recipe: str
    n: int
    grid_size: int
    channels: int
    seed: int
    samples: list = field(default_factory=list)

    @property
    def train_ids(self) -> list[int]:
        return [s.id for s in self.samples if s.split == "train"]

    @property
    def test_ids(self) -> list[int]:
        return [s.id for s in self.samples if s.split == "test"]

    def to_jsonable(self):
        return {
            "problem": self.problem,
            "recipe": self.recipe,
            "n": self.n,
            "grid_size": self.grid_size,
            "channels": self.channels,
            "seed": self.seed,
            "samples": [s.to_jsonable() for s in self.samples],
        }

    @classmethod
    def from_jsonable(cls, d):
        samples = [SampleRecord(**s) for s in d["samples"]]
        return cls(
            problem=d["problem"],
            recipe=d["recipe"],
            n=d["n"],
            grid_size=d["grid_size"],
            channels=d["channels"],
            seed=d["seed"],
            samples=samples,
        )


def _assign_splits(n: int, rng: np.random.Generator) -> list[str]:
    n_train = int(TRAIN_FRACTION * n)
    order = rng.permutation(n)
    split = ["test"] * n
    for idx in order[:n_train]:
        split[idx] = "train"
    return split


def _write_manifest(out_dir: Path, manifest: DatasetManifest) -> None:
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest.to_jsonable(), indent=1, sort_keys=True)
    )


def _store_sample(out_dir: Path, idx: int, tensor: InputTensor, shapes: Sequence[Shape] = ()):
    name = f"sample_{idx:05d}.nsf1"
    nsf1.write_field(out_dir / name, tensor.channels, bc=tensor.bc, shapes=shapes)
    return name


def gen_prerun_dataset(
    n: int,
    seed: int,
    out_dir: Union[str, Path],
    grid_size: int = 32,
) -> DatasetManifest:
    """Cavity samples with lid speeds ~ U(0, 0.5); each input is the state
    after 20 solver steps from the boundary-embedded zero field."""
    if n < 1:
        raise ValueError("need at least one sample")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    grid = GridSpec.square(grid_size)
    splits = _assign_splits(n, rng)
    manifest = DatasetManifest("A-cavity", "prerun20", n, grid_size, 3, seed)
    for idx in range(n):
        while True:
            u0 = float(rng.uniform(0.0, 0.5))
            bc = BoundarySpec.cavity(u0)
            try:
                warm = prerun(bc, grid, n_steps=PRERUN_STEPS)
                break
            except (DivergenceError, FloatingPointError):
                log.warning("prerun diverged at u0=%.4f; resampling", u0)
        tensor = embed_boundary_conditions(bc, grid, interior=warm)
        name = _store_sample(out_dir, idx, tensor)
        manifest.samples.append(SampleRecord(idx, name, splits[idx], {"u0": u0}))
    _write_manifest(out_dir, manifest)
    return manifest


def _sample_fixed_square(rng: np.random.Generator, grid_size: int) -> Rectangle:
    side = FIXED_SQUARE_NODES[grid_size]
    extent = side - 1
    lo = INTERIOR_MARGIN
    hi = grid_size - 1 - INTERIOR_MARGIN - extent
    x = int(rng.integers(lo, hi + 1))
    y = int(rng.integers(lo, hi + 1))
    return Rectangle(x, y, extent, extent)


def _sample_random_shapes(rng: np.random.Generator, grid_size: int) -> list[Shape]:
    count = int(rng.integers(1, 4))
    shapes: list[Shape] = []
    for _ in range(count):
        for attempt in range(100):
            if rng.uniform() < 0.5:
                side = int(rng.integers(RECT_SIDE_NODES[0], RECT_SIDE_NODES[1] + 1))
                extent = side - 1
                lo = INTERIOR_MARGIN
                hi = grid_size - 1 - INTERIOR_MARGIN - extent
                if hi < lo:
                    continue
                shape: Shape = Rectangle(
                    int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1)), extent, extent
                )
            else:
                r = int(rng.integers(CIRCLE_RADIUS_NODES[0], CIRCLE_RADIUS_NODES[1] + 1))
                lo = INTERIOR_MARGIN + r
                hi = grid_size - 1 - INTERIOR_MARGIN - r
                if hi < lo:
                    continue
                shape = Circle(int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1)), r)
            shapes.append(shape)
            break
        else:
            raise RuntimeError("could not place an interior obstacle after 100 tries")
    return shapes


def gen_coarse_dataset(
    n: int,
    target_size: int,
    seed: int,
    out_dir: Union[str, Path],
    with_obstacle: bool = False,
) -> DatasetManifest:
    """Internal-flow samples with inlet components ~ U(0, 0.5); each input is
    a converged 8x8 solve (no obstacles) interpolated to ``target_size``.
    With ``with_obstacle`` a fixed-size square is placed at a random interior
    location and appended as the fourth channel, zeroing u/v/p on solid."""
    if target_size not in (32, 64):
        raise ValueError("target_size must be 32 or 64")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    grid = GridSpec.square(target_size)
    splits = _assign_splits(n, rng)
    channels = 4 if with_obstacle else 3
    recipe = "coarse8+square" if with_obstacle else "coarse8"
    manifest = DatasetManifest("B-internal", recipe, n, target_size, channels, seed)
    for idx in range(n):
        while True:
            u0 = float(rng.uniform(0.0, 0.5))
            v0 = float(rng.uniform(0.0, 0.5))
            bc = BoundarySpec.internal_flow(u0, v0)
            try:
                coarse = coarse_solution(bc)
                break
            except (DivergenceError, FloatingPointError):
                log.warning("coarse solve diverged at (%.3f, %.3f); resampling", u0, v0)
        warm = interpolate_field(coarse, grid)
        tensor = embed_boundary_conditions(bc, grid, interior=warm)
        params = {"u0": u0, "v0": v0}
        shapes: list[Shape] = []
        if with_obstacle:
            square = _sample_fixed_square(rng, target_size)
            shapes = [square]
            tensor = with_mask_channel(tensor, rasterize_obstacles(shapes, grid))
            params["shapes"] = [s.to_jsonable() for s in shapes]
        name = _store_sample(out_dir, idx, tensor, shapes)
        manifest.samples.append(SampleRecord(idx, name, splits[idx], params))
    _write_manifest(out_dir, manifest)
    return manifest


def gen_bc_only_dataset(
    stage: str,
    n: int,
    seed: int,
    out_dir: Union[str, Path],
) -> DatasetManifest:
    """Zero-interior inputs with embedded boundary values.

    Stage "A": cavity with a movable lid segment (start ~ U(0, 0.5), extent ~
    U(0.25, 1 - start)).  Stage "B3": 64x64 internal flow with one to three
    random rectangle/circle obstacles and a mask channel.
    """
    if stage not in ("A", "B3"):
        raise ValueError("bc-only datasets exist for stages A and B3")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    splits = _assign_splits(n, rng)
    if stage == "A":
        grid = GridSpec.square(32)
        manifest = DatasetManifest("A-cavity", "bc-only", n, 32, 3, seed)
        for idx in range(n):
            u0 = float(rng.uniform(0.0, 0.5))
            start = float(rng.uniform(0.0, 0.5))
            extent = float(rng.uniform(0.25, 1.0 - start))
            bc = BoundarySpec.cavity(u0, lid_start=start, lid_extent=extent)
            tensor = embed_boundary_conditions(bc, grid)
            name = _store_sample(out_dir, idx, tensor)
            manifest.samples.append(
                SampleRecord(idx, name, splits[idx], {"u0": u0, "lid_start": start, "lid_extent": extent})
            )
    else:
        grid = GridSpec.square(64)
        manifest = DatasetManifest("B-internal", "bc-only", n, 64, 4, seed)
        for idx in range(n):
            u0 = float(rng.uniform(0.0, 0.5))
            v0 = float(rng.uniform(0.0, 0.5))
            bc = BoundarySpec.internal_flow(u0, v0)
            shapes = _sample_random_shapes(rng, 64)
            tensor = with_mask_channel(
                embed_boundary_conditions(bc, grid), rasterize_obstacles(shapes, grid)
            )
            name = _store_sample(out_dir, idx, tensor, shapes)
            manifest.samples.append(
                SampleRecord(
                    idx, name, splits[idx],
                    {"u0": u0, "v0": v0, "shapes": [s.to_jsonable() for s in shapes]},
                )
            )
    _write_manifest(out_dir, manifest)
    return manifest


def load_manifest(dataset_dir: Union[str, Path]) -> DatasetManifest:
    return DatasetManifest.from_jsonable(
        json.loads((Path(dataset_dir) / "manifest.json").read_text())
    )


def load_sample(dataset_dir: Union[str, Path], record: SampleRecord):
    """Returns (channels float32 [C, n, n], bc, shapes)."""
    channels, bc, shapes = nsf1.read_field(Path(dataset_dir) / record.file)
    return channels.astype(np.float32), bc, shapes


def generate_stage_dataset(
    stage: str, n: int, seed: int, out_dir: Union[str, Path]
) -> DatasetManifest:
    """Dispatch on the curriculum stage id."""
    stage = stage.upper()
    if stage == "A0":
        return gen_prerun_dataset(n, seed, out_dir)
    if stage == "A":
        return gen_bc_only_dataset("A", n, seed, out_dir)
    if stage == "B0":
        return gen_coarse_dataset(n, 32, seed, out_dir)
    if stage == "B1":
        return gen_coarse_dataset(n, 32, seed, out_dir, with_obstacle=True)
    if stage == "B2":
        return gen_coarse_dataset(n, 64, seed, out_dir, with_obstacle=True)
    if stage == "B3":
        return gen_bc_only_dataset("B3", n, seed, out_dir)
    raise ValueError(f"unknown stage {stage!r}")
