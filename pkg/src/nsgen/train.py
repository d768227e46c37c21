"""Weakly-supervised training: staged curriculum, balancing, telemetry.

The only supervision ever used is the composite objective: stencil residuals
on interior nodes plus known boundary values.  No converged solver field is
read as a regression target anywhere in this module.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from .data import DatasetManifest, load_manifest, load_sample
from .grid import BoundarySpec, GridSpec, rasterize_obstacles
from .model import (
    ModelConfig,
    UNetGenerator,
    build,
    load_checkpoint,
    save_checkpoint,
    transfer_expand_channels,
    transfer_expand_depth,
)
from .physics import (
    BoundaryTerms,
    LossWeights,
    balance_weights,
    build_boundary_terms,
    loss_terms,
)

log = logging.getLogger(__name__)

# Reynolds floor for loss evaluation: keeps the reciprocal diffusion
# coefficient bounded as sampled inlet/lid speeds approach zero; without it a
# handful of near-zero-speed samples dominates every batch through the
# 1/(Re h^2) viscous coefficient.
RE_FLOOR = 1.0

STAGE_ORDER = ["A0", "A", "B0", "B1", "B2", "B3"]

STAGE_SETUP = {
    "A0": {"size": 32, "channels": 3, "recipe": "prerun20", "surgery": None, "needs_source": False},
    "A": {"size": 32, "channels": 3, "recipe": "bc-only", "surgery": None, "needs_source": True},
    "B0": {"size": 32, "channels": 3, "recipe": "coarse8", "surgery": None, "needs_source": True},
    "B1": {"size": 32, "channels": 4, "recipe": "coarse8+square", "surgery": "expand_channels", "needs_source": True},
    "B2": {"size": 64, "channels": 4, "recipe": "coarse8+square", "surgery": "expand_depth", "needs_source": True},
    "B3": {"size": 64, "channels": 4, "recipe": "bc-only", "surgery": None, "needs_source": True},
}


class TrainingAborted(RuntimeError):
    """Loss went non-finite; the last good checkpoint was written."""


@dataclass
class StageSpec:
    stage: str
    epochs: int = 2000
    batch_size: int = 16
    learning_rate: float = 2e-5
    base_width: int = 64
    weights: Optional[LossWeights] = None  # None: balance on the first batch
    residual_mode: str = "abs"
    seed: int = 0
    source: Optional[str] = None
    checkpoint_every: int = 100
    grad_clip: Optional[float] = None  # max gradient norm; None disables

    def __post_init__(self):
        if self.stage not in STAGE_SETUP:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")

    @property
    def setup(self) -> dict:
        return STAGE_SETUP[self.stage]


@dataclass
class TrainReport:
    stage: str
    series: dict
    weights: LossWeights
    checkpoint: str
    best_checkpoint: str
    wall_clock_s: float
    seed: int

    def to_jsonable(self):
        return {
            "stage": self.stage,
            "series": self.series,
            "weights": self.weights.to_jsonable(),
            "checkpoint": self.checkpoint,
            "best_checkpoint": self.best_checkpoint,
            "wall_clock_s": self.wall_clock_s,
            "seed": self.seed,
        }


@dataclass
class _Batchable:
    """Per-dataset tensors consumed by the loss; all torch, channel layout
    mirrors physics.BoundaryTerms."""

    inputs: torch.Tensor  # [N, C, n, n]
    overwrite_values: torch.Tensor  # [N, 3, n, n]
    overwrite_mask: torch.Tensor
    bloss_values: torch.Tensor
    bloss_mask: torch.Tensor
    interior: torch.Tensor  # [N, n-2, n-2]
    n_interior: torch.Tensor  # [N]
    n_boundary: torch.Tensor  # [N]
    reynolds: torch.Tensor  # [N, 1, 1]
    neumann_pairs: tuple
    n_neumann: int
    grid: GridSpec

    def terms_for(self, idx: torch.Tensor) -> BoundaryTerms:
        return BoundaryTerms(
            overwrite_values=self.overwrite_values[idx],
            overwrite_mask=self.overwrite_mask[idx],
            bloss_values=self.bloss_values[idx],
            bloss_mask=self.bloss_mask[idx],
            interior=None,
            neumann_pairs=self.neumann_pairs,
            n_interior=0,
            n_boundary=0,
            n_neumann=self.n_neumann,
        )


def prepare_batches(
    dataset_dir: Union[str, Path],
    manifest: DatasetManifest,
    split: str = "train",
    dtype: torch.dtype = torch.float32,
) -> _Batchable:
    """Load a split into stacked tensors plus precomputed loss bookkeeping."""
    dataset_dir = Path(dataset_dir)
    grid = GridSpec.square(manifest.grid_size)
    records = [s for s in manifest.samples if s.split == split]
    if not records:
        raise ValueError(f"split {split!r} is empty")
    inputs, ov, om, bv, bm, inter, n_i, n_b, re = [], [], [], [], [], [], [], [], []
    pairs = None
    n_neumann = 0
    for rec in records:
        channels, bc, shapes = load_sample(dataset_dir, rec)
        geometry = rasterize_obstacles(shapes, grid) if shapes else None
        terms = build_boundary_terms(bc, grid, geometry)
        if pairs is None:
            pairs = terms.neumann_pairs
            n_neumann = terms.n_neumann
        elif pairs != terms.neumann_pairs:
            raise ValueError("mixed boundary-condition layouts within one dataset")
        inputs.append(torch.from_numpy(channels))
        ov.append(torch.from_numpy(terms.overwrite_values.astype(np.float32)))
        om.append(torch.from_numpy(terms.overwrite_mask.astype(np.float32)))
        bv.append(torch.from_numpy(terms.bloss_values.astype(np.float32)))
        bm.append(torch.from_numpy(terms.bloss_mask.astype(np.float32)))
        inter.append(torch.from_numpy(terms.interior[1:-1, 1:-1].astype(np.float32)))
        n_i.append(terms.n_interior)
        n_b.append(terms.n_boundary)
        re.append(max(bc.reynolds, RE_FLOOR))
    return _Batchable(
        inputs=torch.stack(inputs).to(dtype),
        overwrite_values=torch.stack(ov).to(dtype),
        overwrite_mask=torch.stack(om).to(dtype),
        bloss_values=torch.stack(bv).to(dtype),
        bloss_mask=torch.stack(bm).to(dtype),
        interior=torch.stack(inter).to(dtype),
        n_interior=torch.tensor(n_i, dtype=dtype),
        n_boundary=torch.tensor(n_b, dtype=dtype),
        reynolds=torch.tensor(re, dtype=dtype).view(-1, 1, 1),
        neumann_pairs=pairs,
        n_neumann=n_neumann,
        grid=grid,
    )


def batch_loss(
    model: UNetGenerator,
    batch: _Batchable,
    idx: torch.Tensor,
    weights: LossWeights,
    mode: str = "abs",
):
    """Composite loss on one mini-batch; returns (total, components dict)."""
    raw = model(batch.inputs[idx])
    terms = batch.terms_for(idx)
    overwritten = raw * (1.0 - terms.overwrite_mask) + terms.overwrite_values * terms.overwrite_mask
    parts = loss_terms(
        raw,
        overwritten,
        terms,
        batch.reynolds[idx],
        batch.grid.h,
        weights,
        mode=mode,
        interior=batch.interior[idx],
        n_interior=batch.n_interior[idx],
        n_boundary=batch.n_boundary[idx],
    )
    total = parts["total"].mean()
    comps = {
        k: float(parts[k].mean().detach()) if parts[k] is not None else 0.0
        for k in ("loss_x", "loss_y", "loss_c", "loss_residual", "loss_boundary")
    }
    comps["loss_neumann"] = (
        float(parts["loss_neumann"].mean().detach()) if parts["loss_neumann"] is not None else 0.0
    )
    comps["total"] = float(total.detach())
    return total, comps


def _autobalance(model: UNetGenerator, batch: _Batchable, idx: torch.Tensor) -> LossWeights:
    model.eval()
    with torch.no_grad():
        raw = model(batch.inputs[idx])
        terms = batch.terms_for(idx)
        overwritten = (
            raw * (1.0 - terms.overwrite_mask) + terms.overwrite_values * terms.overwrite_mask
        )
        weights = balance_weights(
            raw,
            overwritten,
            terms,
            batch.reynolds[idx],
            batch.grid.h,
            interior=batch.interior[idx],
            n_interior=batch.n_interior[idx],
            n_boundary=batch.n_boundary[idx],
        )
    model.train()
    return weights


def _resolve_model(spec: StageSpec, manifest: DatasetManifest) -> UNetGenerator:
    setup = spec.setup
    if manifest.grid_size != setup["size"] or manifest.channels != setup["channels"]:
        raise ValueError(
            f"dataset ({manifest.grid_size}, {manifest.channels}ch) does not match "
            f"stage {spec.stage} ({setup['size']}, {setup['channels']}ch)"
        )
    if manifest.recipe != setup["recipe"]:
        raise ValueError(
            f"dataset recipe {manifest.recipe!r} does not match stage "
            f"{spec.stage} ({setup['recipe']!r})"
        )
    if not setup["needs_source"]:
        config = ModelConfig(
            input_size=setup["size"],
            in_channels=setup["channels"],
            base_width=spec.base_width,
            seed=spec.seed,
        )
        return build(config)
    if not spec.source:
        raise ValueError(f"stage {spec.stage} requires a source checkpoint")
    src_model, _ = load_checkpoint(spec.source)
    surgery = setup["surgery"]
    if surgery is None:
        if src_model.config.input_size != setup["size"] or src_model.config.in_channels != setup["channels"]:
            raise ValueError("source checkpoint architecture does not match the stage")
        return src_model
    if surgery == "expand_channels":
        new_model = transfer_expand_channels(src_model, setup["channels"])
        _verify_channel_surgery(src_model, new_model)
        return new_model
    if surgery == "expand_depth":
        new_model, copied = transfer_expand_depth(src_model, setup["size"], seed=spec.seed)
        _verify_depth_surgery(src_model, new_model, copied)
        new_model.surgery_report = copied
        return new_model
    raise ValueError(f"unknown surgery {surgery!r}")


def _verify_channel_surgery(src: UNetGenerator, dst: UNetGenerator) -> None:
    n = src.config.input_size
    x = torch.zeros(1, src.config.in_channels, n, n)
    x[0, 0, n // 2, n // 2] = 0.25
    x4 = torch.cat([x, torch.zeros(1, 1, n, n)], dim=1)
    src.eval()
    dst.eval()
    with torch.no_grad():
        if not torch.equal(src(x), dst(x4)):
            raise RuntimeError("channel surgery broke zero-mask equivalence")


def _verify_depth_surgery(src: UNetGenerator, dst: UNetGenerator, copied: dict) -> None:
    s, d = src.state_dict(), dst.state_dict()
    for rec in copied["encoder"]:
        if not torch.equal(
            d[f"encoder.{rec['dst']}.conv.weight"], s[f"encoder.{rec['src']}.conv.weight"]
        ):
            raise RuntimeError("depth surgery failed to copy an outer encoder block")
    for rec in copied["decoder"]:
        if not torch.equal(
            d[f"decoder.{rec['dst']}.conv.weight"], s[f"decoder.{rec['src']}.conv.weight"]
        ):
            raise RuntimeError("depth surgery failed to copy an outer decoder block")


def train_stage(
    spec: StageSpec,
    dataset_dir: Union[str, Path],
    out_dir: Union[str, Path],
    manifest: Optional[DatasetManifest] = None,
) -> TrainReport:
    """Adam on the composite objective over the training split."""
    t0 = time.perf_counter()
    dataset_dir = Path(dataset_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = manifest or load_manifest(dataset_dir)
    model = _resolve_model(spec, manifest)
    model.train()
    batch = prepare_batches(dataset_dir, manifest, split="train")
    n_train = batch.inputs.shape[0]

    gen = torch.Generator().manual_seed(spec.seed)
    first_idx = torch.arange(min(spec.batch_size, n_train))
    weights = spec.weights or _autobalance(model, batch, first_idx)
    log.info("stage %s weights: %s", spec.stage, weights.to_jsonable())

    optimizer = torch.optim.Adam(model.parameters(), lr=spec.learning_rate, betas=(0.9, 0.999))
    telemetry_path = out_dir / "telemetry.jsonl"
    series: dict = {k: [] for k in (
        "loss_x", "loss_y", "loss_c", "loss_residual", "loss_neumann", "loss_boundary", "total"
    )}
    best = np.inf
    best_path = out_dir / "best.ckpt"
    final_path = out_dir / "final.ckpt"
    meta = {
        "stage": spec.stage,
        "epoch": 0,
        "lambda": weights.to_jsonable(),
        "seed": spec.seed,
        "recipe": manifest.recipe,
        "dataset_seed": manifest.seed,
    }

    with telemetry_path.open("w") as tele:
        for epoch in range(1, spec.epochs + 1):
            order = torch.randperm(n_train, generator=gen)
            epoch_comps: dict = {k: 0.0 for k in series}
            n_batches = 0
            for start in range(0, n_train, spec.batch_size):
                idx = order[start : start + spec.batch_size]
                if idx.numel() == 1:
                    # the 1x1 bottleneck's batch statistics are undefined for
                    # singleton batches; drop the remainder
                    continue
                optimizer.zero_grad()
                total, comps = batch_loss(model, batch, idx, weights, spec.residual_mode)
                if not np.isfinite(comps["total"]):
                    save_checkpoint(final_path, model, {**meta, "epoch": epoch, "aborted": True})
                    raise TrainingAborted(
                        f"non-finite loss at epoch {epoch}; last state saved to {final_path}"
                    )
                total.backward()
                if spec.grad_clip:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), spec.grad_clip)
                optimizer.step()
                for k in series:
                    epoch_comps[k] += comps[k]
                n_batches += 1
            record = {k: epoch_comps[k] / n_batches for k in series}
            for k in series:
                series[k].append(record[k])
            tele.write(json.dumps({"epoch": epoch, **record}) + "\n")
            if record["total"] < best:
                best = record["total"]
                save_checkpoint(best_path, model, {**meta, "epoch": epoch})
            if spec.checkpoint_every and epoch % spec.checkpoint_every == 0:
                save_checkpoint(out_dir / f"epoch_{epoch:05d}.ckpt", model, {**meta, "epoch": epoch})

    loss_digest = [round(v, 8) for v in series["total"][:: max(1, spec.epochs // 20)]]
    save_checkpoint(
        final_path, model, {**meta, "epoch": spec.epochs, "loss_digest": loss_digest}
    )
    report = TrainReport(
        stage=spec.stage,
        series=series,
        weights=weights,
        checkpoint=str(final_path),
        best_checkpoint=str(best_path),
        wall_clock_s=time.perf_counter() - t0,
        seed=spec.seed,
    )
    (out_dir / "report.json").write_text(json.dumps(report.to_jsonable(), indent=1))
    return report


def run_curriculum(
    stages: list[StageSpec],
    dataset_dirs: dict,
    out_root: Union[str, Path],
) -> list[TrainReport]:
    """Execute stages sequentially, wiring each stage's final checkpoint into
    the next and validating the declared ordering."""
    ids = [s.stage for s in stages]
    positions = [STAGE_ORDER.index(i) for i in ids]
    if positions != sorted(positions):
        raise ValueError(f"stages out of curriculum order: {ids}")
    out_root = Path(out_root)
    reports = []
    prev_checkpoint: Optional[str] = None
    for spec in stages:
        if spec.setup["needs_source"] and not spec.source:
            spec = replace(spec, source=prev_checkpoint)
        report = train_stage(spec, dataset_dirs[spec.stage], out_root / spec.stage)
        prev_checkpoint = report.checkpoint
        reports.append(report)
    return reports
