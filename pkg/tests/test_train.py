import json

import numpy as np
import pytest
import torch

from nsgen import data
from nsgen.model import build, load_checkpoint, save_checkpoint, ModelConfig
from nsgen.train import (
    StageSpec,
    TrainingAborted,
    batch_loss,
    prepare_batches,
    run_curriculum,
    train_stage,
)
from nsgen.physics import LossWeights


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("ds_a0")
    manifest = data.gen_prerun_dataset(8, seed=5, out_dir=d)
    return d, manifest


def tiny_spec(**kw):
    base = dict(stage="A0", epochs=2, batch_size=4, learning_rate=1e-3,
                base_width=8, seed=3, checkpoint_every=0)
    base.update(kw)
    return StageSpec(**base)


class TestStageSpec:
    def test_zero_epochs_rejected(self):
        with pytest.raises(ValueError):
            tiny_spec(epochs=0)

    def test_source_required_for_dependent_stages(self, tmp_path):
        d = tmp_path / "ds"
        data.gen_coarse_dataset(4, 32, seed=1, out_dir=d, with_obstacle=True)
        with pytest.raises(ValueError):
            train_stage(tiny_spec(stage="B1", epochs=1), d, tmp_path / "out")

    def test_unknown_stage_rejected(self):
        with pytest.raises(ValueError):
            StageSpec(stage="Z9")


class TestTrainStage:
    def test_smoke_run_produces_report(self, tiny_dataset, tmp_path):
        d, _ = tiny_dataset
        report = train_stage(tiny_spec(), d, tmp_path / "run")
        assert len(report.series["total"]) == 2
        assert all(np.isfinite(v) for v in report.series["total"])
        assert all(v >= 0 for comp in report.series.values() for v in comp)
        model, meta = load_checkpoint(report.checkpoint)
        assert meta["stage"] == "A0"
        lines = (tmp_path / "run" / "telemetry.jsonl").read_text().strip().splitlines()
        assert len(lines) == 2
        rec = json.loads(lines[0])
        assert {"epoch", "loss_x", "loss_c", "loss_boundary", "total"} <= set(rec)

    def test_autobalance_freezes_weights(self, tiny_dataset, tmp_path):
        d, _ = tiny_dataset
        report = train_stage(tiny_spec(epochs=1), d, tmp_path / "auto")
        w = report.weights
        assert w.lambda_b > 0 and w.lambda_1 > 0

    def test_epoch1_deterministic(self, tiny_dataset, tmp_path):
        d, _ = tiny_dataset
        r1 = train_stage(tiny_spec(epochs=1), d, tmp_path / "r1")
        r2 = train_stage(tiny_spec(epochs=1), d, tmp_path / "r2")
        assert r1.series["total"][0] == r2.series["total"][0]

    def test_explicit_weights_respected(self, tiny_dataset, tmp_path):
        d, _ = tiny_dataset
        w = LossWeights(lambda_1=2.0, lambda_2=2.0, lambda_3=2.0, lambda_n=0.5, lambda_b=9.0)
        report = train_stage(tiny_spec(epochs=1, weights=w), d, tmp_path / "w")
        assert report.weights == w

    def test_recipe_mismatch_rejected(self, tmp_path):
        d = tmp_path / "ds"
        data.gen_bc_only_dataset("A", 4, seed=1, out_dir=d)
        with pytest.raises(ValueError):
            train_stage(tiny_spec(), d, tmp_path / "out")

    def test_nonfinite_abort_saves_checkpoint(self, tiny_dataset, tmp_path):
        d, _ = tiny_dataset
        spec = tiny_spec(epochs=3, learning_rate=1e18)  # guaranteed blowup
        with pytest.raises(TrainingAborted):
            train_stage(spec, d, tmp_path / "abort")
        assert (tmp_path / "abort" / "final.ckpt").exists()


class TestCurriculum:
    def test_out_of_order_rejected(self, tmp_path):
        stages = [tiny_spec(stage="A0"), StageSpec(stage="B2", source="x")]
        with pytest.raises(ValueError):
            run_curriculum([stages[1], stages[0]], {}, tmp_path)

    def test_a0_to_a_chain(self, tmp_path):
        ds_a0 = tmp_path / "ds_a0"
        ds_a = tmp_path / "ds_a"
        data.gen_prerun_dataset(6, seed=2, out_dir=ds_a0)
        data.gen_bc_only_dataset("A", 6, seed=3, out_dir=ds_a)
        reports = run_curriculum(
            [tiny_spec(epochs=1), tiny_spec(stage="A", epochs=1, source=None)],
            {"A0": ds_a0, "A": ds_a},
            tmp_path / "runs",
        )
        assert [r.stage for r in reports] == ["A0", "A"]
        # stage A consumed A0's final checkpoint
        model, meta = load_checkpoint(reports[1].checkpoint)
        assert meta["stage"] == "A"

    def test_channel_surgery_verified_in_b1(self, tmp_path):
        ds_b0 = tmp_path / "ds_b0"
        ds_b1 = tmp_path / "ds_b1"
        data.gen_coarse_dataset(6, 32, seed=4, out_dir=ds_b0)
        data.gen_coarse_dataset(6, 32, seed=5, out_dir=ds_b1, with_obstacle=True)
        b0 = train_stage(tiny_spec(stage="B0", epochs=1, source="unused"), ds_b0, tmp_path / "b0") \
            if False else None
        # B0 shares the A-architecture; train from scratch stand-in checkpoint
        cfg = ModelConfig(input_size=32, in_channels=3, base_width=8, seed=1)
        src = build(cfg)
        src_path = tmp_path / "b0.ckpt"
        save_checkpoint(src_path, src, {"stage": "B0"})
        report = train_stage(
            tiny_spec(stage="B1", epochs=1, source=str(src_path)), ds_b1, tmp_path / "b1"
        )
        model, meta = load_checkpoint(report.checkpoint)
        assert model.config.in_channels == 4


def test_batch_loss_components_nonnegative(tiny_dataset):
    d, manifest = tiny_dataset
    batch = prepare_batches(d, manifest)
    model = build(ModelConfig(input_size=32, in_channels=3, base_width=8, seed=0))
    total, comps = batch_loss(model, batch, torch.arange(4), LossWeights())
    assert total.item() >= 0
    for key, val in comps.items():
        assert val >= 0, key
