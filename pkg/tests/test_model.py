import numpy as np
import pytest
import torch

from nsgen.grid import BoundarySpec, GridSpec, embed_boundary_conditions
from nsgen.model import (
    ModelConfig,
    build,
    load_checkpoint,
    predict,
    save_checkpoint,
    transfer_expand_channels,
    transfer_expand_depth,
)


def small_config(**kw):
    base = dict(input_size=16, in_channels=3, base_width=8, seed=11)
    base.update(kw)
    return ModelConfig(**base)


class TestConfig:
    def test_depth_from_size(self):
        assert ModelConfig(input_size=32).depth == 5
        assert ModelConfig(input_size=64).depth == 6

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            ModelConfig(input_size=48)
        with pytest.raises(ValueError):
            ModelConfig(input_size=4)
        with pytest.raises(ValueError):
            ModelConfig(input_size=32, in_channels=5)

    def test_width_doubling_with_cap(self):
        cfg = ModelConfig(input_size=64, base_width=64)
        assert cfg.encoder_widths() == [64, 128, 256, 512, 512, 512]

    def test_parameter_count_matches_model(self):
        for cfg in (small_config(), small_config(in_channels=4), ModelConfig(input_size=32)):
            model = build(cfg)
            actual = sum(p.numel() for p in model.parameters())
            assert actual == cfg.parameter_count()


class TestBuild:
    def test_block_counts(self):
        m32 = build(ModelConfig(input_size=32, base_width=8))
        assert len(m32.encoder) == 5 and len(m32.decoder) == 5
        m64 = build(ModelConfig(input_size=64, base_width=8))
        assert len(m64.encoder) == 6 and len(m64.decoder) == 6

    def test_equal_seeds_bit_identical(self):
        a, b = build(small_config()), build(small_config())
        for (na, pa), (nb, pb) in zip(a.state_dict().items(), b.state_dict().items()):
            assert na == nb
            assert torch.equal(pa, pb)

    def test_different_seeds_differ(self):
        a, b = build(small_config(seed=1)), build(small_config(seed=2))
        assert not torch.equal(a.encoder[0].conv.weight, b.encoder[0].conv.weight)

    def test_forward_shape_and_range(self):
        cfg = small_config(channel_scales=(1.0, 1.0, 2.0))
        model = build(cfg).eval()
        x = torch.randn(2, 3, 16, 16)
        with torch.no_grad():
            out = model(x)
            raw = model.forward_prescale(x)
        assert out.shape == (2, 3, 16, 16)
        assert raw.abs().max() <= 1.0
        assert out[:, 2].abs().max() <= 2.0
        assert out[:, 0].abs().max() <= 1.0

    def test_bottleneck_reaches_one_by_one(self):
        model = build(small_config()).eval()  # batch-1 probe needs running stats
        acts = []
        h = torch.randn(1, 3, 16, 16)
        with torch.no_grad():
            for blk in model.encoder:
                h = blk(h)
                acts.append(h.shape[-1])
        assert acts == [8, 4, 2, 1]


class TestPredict:
    def test_boundary_ring_overwritten(self):
        g = GridSpec.square(16)
        bc = BoundarySpec.cavity(0.5)
        tensor = embed_boundary_conditions(bc, g)
        model = build(small_config())
        field = predict(model, tensor)
        np.testing.assert_allclose(field.u[-1, :], 0.5, atol=1e-7)
        np.testing.assert_allclose(field.v[:, 0], 0.0, atol=0)
        assert field.u.dtype == np.float64

    def test_channel_mismatch_rejected(self):
        g = GridSpec.square(16)
        tensor = embed_boundary_conditions(BoundarySpec.cavity(0.1), g)
        model = build(small_config(in_channels=4))
        with pytest.raises(ValueError):
            predict(model, tensor)

    def test_deterministic(self):
        g = GridSpec.square(16)
        tensor = embed_boundary_conditions(BoundarySpec.cavity(0.3), g)
        model = build(small_config())
        a = predict(model, tensor)
        b = predict(model, tensor)
        assert a.u.tobytes() == b.u.tobytes()


class TestExpandChannels:
    def test_zero_mask_reproduces_source_bit_exactly(self):
        src = build(small_config())
        dst = transfer_expand_channels(src, 4)
        x3 = torch.randn(2, 3, 16, 16)
        x4 = torch.cat([x3, torch.zeros(2, 1, 16, 16)], dim=1)
        src.eval()
        dst.eval()
        with torch.no_grad():
            assert torch.equal(src(x3), dst(x4))

    def test_parameter_count_delta(self):
        src = build(small_config())
        dst = transfer_expand_channels(src, 4)
        delta = sum(p.numel() for p in dst.parameters()) - sum(
            p.numel() for p in src.parameters()
        )
        assert delta == 4 * 4 * src.config.base_width

    def test_other_deltas_rejected(self):
        src = build(small_config())
        with pytest.raises(ValueError):
            transfer_expand_channels(src, 5)
        with pytest.raises(ValueError):
            transfer_expand_channels(src, 3)


class TestExpandDepth:
    def test_depth_grows_by_one(self):
        src = build(ModelConfig(input_size=32, base_width=16, seed=3))
        dst, copied = transfer_expand_depth(src, 64)
        assert dst.config.depth == src.config.depth + 1
        assert len(dst.encoder) == 6

    def test_outer_blocks_copied_bit_exactly(self):
        src = build(ModelConfig(input_size=32, base_width=16, seed=3))
        dst, copied = transfer_expand_depth(src, 64)
        assert len(copied["encoder"]) == src.config.depth - 1
        assert len(copied["decoder"]) == src.config.depth - 1
        s_state, d_state = src.state_dict(), dst.state_dict()
        for rec in copied["encoder"]:
            w = f"encoder.{rec['dst']}.conv.weight"
            assert torch.equal(d_state[w], s_state[f"encoder.{rec['src']}.conv.weight"])
        for rec in copied["decoder"]:
            w = f"decoder.{rec['dst']}.conv.weight"
            assert torch.equal(d_state[w], s_state[f"decoder.{rec['src']}.conv.weight"])

    def test_innermost_blocks_fresh(self):
        src = build(ModelConfig(input_size=32, base_width=16, seed=3))
        dst, copied = transfer_expand_depth(src, 64)
        copied_enc = {rec["dst"] for rec in copied["encoder"]}
        assert src.config.depth - 1 not in copied_enc  # innermost src position
        assert dst.config.depth - 1 not in copied_enc

    def test_non_doubling_rejected(self):
        src = build(ModelConfig(input_size=32, base_width=16))
        with pytest.raises(ValueError):
            transfer_expand_depth(src, 128)
        with pytest.raises(ValueError):
            transfer_expand_depth(src, 32)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        model = build(small_config())
        # exercise running stats so int buffers are non-trivial
        model.train()
        model(torch.randn(4, 3, 16, 16))
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, metadata={"stage": "A0", "epoch": 7})
        back, meta = load_checkpoint(path)
        assert meta == {"stage": "A0", "epoch": 7}
        for (na, ta), (nb, tb) in zip(model.state_dict().items(), back.state_dict().items()):
            assert na == nb
            if ta.dtype.is_floating_point:
                assert ta.float().numpy().tobytes() == tb.float().numpy().tobytes()
            else:
                assert torch.equal(ta, tb)

    def test_forward_identical_after_roundtrip(self, tmp_path):
        model = build(small_config())
        model.eval()
        x = torch.randn(1, 3, 16, 16)
        with torch.no_grad():
            before = model(x)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model)
        back, _ = load_checkpoint(path)
        back.eval()
        with torch.no_grad():
            after = back(x)
        assert torch.equal(before, after)

    def test_version_enforced(self, tmp_path):
        import json
        import zipfile

        model = build(small_config())
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model)
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
            blob = zf.read("params.bin")
        manifest["format_version"] = 99
        bad = tmp_path / "bad.ckpt"
        with zipfile.ZipFile(bad, "w") as zf:
            zf.writestr("manifest.json", json.dumps(manifest))
            zf.writestr("params.bin", blob)
        with pytest.raises(ValueError):
            load_checkpoint(bad)


def test_zero_input_zero_bias_first_preactivation():
    model = build(small_config())
    with torch.no_grad():
        model.encoder[0].conv.bias.zero_()
        pre = model.encoder[0].conv(torch.zeros(1, 3, 16, 16))
    assert torch.all(pre == 0)
