import numpy as np
import pytest

from pusr.backbone import (FUSED, ModelConfig, SRModel, VARIANTS, build_model,
                           forward, forward_fused, forward_train, fuse_model)
from pusr.metrics import peak_feature_elements
from pusr.model_io import named_tensors, parameter_count
from pusr.tensor import ConvParams


class TestModelConfig:
    def test_variant_presets(self):
        assert VARIANTS["U"] == (16, 8)
        assert VARIANTS["B"] == (64, 48, 32)
        assert VARIANTS["L"] == (80, 64, 48)

    def test_block_widths_follow_u(self):
        cfg = ModelConfig(stage_channels=(64, 48, 32), scale=4)
        assert cfg.block_widths() == (64, 48, 32, 48, 64)

    def test_two_stage_has_three_blocks(self):
        cfg = ModelConfig(stage_channels=(16, 8), scale=2)
        assert cfg.block_widths() == (16, 8, 16)
        assert len(build_model(cfg).blocks) == 3

    def test_block_count_law(self):
        for chans in [(8,), (16, 8), (32, 16, 8), (32, 24, 16, 8)]:
            cfg = ModelConfig(stage_channels=chans, scale=2)
            assert len(cfg.block_widths()) == 2 * len(chans) - 1

    def test_increasing_channels_rejected(self):
        with pytest.raises(ValueError, match="non-increasing"):
            ModelConfig(stage_channels=(16, 32), scale=2)

    def test_bad_scale_rejected(self):
        with pytest.raises(ValueError, match="scale"):
            ModelConfig(stage_channels=(16, 8), scale=5)

    def test_round_trips_through_dict(self):
        cfg = ModelConfig(stage_channels=(32, 16), scale=3, use_attention=False)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestBuildModel:
    def test_same_seed_bit_identical(self):
        cfg = ModelConfig(stage_channels=(16, 8), scale=2)
        a, b = build_model(cfg, seed=7), build_model(cfg, seed=7)
        for (na, ta), (nb, tb) in zip(named_tensors(a), named_tensors(b)):
            assert na == nb
            np.testing.assert_array_equal(ta, tb)

    def test_different_seed_differs(self):
        cfg = ModelConfig(stage_channels=(16, 8), scale=2)
        a, b = build_model(cfg, seed=1), build_model(cfg, seed=2)
        assert not np.array_equal(a.head.kernel, b.head.kernel)

    def test_variant_b_baseline_parameter_target(self):
        cfg = ModelConfig.for_variant("B", scale=4, use_attention=False)
        m = fuse_model(build_model(cfg))
        count = parameter_count(m)
        assert abs(count - 280_000) / 280_000 <= 0.01

    def test_variant_b_widths(self):
        cfg = ModelConfig.for_variant("B", scale=4)
        m = build_model(cfg)
        assert len(m.blocks) == 5
        assert tuple(b.rep1.c for b in m.blocks) == (64, 48, 32, 48, 64)

    def test_f64_build(self):
        cfg = ModelConfig(stage_channels=(8,), scale=2)
        m = build_model(cfg, dtype="f64")
        assert m.head.kernel.dtype == np.float64


class TestForward:
    def test_output_shape_law(self):
        rng = np.random.default_rng(0)
        for chans, scale in [((16, 8), 4), ((16, 8), 2), ((8,), 3)]:
            cfg = ModelConfig(stage_channels=chans, scale=scale)
            m = build_model(cfg, seed=0)
            x = rng.random((1, 3, 16, 24), dtype=np.float32)
            assert forward(m, x).shape == (1, 3, 16 * scale, 24 * scale)

    def test_schedules_bit_identical_training_form(self):
        rng = np.random.default_rng(1)
        for seed, chans in [(0, (16, 8)), (1, (32, 16, 8))]:
            cfg = ModelConfig(stage_channels=chans, scale=2)
            m = build_model(cfg, seed=seed)
            x = rng.random((2, 3, 24, 24), dtype=np.float32)
            a = forward(m, x, schedule="split")
            b = forward(m, x, schedule="index")
            assert np.array_equal(a, b)

    def test_schedules_bit_identical_fused_form(self):
        rng = np.random.default_rng(2)
        cfg = ModelConfig(stage_channels=(16, 8), scale=2)
        m = fuse_model(build_model(cfg, seed=3))
        x = rng.random((1, 3, 20, 20), dtype=np.float32)
        assert np.array_equal(forward(m, x, "split"), forward(m, x, "index"))

    def test_wrong_channel_count_rejected(self):
        cfg = ModelConfig(stage_channels=(8,), scale=2)
        m = build_model(cfg)
        with pytest.raises(ValueError, match="channel"):
            forward(m, np.zeros((1, 4, 16, 16), np.float32))

    def test_forward_fused_requires_fused_form(self):
        cfg = ModelConfig(stage_channels=(8,), scale=2)
        m = build_model(cfg)
        with pytest.raises(ValueError, match="fused"):
            forward_fused(m, np.zeros((1, 3, 16, 16), np.float32))


class TestFuseModel:
    def test_end_to_end_equivalence_f32(self):
        rng = np.random.default_rng(3)
        cfg = ModelConfig(stage_channels=(16, 8), scale=4)
        for seed in range(3):
            m = build_model(cfg, seed=seed)
            x = rng.random((1, 3, 32, 32), dtype=np.float32)
            err = np.abs(forward_train(m, x) - forward_fused(fuse_model(m), x)).max()
            assert err <= 1e-4

    def test_end_to_end_equivalence_f64(self):
        rng = np.random.default_rng(4)
        cfg = ModelConfig(stage_channels=(16, 8), scale=2)
        m = build_model(cfg, seed=0, dtype="f64")
        x = rng.random((1, 3, 32, 32))
        err = np.abs(forward_train(m, x) - forward_fused(fuse_model(m), x)).max()
        assert err <= 1e-9

    def test_head_tail_preserved_bit_exactly(self):
        cfg = ModelConfig(stage_channels=(16, 8), scale=2)
        m = build_model(cfg, seed=5)
        f = fuse_model(m)
        assert f.head is m.head and f.tail is m.tail
        for b in f.blocks:
            assert isinstance(b.rep1, ConvParams) and isinstance(b.rep2, ConvParams)

    def test_double_fuse_rejected(self):
        cfg = ModelConfig(stage_channels=(8,), scale=2)
        f = fuse_model(build_model(cfg))
        with pytest.raises(ValueError, match="already"):
            fuse_model(f)

    def test_fused_count_equals_conv_baseline_arithmetic(self):
        # A fused model must weigh exactly what the same topology built from
        # vanilla convs weighs: computed here from first principles.
        cfg = ModelConfig.for_variant("B", scale=4, use_attention=False)
        m = fuse_model(build_model(cfg))
        k = cfg.kernel
        c0 = cfg.stage_channels[0]
        want = c0 * cfg.in_channels * k * k + c0                   # head
        for w in cfg.block_widths():
            want += 2 * (w * w * k * k + w)                        # two convs
        tail_out = cfg.in_channels * cfg.scale ** 2
        want += tail_out * c0 * k * k + tail_out                   # tail
        assert parameter_count(m) == want

    def test_fused_peak_memory_law(self):
        cfg = ModelConfig.for_variant("U", scale=4)
        m = fuse_model(build_model(cfg))
        h = w = 24
        c0 = cfg.stage_channels[0]
        largest_temp = max(max(cfg.block_widths()), 3 * cfg.scale ** 2) * h * w
        assert peak_feature_elements(m, h, w) == c0 * h * w + largest_temp
