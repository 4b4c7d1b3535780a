import numpy as np
import pytest

from pusr.reparam import (RepMBConvParams, effective_k2, forward_train, fuse,
                          identity_kernel, merge_kxk_into_pointwise,
                          merge_pointwise_into_kxk, se_vector)
from pusr.tensor import ConvParams, conv2d, scale_channels

from oracles import composed_rep_stages, naive_conv2d


def random_rep(rng, c, e=2, k=3, dtype=np.float32, scale=0.3):
    cm = e * c
    hidden = max(1, cm // 4)

    def sn(*shape):
        return (rng.standard_normal(shape) * scale).astype(dtype)

    return RepMBConvParams(
        k1=ConvParams(sn(cm, c, 1, 1), sn(cm), padding=0),
        k2=ConvParams(sn(cm, cm, k, k), sn(cm)),
        k3=ConvParams(sn(c, cm, 1, 1), sn(c), padding=0),
        s=sn(cm), v=sn(cm), se_w1=sn(hidden, cm), se_w2=sn(cm, hidden))


class TestIdentityKernel:
    def test_one_channel_1x1(self):
        np.testing.assert_array_equal(identity_kernel(1, 1), [[[[1.0]]]])

    def test_two_channel_3x3_positions(self):
        k = identity_kernel(2, 3)
        want = np.zeros((2, 2, 3, 3), np.float32)
        want[0, 0, 1, 1] = 1
        want[1, 1, 1, 1] = 1
        np.testing.assert_array_equal(k, want)

    def test_acts_as_identity_under_conv(self):
        rng = np.random.default_rng(0)
        x = rng.random((2, 5, 6, 6), dtype=np.float32)
        p = ConvParams(identity_kernel(5, 3), np.zeros(5, np.float32))
        np.testing.assert_array_equal(conv2d(x, p), x)

    def test_even_k_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            identity_kernel(2, 4)


class TestSeVector:
    def test_zero_w2_gives_half(self):
        rng = np.random.default_rng(1)
        v = rng.standard_normal(8)
        w1 = rng.standard_normal((2, 8))
        np.testing.assert_allclose(se_vector(v, w1, np.zeros((8, 2))), 0.5)

    def test_zero_v_gives_half(self):
        rng = np.random.default_rng(2)
        got = se_vector(np.zeros(8), rng.standard_normal((2, 8)),
                        rng.standard_normal((8, 2)))
        np.testing.assert_allclose(got, 0.5)

    def test_open_unit_interval(self):
        rng = np.random.default_rng(3)
        got = se_vector(rng.standard_normal(16) * 3,
                        rng.standard_normal((4, 16)),
                        rng.standard_normal((16, 4)))
        assert np.all(got > 0) and np.all(got < 1)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            se_vector(np.zeros(8), np.zeros((2, 8)), np.zeros((7, 2)))


class TestMergePointwiseIntoKxk:
    def test_identity_pointwise_is_noop(self):
        rng = np.random.default_rng(4)
        k2 = ConvParams((rng.standard_normal((4, 4, 3, 3)) * 0.3).astype(np.float32),
                        (rng.standard_normal(4) * 0.3).astype(np.float32))
        k1 = ConvParams(identity_kernel(4, 1), np.zeros(4, np.float32), padding=0)
        merged = merge_pointwise_into_kxk(k1, k2)
        np.testing.assert_array_equal(merged.kernel, k2.kernel)
        np.testing.assert_array_equal(merged.bias, k2.bias)

    def test_scalar_algebra(self):
        k1 = ConvParams(np.full((1, 1, 1, 1), 2.0, np.float32),
                        np.zeros(1, np.float32), padding=0)
        k2 = ConvParams(np.ones((1, 1, 3, 3), np.float32), np.zeros(1, np.float32))
        merged = merge_pointwise_into_kxk(k1, k2)
        np.testing.assert_array_equal(merged.kernel, np.full((1, 1, 3, 3), 2.0))

    def test_composed_equals_merged(self):
        # The pointwise stage runs on the padded grid of the spatial stage.
        rng = np.random.default_rng(5)
        x = rng.random((1, 3, 8, 8), dtype=np.float32)
        k1 = ConvParams((rng.standard_normal((6, 3, 1, 1)) * 0.3).astype(np.float32),
                        (rng.standard_normal(6) * 0.3).astype(np.float32), padding=0)
        k2 = ConvParams((rng.standard_normal((5, 6, 3, 3)) * 0.3).astype(np.float32),
                        (rng.standard_normal(5) * 0.3).astype(np.float32))
        merged = merge_pointwise_into_kxk(k1, k2)
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        composed = naive_conv2d(naive_conv2d(xp, k1.kernel, k1.bias),
                                k2.kernel, k2.bias)
        assert np.abs(conv2d(x, merged) - composed).max() <= 1e-6

    def test_bias_uses_full_kernel_sum(self):
        k1 = ConvParams(np.zeros((2, 1, 1, 1), np.float32),
                        np.array([1.0, -2.0], np.float32), padding=0)
        k2k = np.zeros((1, 2, 3, 3), np.float32)
        k2k[0, 0] = 0.5
        k2k[0, 1] = 0.25
        k2 = ConvParams(k2k, np.array([3.0], np.float32))
        merged = merge_pointwise_into_kxk(k1, k2)
        # 3 + 9*0.5*1 + 9*0.25*(-2) = 3.0
        assert merged.bias[0] == pytest.approx(3.0)

    def test_shape_mismatch_rejected(self):
        k1 = ConvParams(np.zeros((4, 3, 1, 1), np.float32), np.zeros(4, np.float32), padding=0)
        k2 = ConvParams(np.zeros((4, 5, 3, 3), np.float32), np.zeros(4, np.float32))
        with pytest.raises(ValueError):
            merge_pointwise_into_kxk(k1, k2)


class TestMergeKxkIntoPointwise:
    def test_identity_pointwise_is_noop(self):
        rng = np.random.default_rng(6)
        k2 = ConvParams((rng.standard_normal((4, 3, 3, 3)) * 0.3).astype(np.float32),
                        (rng.standard_normal(4) * 0.3).astype(np.float32))
        k3 = ConvParams(identity_kernel(4, 1), np.zeros(4, np.float32), padding=0)
        merged = merge_kxk_into_pointwise(k2, k3)
        np.testing.assert_array_equal(merged.kernel, k2.kernel)
        np.testing.assert_array_equal(merged.bias, k2.bias)

    def test_composed_equals_merged(self):
        rng = np.random.default_rng(7)
        x = rng.random((1, 3, 8, 8), dtype=np.float32)
        k2 = ConvParams((rng.standard_normal((6, 3, 3, 3)) * 0.3).astype(np.float32),
                        (rng.standard_normal(6) * 0.3).astype(np.float32))
        k3 = ConvParams((rng.standard_normal((2, 6, 1, 1)) * 0.3).astype(np.float32),
                        (rng.standard_normal(2) * 0.3).astype(np.float32), padding=0)
        merged = merge_kxk_into_pointwise(k2, k3)
        composed = naive_conv2d(naive_conv2d(x, k2.kernel, k2.bias, padding=1),
                                k3.kernel, k3.bias)
        assert np.abs(conv2d(x, merged) - composed).max() <= 1e-6

    def test_zero_kernel_keeps_only_bias(self):
        rng = np.random.default_rng(8)
        k2 = ConvParams((rng.standard_normal((4, 3, 3, 3))).astype(np.float32),
                        (rng.standard_normal(4)).astype(np.float32))
        k3 = ConvParams(np.zeros((2, 4, 1, 1), np.float32),
                        np.array([5.0, -1.0], np.float32), padding=0)
        merged = merge_kxk_into_pointwise(k2, k3)
        assert np.all(merged.kernel == 0)
        np.testing.assert_array_equal(merged.bias, [5.0, -1.0])


class TestForwardTrain:
    def test_all_zero_params_is_residual_only(self):
        rng = np.random.default_rng(9)
        c, cm = 4, 8
        z = lambda *s: np.zeros(s, np.float32)
        p = RepMBConvParams(
            k1=ConvParams(z(cm, c, 1, 1), z(cm), padding=0),
            k2=ConvParams(z(cm, cm, 3, 3), z(cm)),
            k3=ConvParams(z(c, cm, 1, 1), z(c), padding=0),
            s=z(cm), v=z(cm), se_w1=z(2, cm), se_w2=z(cm, 2),
            k2_identity_enabled=False)
        x = rng.random((1, c, 6, 6), dtype=np.float32)
        np.testing.assert_array_equal(forward_train(x, p), x)

    def test_stacked_identities_double_input(self):
        # e=1 so the expand/squeeze stages can be identity; the spatial stage
        # is identity-branch only; SE forced to 1 via huge positive w2 path.
        c = 3
        ident1 = identity_kernel(c, 1)
        p = RepMBConvParams(
            k1=ConvParams(ident1.copy(), np.zeros(c, np.float32), padding=0),
            k2=ConvParams(np.zeros((c, c, 3, 3), np.float32), np.zeros(c, np.float32)),
            k3=ConvParams(ident1.copy(), np.zeros(c, np.float32), padding=0),
            s=np.ones(c, np.float32),
            v=np.ones(c, np.float32),
            se_w1=np.full((c, c), 40.0, np.float32),
            se_w2=np.full((c, c), 40.0, np.float32),
            k2_identity_enabled=True)
        rng = np.random.default_rng(10)
        x = rng.random((1, c, 5, 5), dtype=np.float32)
        np.testing.assert_allclose(forward_train(x, p), 2 * x, rtol=1e-5)

    def test_channel_mismatch_rejected(self):
        rng = np.random.default_rng(11)
        p = random_rep(rng, 4)
        with pytest.raises(ValueError, match="channels"):
            forward_train(rng.random((1, 5, 6, 6), dtype=np.float32), p)

    def test_matches_staged_oracle(self):
        rng = np.random.default_rng(12)
        p = random_rep(rng, 4, dtype=np.float64)
        x = rng.random((1, 4, 7, 7))
        k2e = effective_k2(p)
        se = 1 / (1 + np.exp(-(p.se_w2 @ np.maximum(p.se_w1 @ p.v, 0))))
        want = composed_rep_stages(x, p.k1, k2e.kernel, k2e.bias, p.k3,
                                   p.s, se, pad=1) + x
        assert np.abs(forward_train(x, p) - want).max() <= 1e-12


class TestFuse:
    def test_zero_weights_fuse_to_identity_plus_bias(self):
        c, cm = 3, 6
        z = lambda *s: np.zeros(s, np.float32)
        b3 = np.array([0.5, -1.0, 2.0], np.float32)
        p = RepMBConvParams(
            k1=ConvParams(z(cm, c, 1, 1), z(cm), padding=0),
            k2=ConvParams(z(cm, cm, 3, 3), z(cm)),
            k3=ConvParams(z(c, cm, 1, 1), b3, padding=0),
            s=z(cm), v=z(cm), se_w1=z(2, cm), se_w2=z(cm, 2),
            k2_identity_enabled=False)
        fused = fuse(p)
        np.testing.assert_array_equal(fused.kernel, identity_kernel(c, 3))
        np.testing.assert_array_equal(fused.bias, b3)

    def test_fused_footprint_matches_vanilla_conv(self):
        rng = np.random.default_rng(13)
        p = random_rep(rng, 64)
        fused = fuse(p)
        assert fused.kernel.shape == (64, 64, 3, 3)
        assert fused.param_count == 36_928
        assert fused.stride == 1 and fused.padding == 1

    @pytest.mark.parametrize("c", [8, 16, 32])
    def test_fusion_equivalence_both_dtypes(self, c):
        rng = np.random.default_rng(14 + c)
        for _ in range(5):
            p = random_rep(rng, c)
            x = rng.random((1, c, 10, 10), dtype=np.float32)
            err32 = np.abs(forward_train(x, p) - conv2d(x, fuse(p))).max()
            assert err32 <= 1e-4
            p64, x64 = p.astype(np.float64), x.astype(np.float64)
            err64 = np.abs(forward_train(x64, p64) - conv2d(x64, fuse(p64))).max()
            assert err64 <= 1e-10
            # exactness shrinks with precision
            assert err64 < err32

    def test_fuse_is_bitwise_repeatable(self):
        rng = np.random.default_rng(15)
        p = random_rep(rng, 8)
        a, b = fuse(p), fuse(p)
        assert np.array_equal(a.kernel, b.kernel) and np.array_equal(a.bias, b.bias)

    def test_output_channel_scaling_commutes(self):
        # Scaling the expand stage's output channels equals scaling its
        # output feature map.
        rng = np.random.default_rng(16)
        c, cm = 3, 6
        k1 = ConvParams((rng.standard_normal((cm, c, 1, 1)) * 0.3).astype(np.float32),
                        (rng.standard_normal(cm) * 0.3).astype(np.float32), padding=0)
        s = (rng.standard_normal(cm)).astype(np.float32)
        x = rng.random((1, c, 6, 6), dtype=np.float32)
        scaled_params = ConvParams(k1.kernel * s[:, None, None, None],
                                   k1.bias * s, padding=0)
        a = conv2d(x, scaled_params)
        b = scale_channels(conv2d(x, k1), s)
        assert np.abs(a - b).max() <= 1e-6

    def test_identity_branch_toggle_changes_result(self):
        rng = np.random.default_rng(17)
        p = random_rep(rng, 4)
        p_no_ident = RepMBConvParams(p.k1, p.k2, p.k3, p.s, p.v, p.se_w1,
                                     p.se_w2, k2_identity_enabled=False)
        x = rng.random((1, 4, 6, 6), dtype=np.float32)
        assert not np.allclose(forward_train(x, p), forward_train(x, p_no_ident))

    def test_invalid_geometry_rejected(self):
        z = lambda *s: np.zeros(s, np.float32)
        with pytest.raises(ValueError):
            RepMBConvParams(
                k1=ConvParams(z(8, 4, 1, 1), z(8), padding=0),
                k2=ConvParams(z(8, 8, 4, 4), z(8)),      # even k
                k3=ConvParams(z(4, 8, 1, 1), z(4), padding=0),
                s=z(8), v=z(8), se_w1=z(2, 8), se_w2=z(8, 2))
