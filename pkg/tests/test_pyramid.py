import numpy as np
import pytest

from detkit.pyramid import (
    LEVELS,
    FeatureMap,
    PyramidWeights,
    ShapeMismatchError,
    conv2d,
    fpn_forward,
    identity_kernel,
    make_input_pyramid,
    pafpn_forward,
    pyramid_pipeline,
    severed_weights,
    upsample2,
)

# ---------------------------------------------------------------------------
# straight-line reference: explicit loops, no vectorized shortcuts


def conv2d_loops(x, kernel, stride=1, padding=0):
    cout, cin, kh, kw = kernel.shape
    c, h, w = x.shape
    assert c == cin
    xp = np.zeros((c, h + 2 * padding, w + 2 * padding))
    xp[:, padding : padding + h, padding : padding + w] = x
    oh = (xp.shape[1] - kh) // stride + 1
    ow = (xp.shape[2] - kw) // stride + 1
    out = np.zeros((cout, oh, ow))
    for o in range(cout):
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for ci in range(cin):
                    for dy in range(kh):
                        for dx in range(kw):
                            acc += xp[ci, i * stride + dy, j * stride + dx] * kernel[o, ci, dy, dx]
                out[o, i, j] = acc
    return out


def upsample2_loops(x):
    c, h, w = x.shape
    out = np.zeros((c, 2 * h, 2 * w))
    for ci in range(c):
        for i in range(2 * h):
            for j in range(2 * w):
                out[ci, i, j] = x[ci, i // 2, j // 2]
    return out


def fpn_loops(c, w):
    merged = {5: conv2d_loops(c[5].data, w.lateral[5])}
    for l in (4, 3, 2):
        merged[l] = conv2d_loops(c[l].data, w.lateral[l]) + upsample2_loops(merged[l + 1])
    return {l: conv2d_loops(merged[l], w.smooth[l], padding=1) for l in LEVELS}


def pafpn_loops(p, w):
    n = {2: p[2]}
    for l in (3, 4, 5):
        fused = conv2d_loops(n[l - 1], w.downsample[l], stride=2, padding=1) + p[l]
        n[l] = conv2d_loops(fused, w.smooth[l], padding=1)
    return n


def zero_pyramid(base=32, channels=4):
    return {
        l: FeatureMap(l, np.zeros((channels, base // 2**l, base // 2**l))) for l in LEVELS
    }


class TestFeatureMap:
    def test_level_range(self):
        with pytest.raises(ValueError):
            FeatureMap(1, np.zeros((2, 4, 4)))
        with pytest.raises(ValueError):
            FeatureMap(6, np.zeros((2, 4, 4)))

    def test_shape_validated(self):
        with pytest.raises(ValueError):
            FeatureMap(2, np.zeros((4, 4)))

    def test_dimension_properties(self):
        fm = FeatureMap(3, np.zeros((2, 8, 6)))
        assert (fm.channels, fm.height, fm.width) == (2, 8, 6)


class TestWeights:
    def test_same_seed_same_weights(self):
        w1 = PyramidWeights.generate(9, 3, 4)
        w2 = PyramidWeights.generate(9, 3, 4)
        for l in LEVELS:
            assert np.array_equal(w1.lateral[l], w2.lateral[l])
            assert np.array_equal(w1.smooth[l], w2.smooth[l])
        for l in LEVELS[1:]:
            assert np.array_equal(w1.downsample[l], w2.downsample[l])

    def test_different_seed_differs(self):
        w1 = PyramidWeights.generate(9, 3, 4)
        w2 = PyramidWeights.generate(10, 3, 4)
        assert not np.array_equal(w1.lateral[2], w2.lateral[2])

    def test_kernel_shapes(self):
        w = PyramidWeights.generate(0, {2: 3, 3: 5, 4: 7, 5: 9}, 6)
        assert w.lateral[3].shape == (6, 5, 1, 1)
        assert w.smooth[4].shape == (6, 6, 3, 3)
        assert w.downsample[5].shape == (6, 6, 3, 3)

    def test_identity_kernel_is_identity(self):
        x = np.random.default_rng(0).normal(size=(3, 6, 6))
        assert np.allclose(conv2d(x, identity_kernel(3), padding=1), x)


class TestConv:
    def test_matches_loops_stride1(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, 8, 8))
        k = rng.normal(size=(5, 3, 3, 3))
        assert np.allclose(conv2d(x, k, padding=1), conv2d_loops(x, k, padding=1), atol=1e-9)

    def test_matches_loops_stride2(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(4, 8, 8))
        k = rng.normal(size=(4, 4, 3, 3))
        assert np.allclose(
            conv2d(x, k, stride=2, padding=1),
            conv2d_loops(x, k, stride=2, padding=1),
            atol=1e-9,
        )

    def test_stride2_halves_even_sizes(self):
        x = np.zeros((2, 8, 8))
        k = np.zeros((2, 2, 3, 3))
        assert conv2d(x, k, stride=2, padding=1).shape == (2, 4, 4)

    def test_channel_mismatch_raises(self):
        with pytest.raises(ShapeMismatchError):
            conv2d(np.zeros((3, 4, 4)), np.zeros((2, 4, 1, 1)))

    def test_upsample_matches_loops(self):
        x = np.random.default_rng(3).normal(size=(2, 3, 5))
        assert np.array_equal(upsample2(x), upsample2_loops(x))


class TestFpnForward:
    def test_zero_in_zero_out(self):
        w = PyramidWeights.generate(0, 4, 4)
        p = fpn_forward(zero_pyramid(), w)
        assert all(np.all(p[l].data == 0.0) for l in LEVELS)

    def test_isolated_level_is_smoothed_lateral(self):
        # zero everything above level 2: P2 reduces to smooth(lateral(C2))
        rng = np.random.default_rng(4)
        w = PyramidWeights.generate(4, 4, 4)
        c = zero_pyramid()
        c2 = rng.normal(size=c[2].data.shape)
        c = {**c, 2: FeatureMap(2, c2)}
        p = fpn_forward(c, w)
        expected = conv2d_loops(conv2d_loops(c2, w.lateral[2]), w.smooth[2], padding=1)
        assert np.allclose(p[2].data, expected, atol=1e-9)
        # identity lateral passes the raw features into the smoother
        w_id = PyramidWeights(
            lateral={l: identity_kernel(4)[:, :, 1:2, 1:2] for l in LEVELS},
            smooth=w.smooth,
            downsample=w.downsample,
        )
        p_id = fpn_forward(c, w_id)
        assert np.allclose(
            p_id[2].data, conv2d_loops(c2, w.smooth[2], padding=1), atol=1e-9
        )

    def test_matches_loop_reference_on_8x8(self):
        w = PyramidWeights.generate(12, 4, 4)
        c = make_input_pyramid(21, base_size=32, in_channels=4)  # C2 is 8x8x4
        assert c[2].data.shape == (4, 8, 8)
        p = fpn_forward(c, w)
        ref = fpn_loops(c, w)
        for l in LEVELS:
            assert np.allclose(p[l].data, ref[l], atol=1e-9)

    def test_channel_mismatch_names_level(self):
        w = PyramidWeights.generate(0, 4, 4)
        c = zero_pyramid(channels=3)
        with pytest.raises(ShapeMismatchError, match="level 2"):
            fpn_forward(c, w)

    def test_spatial_mismatch_names_level_and_dimension(self):
        w = PyramidWeights.generate(0, 4, 4)
        c = zero_pyramid()
        c[4] = FeatureMap(4, np.zeros((4, 3, 4)))
        with pytest.raises(ShapeMismatchError, match="height"):
            fpn_forward(c, w)

    def test_missing_level(self):
        w = PyramidWeights.generate(0, 4, 4)
        c = zero_pyramid()
        del c[3]
        with pytest.raises(ShapeMismatchError, match=r"\[3\]"):
            fpn_forward(c, w)


class TestPafpnForward:
    def test_severed_path_returns_input(self):
        w = severed_weights(PyramidWeights.generate(1, 4, 4))
        p = {
            l: FeatureMap(l, np.random.default_rng(l).normal(size=(4, 32 // 2**l, 32 // 2**l)))
            for l in LEVELS
        }
        n = pafpn_forward(p, w)
        for l in LEVELS:
            assert np.allclose(n[l].data, p[l].data, atol=1e-12)

    def test_zero_in_zero_out(self):
        w = PyramidWeights.generate(1, 4, 4)
        n = pafpn_forward(zero_pyramid(), w)
        assert all(np.all(n[l].data == 0.0) for l in LEVELS)

    def test_matches_loop_reference(self):
        w = PyramidWeights.generate(13, 4, 4)
        rng = np.random.default_rng(14)
        p = {l: FeatureMap(l, rng.normal(size=(4, 32 // 2**l, 32 // 2**l))) for l in LEVELS}
        n = pafpn_forward(p, w)
        ref = pafpn_loops({l: p[l].data for l in LEVELS}, w)
        for l in LEVELS:
            assert np.allclose(n[l].data, ref[l], atol=1e-9)

    def test_channel_mismatch(self):
        w = PyramidWeights.generate(0, 4, 4)
        with pytest.raises(ShapeMismatchError, match="level"):
            pafpn_forward(zero_pyramid(channels=5), w)


class TestPipeline:
    def test_fpn_mode_equals_fpn_forward(self):
        w = PyramidWeights.generate(3, 4, 4)
        c = make_input_pyramid(3, base_size=32)
        out = pyramid_pipeline(c, w, mode="fpn")
        ref = fpn_forward(c, w)
        for l in LEVELS:
            assert np.array_equal(out[l].data, ref[l].data)

    def test_severed_pafpn_equals_fpn(self):
        w = severed_weights(PyramidWeights.generate(5, 4, 4))
        c = make_input_pyramid(6, base_size=32)
        fpn = pyramid_pipeline(c, w, mode="fpn")
        pafpn = pyramid_pipeline(c, w, mode="pafpn")
        for l in LEVELS:
            assert np.array_equal(fpn[l].data, pafpn[l].data)

    def test_bottom_up_shortcut_carries_c2_to_n5(self):
        w = PyramidWeights.generate(7, 4, 4)
        c = make_input_pyramid(8, base_size=32)
        bump = np.zeros_like(c[2].data)
        bump[0, 0, 0] = 1.0
        c_pert = {**c, 2: FeatureMap(2, c[2].data + bump)}

        with_path = pyramid_pipeline(c, w, mode="pafpn")
        with_path_pert = pyramid_pipeline(c_pert, w, mode="pafpn")
        response = np.abs(with_path_pert[5].data - with_path[5].data).max()
        assert response > 0.0

        # the top-down pass alone never propagates level 2 upward
        sw = severed_weights(w)
        severed = pyramid_pipeline(c, sw, mode="pafpn")
        severed_pert = pyramid_pipeline(c_pert, sw, mode="pafpn")
        assert np.array_equal(severed[5].data, severed_pert[5].data)

    def test_linearity(self):
        w = PyramidWeights.generate(9, 4, 4)
        x = make_input_pyramid(10, base_size=32)
        y = make_input_pyramid(11, base_size=32)
        alpha, beta = 0.7, -1.3
        mix = {
            l: FeatureMap(l, alpha * x[l].data + beta * y[l].data) for l in LEVELS
        }
        for mode in ("fpn", "pafpn"):
            out_mix = pyramid_pipeline(mix, w, mode=mode)
            out_x = pyramid_pipeline(x, w, mode=mode)
            out_y = pyramid_pipeline(y, w, mode=mode)
            for l in LEVELS:
                assert np.allclose(
                    out_mix[l].data,
                    alpha * out_x[l].data + beta * out_y[l].data,
                    atol=1e-9,
                )

    def test_determinism_bitwise(self):
        for mode in ("fpn", "pafpn"):
            a = pyramid_pipeline(
                make_input_pyramid(42, 64), PyramidWeights.generate(42, 4, 4), mode=mode
            )
            b = pyramid_pipeline(
                make_input_pyramid(42, 64), PyramidWeights.generate(42, 4, 4), mode=mode
            )
            for l in LEVELS:
                assert np.array_equal(a[l].data, b[l].data)

    def test_relu_activation(self):
        w = PyramidWeights.generate(15, 4, 4)
        c = make_input_pyramid(16, base_size=32)
        out = pyramid_pipeline(c, w, mode="pafpn", activation="relu")
        for l in LEVELS:
            assert np.all(out[l].data >= 0.0)

    def test_unknown_mode(self):
        w = PyramidWeights.generate(0, 4, 4)
        with pytest.raises(ValueError):
            pyramid_pipeline(zero_pyramid(), w, mode="bifpn")


class TestInputFactory:
    def test_base_size_must_be_multiple_of_32(self):
        with pytest.raises(ValueError):
            make_input_pyramid(0, base_size=48)

    def test_level_sizes(self):
        c = make_input_pyramid(0, base_size=64, in_channels=2)
        assert [c[l].data.shape for l in LEVELS] == [
            (2, 16, 16),
            (2, 8, 8),
            (2, 4, 4),
            (2, 2, 2),
        ]
