import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ipssd.errors import ConfigError, ContractViolation
from ipssd.oracles import conv2d_naive
from ipssd.pyramid import IPNParams, PyramidConfig, build_pyramid, ipn_forward, level_sizes
from ipssd.tensor import ConvParams


def random_ipn(rng, c_in=1, mid=3, c_out=4):
    def layer(o, i, k):
        return ConvParams(rng.standard_normal((o, i, k, k)) * 0.5, rng.standard_normal(o) * 0.1,
                          1, k // 2)

    return IPNParams(layer(mid, c_in, 1), layer(mid, mid, 3), layer(mid, mid, 3), layer(c_out, mid, 1))


def test_single_level_is_input():
    img = np.random.default_rng(0).random((1, 1, 8, 8)).astype(np.float32)
    levels = build_pyramid(img, PyramidConfig(n=1))
    assert len(levels) == 1
    np.testing.assert_array_equal(levels[0], img)


def test_level_sizes_halve():
    levels = build_pyramid(np.zeros((1, 1, 64, 64), np.float32), PyramidConfig(n=3))
    assert [lv.shape[2:] for lv in levels] == [(64, 64), (32, 32), (16, 16)]
    assert level_sizes(100, 60, PyramidConfig(n=3)) == [(100, 60), (50, 30), (25, 15)]


def test_constant_image_stays_constant():
    levels = build_pyramid(np.full((1, 1, 64, 64), 0.3, np.float32), PyramidConfig(n=4))
    for lv in levels:
        assert np.all(lv == np.float32(0.3))


def test_too_small_image():
    with pytest.raises(ConfigError, match="too small"):
        build_pyramid(np.zeros((1, 1, 16, 64), np.float32), PyramidConfig(n=4))
    assert PyramidConfig(n=4).min_size() == 64


def test_config_validation():
    with pytest.raises(ConfigError):
        PyramidConfig(n=0)
    with pytest.raises(ConfigError):
        PyramidConfig(scale_factor=1.0)


def test_ipn_param_checks():
    z = ConvParams.zeros
    with pytest.raises(ContractViolation):
        IPNParams(z(2, 1, 3), z(2, 2, 3), z(2, 2, 3), z(4, 2, 1))
    with pytest.raises(ContractViolation, match="chain"):
        IPNParams(z(2, 1, 1), z(3, 2, 3), z(2, 2, 3), z(4, 2, 1))


def test_zero_weights_give_zero_features():
    z = ConvParams.zeros
    p = IPNParams(z(2, 1, 1), z(2, 2, 3), z(2, 2, 3), z(5, 2, 1))
    feats = ipn_forward(build_pyramid(np.random.default_rng(2).random((1, 1, 32, 32)), PyramidConfig(n=3)), p)
    assert [f.shape for f in feats.levels] == [(1, 5, 32, 32), (1, 5, 16, 16), (1, 5, 8, 8)]
    assert feats.scales == [1.0, 0.5, 0.25]
    assert all(np.all(f == 0) for f in feats.levels)


def test_ipn_matches_layerwise_naive_composition(rng):
    p = random_ipn(rng)
    img = rng.random((1, 1, 12, 12)).astype(np.float32)
    got = ipn_forward([img], p).levels[0]
    x = img
    for i, layer in enumerate((p.conv1, p.conv2, p.conv3, p.conv4)):
        x = conv2d_naive(x, layer.weight, layer.bias, 1, layer.padding)
        if i < 3:
            x = np.maximum(x, 0)
    np.testing.assert_allclose(got, x, rtol=1e-4, atol=1e-4)


def test_wrong_input_channels():
    p = random_ipn(np.random.default_rng(0), c_in=3)
    with pytest.raises(ContractViolation, match="input channels"):
        ipn_forward([np.zeros((1, 1, 8, 8), np.float32)], p)


@given(st.permutations(range(3)))
def test_level_processing_is_order_independent(perm):
    rng = np.random.default_rng(5)
    p = random_ipn(rng)
    levels = build_pyramid(rng.random((1, 1, 32, 32)).astype(np.float32), PyramidConfig(n=3))
    ref = ipn_forward(levels, p).levels
    shuffled = ipn_forward([levels[i] for i in perm], p).levels
    for out, i in zip(shuffled, perm):
        np.testing.assert_array_equal(out, ref[i])


def test_constant_image_features_agree_across_levels(rng):
    p = random_ipn(rng)
    levels = build_pyramid(np.full((1, 1, 32, 32), 0.7, np.float32), PyramidConfig(n=3))
    feats = ipn_forward(levels, p).levels
    # away from the zero-padded border every level sees the same constant input
    for f in feats:
        inner = f[0, :, 2:-2, 2:-2]
        np.testing.assert_allclose(inner, inner[:, :1, :1] * np.ones_like(inner), rtol=1e-6)
    np.testing.assert_allclose(feats[0][0, :, 4, 4], feats[2][0, :, 4, 4], rtol=1e-6)
