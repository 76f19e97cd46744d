import math

import numpy as np
import pytest

from vheat.autograd import Tensor, grad_check, ops
from vheat.hco import FveTable
from vheat.layers import (ClassifierHead, Downsample, HeatLayer, Stem, drop_path, heat_layer_forward,
                          heat_layer_param_count, stem_param_count)
from vheat.verify import heat_layer_case, randomize_parameters


def fve_for(C, M, rng, dtype=np.float32):
    return FveTable.init(M, M, C, rng, dtype=dtype)


def test_stem_extent_and_count(rng):
    stem = Stem(3, 96, rng)
    assert stem(Tensor(rng.standard_normal((1, 3, 32, 32)).astype(np.float32))).shape == (1, 96, 8, 8)
    assert stem.num_parameters() == stem_param_count(3, 96)
    assert stem_param_count(3, 96) == 3 * 96 * 9 + 96 * 96 * 9 + 2 * 96 + 4 * 96


def test_stem_zero_image_zero_preactivation(rng):
    stem = Stem(3, 8, rng)
    for conv in (stem.conv1, stem.conv2):
        conv.bias.data[...] = 0
    x = Tensor(np.zeros((1, 3, 16, 16), np.float32))
    assert not stem.conv1(x).data.any()
    assert not stem(x).data.any()


def test_stem_and_downsample_reject_bad_extent(rng):
    with pytest.raises(ValueError, match="divisible by 4"):
        Stem(3, 4, rng)(Tensor(np.zeros((1, 3, 10, 12))))
    with pytest.raises(ValueError, match="even"):
        Downsample(4, rng)(Tensor(np.zeros((1, 4, 5, 6), np.float32)))


def test_downsample_shape(rng):
    assert Downsample(8, rng)(Tensor(np.zeros((2, 8, 6, 4), np.float32))).shape == (2, 16, 3, 2)


def test_fresh_layer_is_identity(rng):
    layer = HeatLayer(8, rng)
    x = Tensor(rng.standard_normal((2, 8, 6, 6)).astype(np.float32))
    out = heat_layer_forward(layer, fve_for(8, 6, rng), x)
    assert out.data.tobytes() == x.data.tobytes()


def test_zero_k_predictor_is_gated_mixer(rng):
    # with k == 0 the HCO is the identity filter and drops out of the branch
    layer = HeatLayer(6, rng, dtype=np.float64)
    randomize_parameters(layer, rng)
    layer.k_proj.weight.data[...] = 0
    layer.k_proj.bias.data[...] = 0
    x = Tensor(rng.standard_normal((1, 6, 4, 4)))
    got = layer(x, fve_for(6, 4, rng, np.float64)).data

    h = layer.dwconv(layer.norm1(x))
    y = ops.add(x, layer.out_proj(ops.mul(layer.in_proj(h), ops.silu(layer.gate_proj(h)))))
    want = ops.add(y, layer.fc2(ops.gelu(layer.fc1(layer.norm2(y))))).data
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_fixed_k_layer_has_no_predictor(rng):
    layer = HeatLayer(4, rng, k_mode="fixed", fixed_k=1.0)
    assert not hasattr(layer, "k_proj")
    assert layer.num_parameters() == heat_layer_param_count(4, 4, "fixed")
    assert HeatLayer(4, rng).num_parameters() == heat_layer_param_count(4, 4, "fve")
    out = layer(Tensor(rng.standard_normal((1, 4, 4, 4)).astype(np.float32)), None)
    assert out.shape == (1, 4, 4, 4)


def test_layer_extent_mismatch(rng):
    with pytest.raises(ValueError, match="resize_fve"):
        HeatLayer(4, rng)(Tensor(np.zeros((1, 4, 8, 8), np.float32)), fve_for(4, 4, rng))


def test_layer_gradient():
    fn, inputs = heat_layer_case(0)
    assert grad_check(fn, inputs) < 1e-5


def test_layer_batch_permutation(rng):
    layer = HeatLayer(4, rng, dtype=np.float64)
    randomize_parameters(layer, rng)
    fve = fve_for(4, 4, rng, np.float64)
    x = rng.standard_normal((5, 4, 4, 4))
    perm = rng.permutation(5)
    np.testing.assert_allclose(layer(Tensor(x[perm]), fve).data, layer(Tensor(x), fve).data[perm], atol=1e-12)


def test_drop_path_eval_identity(rng):
    x = Tensor(rng.standard_normal((4, 3, 2, 2)))
    assert drop_path(x, 0.5, False, None) is x
    assert drop_path(x, 0.0, True, rng) is x


def test_drop_path_training_zeroes_whole_samples():
    x = Tensor(np.ones((64, 2, 2, 2)))
    y = drop_path(x, 0.25, True, np.random.default_rng(0)).data
    per = y.reshape(64, -1)
    assert set(np.unique(per)) <= {0.0, 1 / 0.75}
    assert (per.min(axis=1) == per.max(axis=1)).all()
    with pytest.raises(ValueError):
        drop_path(x, 0.25, True, None)


def test_drop_path_rate_validation(rng):
    with pytest.raises(ValueError):
        HeatLayer(4, rng, drop_path=1.0)


def test_head_pooling_and_uniform_logits(rng):
    head = ClassifierHead(6, 10, rng, np.float64)
    x = np.broadcast_to(rng.standard_normal((2, 6, 1, 1)), (2, 6, 5, 5)).copy()
    np.testing.assert_allclose(ops.avg_pool_spatial(Tensor(x)).data, x[:, :, 0, 0], atol=1e-15)
    logits = head(Tensor(x))
    assert (logits.data == 0).all()
    loss = ops.cross_entropy(logits, np.array([3, 7]), 0.1).item()
    assert loss == pytest.approx(math.log(10), abs=1e-12)


def test_head_batch_invariance(rng):
    head = ClassifierHead(6, 5, rng)
    randomize_parameters(head, rng)
    x = rng.standard_normal((8, 6, 3, 3)).astype(np.float32)
    full = head(Tensor(x)).data
    for i in range(8):
        assert np.abs(head(Tensor(x[i:i + 1])).data[0] - full[i]).max() < 1e-6
