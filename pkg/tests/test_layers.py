#!/usr/bin/env python3
"""
Tests for the dense, normalization, attention and EdgeConv layers
"""

import os
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

# Add the parent directory to Python path to import app modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.autodiff import tensor as T
from app.autodiff.gradcheck import finite_difference_check
from app.autodiff.parameter import SnapshotError
from app.autodiff.tensor import ShapeError, Tensor
from app.nn.layers import (
    DenseLayer,
    DropoutLayer,
    EdgeConvBlock,
    MultiHeadAttention,
    NormLayer,
    TransformerEncoderLayer,
    global_mean_pool,
    pack_neighbors,
    segment_mean_pool,
)


def _rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


def test_dense_layer_known_weights():
    layer = DenseLayer('d', 2, 2, _rng())
    layer.weight.assign([[1.0, 2.0], [3.0, 4.0]])
    layer.bias.assign([0.0, 0.0])
    assert_array_equal(layer(Tensor([[1.0, 1.0]])).data, [[3.0, 7.0]])
    layer.bias.assign([1.0, 1.0])
    layer.weight.assign(np.zeros((2, 2)))
    assert_array_equal(layer(Tensor([[5.0, -2.0]])).data, [[1.0, 1.0]])


def test_dense_layer_rejects_wrong_width():
    layer = DenseLayer('d', 3, 2, _rng())
    with pytest.raises(ShapeError):
        layer(Tensor(np.ones((4, 2))))


def test_unknown_init_policy():
    with pytest.raises(ValueError):
        DenseLayer('d', 2, 2, _rng(), init='orthogonal')


def test_layer_norm_of_constant_row_is_zero():
    norm = NormLayer('ln', 4, kind='layer')
    assert_allclose(norm(Tensor(np.full((2, 4), 5.0))).data, 0.0, atol=1e-12)


def test_layer_norm_gradient():
    norm = NormLayer('ln', 4, kind='layer')
    weights = _rng(3).normal(size=(3, 4))
    err = finite_difference_check(lambda x: T.sum_(T.mul(norm(x), weights)), _rng(4).normal(size=(3, 4)))
    assert err < 1e-4


def test_batch_norm_needs_two_rows_in_training():
    norm = NormLayer('bn', 3, kind='batch')
    with pytest.raises(ShapeError):
        norm(Tensor(np.ones((1, 3))))
    norm.eval()
    assert norm(Tensor(np.ones((1, 3)))).shape == (1, 3)


def test_batch_norm_updates_running_statistics():
    norm = NormLayer('bn', 2, kind='batch', momentum=0.5)
    norm(Tensor([[0.0, 2.0], [2.0, 6.0]]))
    assert_allclose(norm.running_mean, [0.5, 2.0])
    # unbiased batch variance is [2, 8]
    assert_allclose(norm.running_var, [1.5, 4.5])
    assert set(norm.state_dict()) == {'bn.gamma', 'bn.beta', 'bn.running_mean', 'bn.running_var'}


def test_dropout_is_identity_in_eval_and_scales_in_train():
    layer = DropoutLayer('drop', 0.5)
    layer.set_rng(_rng(9))
    x = Tensor(np.ones((50, 4)))
    out = layer(x).data
    assert set(np.unique(out)) <= {0.0, 2.0}
    layer.eval()
    assert layer(x) is x
    with pytest.raises(ValueError):
        DropoutLayer('bad', 1.0)


def test_dropout_keeps_expectation_over_many_masks():
    layer = DropoutLayer('drop', 0.3)
    layer.set_rng(_rng(10))
    out = layer(Tensor(np.ones(10000))).data
    kept = out > 0.0
    assert abs(kept.mean() - 0.7) < 0.02
    assert_allclose(out[kept], 1.0 / 0.7)
    assert abs(out.mean() - 1.0) < 0.03


def test_attention_single_token_is_value_projection():
    attention = MultiHeadAttention('mha', 4, 2, _rng(1))
    x = Tensor(_rng(2).normal(size=(1, 1, 4)))
    out = attention(x, np.ones((1, 1), dtype=bool))
    expected = attention.output(attention.value(x))
    assert_allclose(out.data, expected.data, rtol=1e-12, atol=1e-12)


def test_attention_ignores_masked_tokens():
    attention = MultiHeadAttention('mha', 4, 2, _rng(1))
    x = _rng(5).normal(size=(2, 3, 4))
    mask = np.array([[True, True, False], [True, False, False]])
    noisy = x.copy()
    noisy[0, 2] = 1e3
    noisy[1, 1:] = -7.0
    a = attention(Tensor(x), mask).data
    b = attention(Tensor(noisy), mask).data
    assert_allclose(a[0, :2], b[0, :2], rtol=1e-12, atol=1e-12)
    assert_allclose(a[1, :1], b[1, :1], rtol=1e-12, atol=1e-12)


def test_attention_rejects_bad_heads_and_empty_sequences():
    with pytest.raises(ValueError):
        MultiHeadAttention('mha', 5, 2, _rng())
    attention = MultiHeadAttention('mha', 4, 2, _rng())
    with pytest.raises(ValueError):
        attention(Tensor(np.ones((1, 2, 4))), np.zeros((1, 2), dtype=bool))


def test_encoder_layer_gradient_through_attention():
    layer = TransformerEncoderLayer('enc', 4, 2, 8, _rng(6), dropout=0.0)
    mask = np.array([[True, True, False]])
    weights = _rng(7).normal(size=(1, 3, 4))
    err = finite_difference_check(lambda x: T.sum_(T.mul(layer(x, mask), weights)), _rng(8).normal(size=(1, 3, 4)))
    assert err < 1e-4


def test_pack_neighbors_pairs_isolated_nodes_with_themselves():
    index, weight = pack_neighbors([[1, 2], [], [0]])
    assert_array_equal(index, [[1, 2], [1, 1], [0, 2]])
    assert_allclose(weight, [[0.5, 0.5], [1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ShapeError):
        pack_neighbors([[3]])


def test_edgeconv_matches_brute_force_in_eval_mode():
    block = EdgeConvBlock('ec', 3, 5, _rng(11))
    block.eval()
    nodes = _rng(12).normal(size=(4, 3))
    neighbors = [[1, 2], [0], [0, 1, 3], [2]]
    out = block(Tensor(nodes), neighbors).data

    w0, b0 = block.mlp0.weight.data, block.mlp0.bias.data
    w1, b1 = block.mlp1.weight.data, block.mlp1.bias.data
    expected = np.zeros((4, 5))
    for i, nb in enumerate(neighbors):
        edges = []
        for j in nb:
            pair = np.concatenate([nodes[i], nodes[j] - nodes[i]])
            edges.append(np.maximum(pair @ w0.T + b0, 0.0) @ w1.T + b1)
        expected[i] = np.mean(edges, axis=0)
    expected = np.maximum(expected, 0.0) / np.sqrt(1.0 + block.norm.eps)
    assert_allclose(out, expected, rtol=1e-10, atol=1e-12)


def test_edgeconv_gradient():
    block = EdgeConvBlock('ec', 2, 3, _rng(13), dropout=0.0)
    block.eval()
    weights = _rng(14).normal(size=(3, 3))
    neighbors = pack_neighbors([[1], [0, 2], [1]])
    err = finite_difference_check(lambda x: T.sum_(T.mul(block.aggregate(x, neighbors), weights)),
                                  _rng(15).normal(size=(3, 2)))
    assert err < 1e-4


def test_edgeconv_is_permutation_equivariant():
    block = EdgeConvBlock('ec', 3, 4, _rng(16))
    block.eval()
    nodes = _rng(17).normal(size=(5, 3))
    neighbors = [[1, 2], [0, 4], [3, 1], [2, 4], [0, 3]]
    perm = np.array([3, 0, 4, 1, 2])
    inverse = np.argsort(perm)
    permuted_neighbors = [[int(inverse[j]) for j in neighbors[old]] for old in perm]
    out = block(Tensor(nodes), neighbors).data
    permuted = block(Tensor(nodes[perm]), permuted_neighbors).data
    assert_allclose(permuted, out[perm], rtol=1e-12, atol=1e-12)


def test_global_mean_pool_reads_only_real_rows():
    nodes = Tensor([[1.0, 2.0], [3.0, 4.0], [99.0, 99.0]])
    assert_array_equal(global_mean_pool(nodes, [True, True, False]).data, [2.0, 3.0])
    with pytest.raises(ValueError):
        global_mean_pool(nodes, [False, False, False])


def test_segment_mean_pool():
    nodes = Tensor([[1.0], [3.0], [10.0]])
    pooled = segment_mean_pool(nodes, np.array([[0, 1], [2, 0]]), np.array([[True, True], [True, False]]))
    assert_array_equal(pooled.data, [[2.0], [10.0]])


def test_state_dict_round_trip_and_strict_loading():
    a = TransformerEncoderLayer('enc', 4, 2, 8, _rng(1))
    b = TransformerEncoderLayer('enc', 4, 2, 8, _rng(2))
    b.load_state_dict(a.state_dict())
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert pa.name == pb.name
        assert_array_equal(pa.data, pb.data)
    names = [p.name for p in a.parameters()]
    assert len(names) == len(set(names))
    with pytest.raises(SnapshotError):
        b.load_state_dict({'enc.norm0.gamma': np.ones(4)})


if __name__ == '__main__':
    sys.exit(pytest.main([__file__]))
