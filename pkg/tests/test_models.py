#!/usr/bin/env python3
"""
Tests for the task networks, losses, freezing and model bundles
"""

import math
import os
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

# Add the parent directory to Python path to import app modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.autodiff import tensor as T
from app.autodiff.gradcheck import parameter_gradient_check
from app.autodiff.tensor import NonFiniteError, ShapeError
from app.collider.generator import event_rng
from app.features.graph import knn_graph
from app.features.samples import JetSample, METSample
from app.models.bundle import BundleMismatch, load_bundle, save_bundle
from app.models.freeze import FreezeSpec, FreezeSpecError, apply_freeze
from app.models.losses import LabelError, bce_loss, bce_with_logits, met_loss
from app.models.networks import build_model, met_forward, qg_forward

SMALL = {
    'sb': {'hidden': [8, 8]},
    'qg': {'edgeconv': [8, 8], 'head': [8]},
    'met': {'model_dim': 8, 'layers': 1, 'heads': 2, 'ff_dim': 16, 'head_dim': 4},
}


def _model(task, seed=0):
    return build_model(task, event_rng(seed), SMALL[task]).eval()


def _jets(n_real, slots=10, seed=0):
    rng = np.random.default_rng(seed)
    features = np.zeros((len(n_real), slots, 6))
    mask = np.zeros((len(n_real), slots), dtype=bool)
    for b, n in enumerate(n_real):
        features[b, :n] = rng.normal(size=(n, 6))
        mask[b, :n] = True
    return features, mask


def _graphs(features, mask, k=3):
    return [knn_graph(JetSample(features=f, real_mask=m, label=1, jet_pt=50.0), k).packed()
            for f, m in zip(features, mask)]


def _events(n_real, slots=12, seed=0):
    rng = np.random.default_rng(seed)
    features = np.zeros((len(n_real), slots, 4))
    mask = np.zeros((len(n_real), slots), dtype=bool)
    for b, n in enumerate(n_real):
        features[b, :n] = rng.normal(size=(n, 4))
        mask[b, :n] = True
    return features, mask


def test_sb_classifier_with_zero_weights_outputs_half():
    model = _model('sb')
    for p in model.parameters():
        p.assign(np.zeros(p.shape))
    out = model(np.random.default_rng(1).normal(size=(5, 12)))
    assert_array_equal(out.data, 0.5)


def test_sb_outputs_are_probabilities_and_deterministic():
    x = np.random.default_rng(2).normal(size=(7, 12))
    a = _model('sb', seed=3)(x).data
    b = _model('sb', seed=3)(x).data
    assert a.shape == (7,)
    assert np.all((a > 0.0) & (a < 1.0))
    assert_array_equal(a, b)


def test_sb_rejects_bad_inputs():
    model = _model('sb')
    with pytest.raises(ShapeError):
        model(np.zeros((3, 11)))
    x = np.zeros((2, 12))
    x[0, 3] = np.nan
    with pytest.raises(NonFiniteError):
        model(x)


def test_unknown_architecture_field():
    with pytest.raises(ValueError):
        build_model('sb', event_rng(0), {'hiden': [4]})
    with pytest.raises(ValueError):
        build_model('xx', event_rng(0))


def test_qg_ignores_padding_contents():
    model = _model('qg')
    features, mask = _jets([4, 7, 1])
    graphs = _graphs(features, mask)
    clean = model(features, mask, graphs).data
    noisy = features.copy()
    noisy[~mask] = 1e6
    assert clean.shape == (3,)
    assert_array_equal(model(noisy, mask, graphs).data, clean)


def test_qg_is_invariant_to_constituent_order():
    model = _model('qg')
    features, mask = _jets([6], seed=4)
    shuffled = features.copy()
    shuffled[0, :6] = features[0, [3, 0, 5, 1, 4, 2]]
    a = model(features, mask, _graphs(features, mask)).data
    b = model(shuffled, mask, _graphs(shuffled, mask)).data
    assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_qg_batch_matches_single_jets():
    model = _model('qg')
    features, mask = _jets([5, 3, 8], seed=5)
    graphs = _graphs(features, mask)
    batched = model(features, mask, graphs).data
    for b in range(3):
        sample = JetSample(features=features[b], real_mask=mask[b], label=1, jet_pt=50.0)
        single = qg_forward(model, sample, knn_graph(sample, 3))
        assert single.item() == pytest.approx(batched[b], rel=1e-10, abs=1e-12)


def _randomize_norms(model, seed):
    rng = np.random.default_rng(seed)
    for block in model.edgeconv:
        norm = block.norm
        norm.running_mean[...] = rng.normal(size=norm.features)
        norm.running_var[...] = rng.uniform(0.5, 2.0, size=norm.features)
        norm.gamma.assign(rng.normal(1.0, 0.3, size=norm.features))
        norm.beta.assign(rng.normal(0.0, 0.3, size=norm.features))


def _qg_reference(model, features, mask, k):
    """Per-jet loop over plain numpy arrays"""
    logits = []
    for f, m in zip(features, mask):
        neighbors = knn_graph(JetSample(features=f, real_mask=m, label=1, jet_pt=50.0), k).neighbors
        h = f[m]
        outputs = []
        for block in model.edgeconv:
            w0, b0 = block.mlp0.weight.data, block.mlp0.bias.data
            w1, b1 = block.mlp1.weight.data, block.mlp1.bias.data
            agg = np.zeros((len(h), block.out_features))
            for i, nb in enumerate(neighbors):
                edges = [np.maximum(np.concatenate([h[i], h[j] - h[i]]) @ w0.T + b0, 0.0) @ w1.T + b1 for j in nb]
                agg[i] = np.mean(edges, axis=0)
            norm = block.norm
            h = ((np.maximum(agg, 0.0) - norm.running_mean) / np.sqrt(norm.running_var + norm.eps)
                 * norm.gamma.data + norm.beta.data)
            outputs.append(h)
        pooled = np.concatenate(outputs, axis=1).mean(axis=0)
        for dense in model.head:
            pooled = np.maximum(pooled @ dense.weight.data.T + dense.bias.data, 0.0)
        logits.append(float(pooled @ model.out.weight.data[0] + model.out.bias.data[0]))
    return np.array(logits)


def test_qg_matches_straight_line_reference():
    model = _model('qg', seed=6)
    _randomize_norms(model, 7)
    features, mask = _jets([6, 2, 1, 9], seed=8)
    out = model(features, mask, _graphs(features, mask)).data
    assert_allclose(out, _qg_reference(model, features, mask, 3), rtol=1e-10, atol=1e-12)


def test_sb_loss_gradients_match_finite_differences():
    model = _model('sb', seed=9)
    rng = np.random.default_rng(10)
    x, y = rng.normal(size=(6, 12)), np.array([1, 0, 1, 1, 0, 0])
    err = parameter_gradient_check(lambda: bce_loss(model(x), y), model.parameters())
    assert err < 1e-3


def test_qg_loss_gradients_match_finite_differences():
    model = _model('qg', seed=11)
    _randomize_norms(model, 12)
    features, mask = _jets([7], seed=13)
    sample = JetSample(features=features[0], real_mask=mask[0], label=1, jet_pt=50.0)
    graph = knn_graph(sample, 3)
    err = parameter_gradient_check(lambda: bce_with_logits(T.reshape(qg_forward(model, sample, graph), (1,)), [1]),
                                   model.parameters())
    assert err < 1e-3


def test_met_loss_gradients_match_finite_differences():
    model = _model('met', seed=14)
    features, mask = _events([4, 6], seed=15)
    targets = np.array([30.0, 55.0])
    err = parameter_gradient_check(lambda: met_loss(model(features, mask), targets, lambda_bias=1.0),
                                   model.parameters())
    assert err < 1e-3


def test_qg_checks_graph_against_mask():
    model = _model('qg')
    features, mask = _jets([5, 3])
    graphs = _graphs(features, mask)
    with pytest.raises(ShapeError):
        model(features, mask, graphs[::-1])
    holes = mask.copy()
    holes[0, 1] = False
    holes[0, 5] = True
    with pytest.raises(ShapeError):
        model(features, holes, graphs)


def test_met_ignores_padding_and_track_order():
    model = _model('met')
    features, mask = _events([5, 9, 2], seed=6)
    clean = model(features, mask).data
    noisy = features.copy()
    noisy[~mask] = -3e4
    assert_array_equal(model(noisy, mask).data, clean)

    shuffled = features.copy()
    shuffled[1, :9] = features[1, [8, 2, 4, 0, 7, 1, 6, 3, 5]]
    assert_allclose(model(shuffled, mask).data, clean, rtol=1e-10, atol=1e-10)


def test_met_output_is_in_gev_units():
    model = _model('met')
    features, mask = _events([4], seed=7)
    raw = model(features, mask).data
    model.target_scale = 1.0
    assert_allclose(raw, model(features, mask).data * 50.0)
    sample = METSample(features=features[0], real_mask=mask[0], target=10.0)
    model.target_scale = 50.0
    assert met_forward(model, sample).item() == pytest.approx(raw[0])


def test_met_rejects_event_without_tracks():
    model = _model('met')
    features, mask = _events([3, 0])
    with pytest.raises(ValueError):
        model(features, mask)


def test_bce_values():
    assert bce_loss([0.5], [1]).item() == pytest.approx(math.log(2.0))
    assert bce_loss([0.8, 0.2], [1, 0]).item() == pytest.approx(-math.log(0.8))
    assert bce_with_logits([0.0, 0.0], [0, 1]).item() == pytest.approx(math.log(2.0))
    assert math.isfinite(bce_loss([0.0, 1.0], [1, 0]).item())
    with pytest.raises(LabelError):
        bce_loss([0.5], [2])


def test_met_loss_values():
    c = 3.0
    assert met_loss([10.0 + c, 20.0 + c], [10.0, 20.0], lambda_bias=1.0).item() == pytest.approx(2 * c * c)
    assert met_loss([11.0, 19.0], [10.0, 20.0], lambda_bias=1.0).item() == pytest.approx(1.0)
    assert met_loss([11.0, 19.0], [10.0, 20.0], lambda_bias=0.0).item() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        met_loss([1.0], [2.0])


def test_empty_freeze_spec_keeps_everything_trainable():
    model = _model('sb')
    trainable, frozen = apply_freeze(model, FreezeSpec([]))
    assert frozen == []
    assert len(trainable) == len(model.parameters())


def test_freeze_first_dense_layer():
    model = _model('sb')
    trainable, frozen = apply_freeze(model, FreezeSpec(['sb.dense0']))
    assert sorted(p.name for p in frozen) == ['sb.dense0.bias', 'sb.dense0.weight']
    assert all(not p.tensor.requires_grad for p in frozen)
    assert all(p.trainable for p in trainable)


def test_freeze_prefix_typo_is_an_error():
    with pytest.raises(FreezeSpecError):
        apply_freeze(_model('sb'), FreezeSpec(['sb.dens0']))


def test_freeze_matches_whole_name_components():
    model = _model('met')
    _, frozen = apply_freeze(model, FreezeSpec(['met.embed']))
    assert {p.name for p in frozen} == {'met.embed.weight', 'met.embed.bias'}


@pytest.mark.parametrize('task', ['sb', 'qg', 'met'])
def test_canonical_freeze_specs_match(task):
    model = build_model(task, event_rng(0))
    _, frozen = apply_freeze(model, FreezeSpec.for_task(task))
    assert frozen


def test_bundle_round_trip(tmp_path):
    model = _model('met', seed=8)
    save_bundle(str(tmp_path), model, source_domain='A', config_hash='abc')
    loaded, metadata = load_bundle(str(tmp_path), task='met')
    assert metadata['source_domain'] == 'A'
    assert not loaded.training
    for name, array in model.state_dict().items():
        assert loaded.state_dict()[name].tobytes() == array.tobytes()
    features, mask = _events([3, 4], seed=9)
    assert_array_equal(loaded(features, mask).data, model(features, mask).data)


def test_bundle_task_mismatch(tmp_path):
    save_bundle(str(tmp_path / 'sb'), _model('sb'))
    with pytest.raises(BundleMismatch):
        load_bundle(str(tmp_path / 'sb'), task='qg')
    with pytest.raises(BundleMismatch):
        load_bundle(str(tmp_path / 'missing'))


if __name__ == '__main__':
    sys.exit(pytest.main([__file__]))
