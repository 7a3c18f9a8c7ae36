#!/usr/bin/env python3
"""
Tests for track selection, task sample building, kNN graphs, reweighting and sample files
"""

import math
import os
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

# Add the parent directory to Python path to import app modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.collider.domains import load_domain_configs
from app.collider.events import Event, Jet, Lepton, Track
from app.collider.generator import event_rng, generate_dataset, generate_event
from app.collider.kinematics import momentum_from
from app.features.datasets import SampleSet, Standardizer, load_samples, prepare_samples, write_samples
from app.features.graph import knn_graph
from app.features.reweight import bin_acceptance, reweight_qg_pt
from app.features.samples import (
    JetSample,
    SelectionRejected,
    build_jet_sample,
    build_met_sample,
    event_jets,
    extract_sb_features,
    select_tracks,
)


def _track(pt, eta=0.0, phi=0.0, d0=0.0, origin='hard'):
    px, py, pz = momentum_from(pt, eta, phi)
    return Track(px=float(px), py=float(py), pz=float(pz), charge=-1, d0=d0, z0=0.0, origin=origin)


def _jet(pt, eta=0.0, phi=0.0, constituents=()):
    return Jet(pt=pt, eta=eta, phi=phi, mass=10.0, constituent_indices=list(constituents))


def _jet_sample(eta_phi, label=1, jet_pt=50.0, slots=6):
    features = np.zeros((slots, 6))
    for row, (eta, phi) in enumerate(eta_phi):
        features[row] = (5.0, eta, phi, 1.0, 0.0, 0.0)
    mask = np.zeros(slots, dtype=bool)
    mask[:len(eta_phi)] = True
    return JetSample(features=features, real_mask=mask, label=label, jet_pt=jet_pt)


def test_track_selection_threshold_is_strict():
    event = Event(process='WW', domain='A', tracks=[_track(0.5), _track(0.51), _track(3.0), _track(1.0)])
    selected = select_tracks(event)
    assert [round(t.pt, 2) for t in selected] == [3.0, 1.0, 0.51]


def test_sb_features_layout():
    event = Event(process='TTBAR', domain='A', leptons=[Lepton(pt=25.0, eta=0.5, phi=1.0, flavor='muon')])
    jets = [_jet(35.0, 0.1, 0.2), _jet(50.0, -0.3, 1.5), _jet(45.0, 1.0, -2.0)]
    vector = extract_sb_features(event, jets)
    assert vector.values.shape == (12,)
    assert vector.values[0] == 50.0
    assert vector.values[4] == 45.0
    assert vector.values[8] == 25.0
    assert vector.as_dict()['njets40'] == 2.0
    with pytest.raises(SelectionRejected):
        extract_sb_features(event, jets[:1])


def test_jet_sample_padding():
    tracks = [_track(10.0, 0.1, 0.1), _track(20.0, 0.0, 0.0), _track(5.0, -0.1, 0.05)]
    jet = _jet(35.0, 0.0, 0.05, constituents=[0, 1, 2])
    sample = build_jet_sample(jet, tracks, 'gluon', max_tracks=5)
    assert_array_equal(sample.real_mask, [True, True, True, False, False])
    assert_array_equal(sample.features[3:], 0.0)
    assert_allclose(sample.features[:3, 0], [20.0, 10.0, 5.0])
    assert sample.features[0, 2] == pytest.approx(-0.05)
    assert sample.label == 0


def test_jet_sample_truncates_to_hardest():
    tracks = [_track(float(pt), 0.01 * pt, 0.0) for pt in (3, 9, 1, 7, 5, 8, 2)]
    jet = _jet(35.0, constituents=range(7))
    sample = build_jet_sample(jet, tracks, 'quark', max_tracks=4)
    assert sample.real_mask.all()
    assert_allclose(sample.features[:, 0], [9.0, 8.0, 7.0, 5.0])
    with pytest.raises(SelectionRejected):
        build_jet_sample(jet, tracks, 'unlabeled', max_tracks=4)


def test_met_sample_pads_to_n_max():
    tracks = [_track(1.0 + 0.01 * i, 0.0, 0.01 * i) for i in range(123)]
    event = Event(process='WJETS', domain='B', tracks=tracks, met_true=(3.0, 4.0))
    sample = build_met_sample(event, n_max=128)
    assert sample.n_real == 123
    assert_array_equal(sample.features[123:], 0.0)
    assert sample.target == pytest.approx(5.0)
    with pytest.raises(SelectionRejected):
        build_met_sample(Event(process='WJETS', domain='B', tracks=[_track(0.2)]), n_max=128)


def test_knn_collinear_points():
    graph = knn_graph(_jet_sample([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]), k=2)
    assert graph.neighbors == [[1, 2], [0, 2], [1, 3], [2, 1]]


def test_knn_uses_periodic_phi():
    graph = knn_graph(_jet_sample([(0.0, 3.0), (0.0, -3.0), (0.0, 0.0)]), k=1)
    assert graph.neighbors[0] == [1]
    assert graph.neighbors[1] == [0]


def test_knn_small_jets():
    assert knn_graph(_jet_sample([(0.2, 0.3)]), k=8).neighbors == [[0]]
    graph = knn_graph(_jet_sample([(0.0, 0.0), (0.1, 0.0), (0.3, 0.0)]), k=8)
    assert all(len(nb) == 2 for nb in graph.neighbors)
    index, weight = graph.packed()
    assert index.shape == (3, 2)
    assert_allclose(weight.sum(axis=1), 1.0)


def test_bin_acceptance_thins_majority():
    accept_q, accept_g = bin_acceptance([100, 10, 0], [50, 10, 4])
    assert_allclose(accept_q, [0.5, 1.0, 1.0])
    assert_allclose(accept_g, [1.0, 1.0, 0.0])


def test_reweighting_identical_spectra_keeps_everything():
    pts = np.linspace(31.0, 99.0, 40)
    samples = [_jet_sample([(0.0, 0.0)], label=1, jet_pt=pt) for pt in pts]
    samples += [_jet_sample([(0.0, 0.0)], label=0, jet_pt=pt) for pt in pts]
    kept = reweight_qg_pt(samples, np.linspace(30.0, 100.0, 8), event_rng(1))
    assert len(kept) == len(samples)


def test_reweighting_keeps_minority_and_thins_majority():
    samples = [_jet_sample([(0.0, 0.0)], label=1, jet_pt=55.0) for _ in range(100)]
    samples += [_jet_sample([(0.0, 0.0)], label=0, jet_pt=55.0) for _ in range(50)]
    kept = reweight_qg_pt(samples, [50.0, 60.0], event_rng(2))
    assert sum(1 for s in kept if s.label == 0) == 50
    assert 30 <= sum(1 for s in kept if s.label == 1) <= 70
    with pytest.raises(ValueError):
        reweight_qg_pt(samples[:100], [50.0, 60.0], event_rng(2))


def test_reweighted_spectra_agree_within_statistics():
    rng = np.random.default_rng(16)
    edges = np.linspace(30.0, 130.0, 21)
    quark_pts = 30.0 + rng.exponential(30.0, size=10000)
    gluon_pts = 30.0 + rng.exponential(18.0, size=10000)
    samples = [_jet_sample([(0.0, 0.0)], label=1, jet_pt=pt) for pt in quark_pts]
    samples += [_jet_sample([(0.0, 0.0)], label=0, jet_pt=pt) for pt in gluon_pts]
    kept = reweight_qg_pt(samples, edges, event_rng(16))

    q, _ = np.histogram([s.jet_pt for s in kept if s.label == 1], bins=edges)
    g, _ = np.histogram([s.jet_pt for s in kept if s.label == 0], bins=edges)
    filled = (q + g) > 0
    chi2 = np.sum((q[filled] - g[filled]) ** 2 / (q[filled] + g[filled]))
    assert filled.sum() == 20
    assert chi2 / filled.sum() < 2.0
    before, _ = np.histogram(quark_pts, bins=edges)
    assert q.sum() < before.sum()


def test_standardizer_keeps_padding_at_zero():
    features = np.array([[[1.0, 10.0], [3.0, 30.0], [7.0, 7.0]],
                         [[5.0, 20.0], [9.0, 9.0], [9.0, 9.0]]])
    mask = np.array([[True, True, False], [True, False, False]])
    data = SampleSet(task='met', features=features, targets=np.zeros(2), mask=mask)
    standardizer = Standardizer().fit(data)
    out = standardizer.transform(data)
    assert_array_equal(out.features[~mask], 0.0)
    assert_allclose(out.features[mask].mean(axis=0), 0.0, atol=1e-12)
    assert_allclose(standardizer.scaler.mean_, [3.0, 20.0])
    assert_array_equal(data.features, features)
    restored = Standardizer.from_dict(standardizer.to_dict())
    assert_array_equal(restored.transform(data).features, out.features)


def test_sample_set_subset_and_concat():
    data = SampleSet(task='sb', features=np.arange(12.0).reshape(4, 3), targets=np.array([1.0, 0.0, 1.0, 0.0]),
                     domains=np.array(['A', 'A', 'B', 'B'], dtype=object))
    part = data.subset([3, 1])
    assert_array_equal(part.targets, [0.0, 0.0])
    assert list(part.domains) == ['B', 'A']
    joined = SampleSet.concat([part, data.subset([0])])
    assert len(joined) == 3
    with pytest.raises(ValueError):
        SampleSet(task='sb', features=np.zeros((2, 3)), targets=np.zeros(3))


@pytest.fixture(scope='module')
def events():
    domains, generator = load_domain_configs()
    return ([generate_event('TTBAR', domains['A'], generator, s) for s in range(15)]
            + [generate_event('WW', domains['A'], generator, 100 + s) for s in range(15)]
            + [generate_event('ZJETS', domains['A'], generator, 200 + s) for s in range(5)])


def test_prepare_sb_labels_processes(events):
    samples, meta = prepare_samples('sb', events, seed=3)
    assert meta['rejected']['process'] == 5
    assert meta['count'] == len(samples)
    assert {s.label for s in samples} <= {0, 1}
    assert all(s.values.shape == (12,) for s in samples)


def test_met_samples_file_round_trip(events, tmp_path):
    samples, meta = prepare_samples('met', events, n_max=64, seed=3)
    path = str(tmp_path / 'met.jsonl')
    write_samples(path, 'met', samples, meta)
    loaded, loaded_meta = load_samples(path)
    expected = SampleSet.from_samples('met', samples)
    assert loaded_meta['n_max'] == 64
    assert_array_equal(loaded.features, expected.features)
    assert_array_equal(loaded.mask, expected.mask)
    assert_array_equal(loaded.targets, expected.targets)
    assert len(loaded_meta['feature_mean']) == 4


def test_prepare_qg_balances_flavors(tmp_path):
    domains, generator = load_domain_configs()
    events = [generate_event('WJETS', domains['A'], generator, 300 + s) for s in range(40)]
    samples, meta = prepare_samples('qg', events, k=4, seed=3)
    assert meta['n_jets'] >= meta['count']
    assert 0.0 <= meta['unlabeled_fraction'] <= 1.0
    if not samples:
        pytest.skip("no labeled jets in this small event set")
    path = str(tmp_path / 'qg.jsonl')
    write_samples(path, 'qg', samples, meta)
    loaded, _ = load_samples(path)
    assert len(loaded) == len(samples)
    assert len(loaded.graphs) == len(samples)
    assert_array_equal(loaded.mask.sum(axis=1), [s.n_real for s in samples])


def test_met_target_is_truth_magnitude(events):
    samples, _ = prepare_samples('met', events, n_max=32)
    for sample, event in zip(samples, [e for e in events if select_tracks(e)]):
        assert sample.target == pytest.approx(math.hypot(*event.met_true))


def test_shifted_domain_has_harder_and_busier_jets():
    domains, generator = load_domain_configs()
    summary = {}
    for name in ('A', 'C'):
        events = generate_dataset('WJETS', domains[name], generator, 1000, global_seed=17)
        jets = [event_jets(event)[0] for event in events]
        leading = [j[0].pt for j in jets if j]
        summary[name] = (np.mean(leading), np.mean([len(j) for j in jets]))
    assert summary['C'][0] > summary['A'][0]
    assert summary['C'][1] > summary['A'][1]


if __name__ == '__main__':
    sys.exit(pytest.main([__file__]))
