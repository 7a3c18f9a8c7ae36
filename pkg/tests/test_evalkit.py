#!/usr/bin/env python3
"""
Tests for AUC, resolution profiles, histogram comparisons, curve aggregation and reports
"""

import json
import os
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

# Add the parent directory to Python path to import app modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.collider.domains import load_domain_configs
from app.collider.generator import generate_event
from app.evalkit.curves import CurvePoint, aggregate_runs, data_savings
from app.evalkit.histograms import compare_histograms, compare_observable, observable_values
from app.evalkit.metrics import MetricError, auc_score, resolution_profile, roc_auc
from app.evalkit.report import emit_report, read_table, report_from_directory


def _record(strategy, size, seed_index, metric, status='ok', task='sb'):
    return {'task': task, 'strategy': strategy, 'train_size': size, 'seed_index': seed_index,
            'test_metric': metric, 'status': status}


def test_auc_examples():
    assert auc_score([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert auc_score([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5
    assert auc_score([0.8, 0.4, 0.6, 0.2], [1, 1, 0, 0]) == 0.75
    assert auc_score([0.1, 0.9], [1, 0]) == 0.0


def test_auc_matches_pair_counting():
    rng = np.random.default_rng(3)
    scores = np.round(rng.normal(size=60), 1)
    labels = rng.integers(0, 2, size=60)
    sig, bkg = scores[labels == 1], scores[labels == 0]
    pairs = sum(1.0 if s > b else 0.5 if s == b else 0.0 for s in sig for b in bkg)
    assert auc_score(scores, labels) == pytest.approx(pairs / (len(sig) * len(bkg)), abs=1e-15)


def test_auc_is_invariant_under_monotone_maps():
    rng = np.random.default_rng(4)
    scores = rng.normal(size=100)
    labels = rng.integers(0, 2, size=100)
    assert auc_score(scores, labels) == auc_score(np.exp(3.0 * scores) + 7.0, labels)


def test_auc_rejects_single_class_and_bad_labels():
    with pytest.raises(MetricError):
        auc_score([0.1, 0.2], [1, 1])
    with pytest.raises(MetricError):
        auc_score([0.1, 0.2], [1, 2])
    with pytest.raises(MetricError):
        auc_score([0.1, 0.2, 0.3], [1, 0])


def test_roc_curve_endpoints():
    roc = roc_auc([0.9, 0.7, 0.4, 0.2], [1, 0, 1, 0])
    assert roc.auc == 0.75
    assert roc.fpr[0] == 0.0 and roc.tpr[0] == 0.0
    assert roc.fpr[-1] == 1.0 and roc.tpr[-1] == 1.0
    assert list(roc.to_frame().columns) == ['threshold', 'tpr', 'fpr']


def test_resolution_profile_bias_and_width():
    trues = np.array([45.0, 50.0, 55.0, 10.0])
    preds = trues + np.array([-1.0, 0.0, 1.0, 3.0])
    profile = resolution_profile(preds, trues, edges=[0.0, 40.0, 60.0, 100.0])
    assert_array_equal(profile.counts, [1, 3, 0])
    assert profile.bias[1] == pytest.approx(0.0)
    assert profile.width[1] == pytest.approx(1.0)
    assert_array_equal(profile.empty, [True, False, True])
    highlighted = profile.highlighted()
    assert highlighted['count'] == 3 and highlighted['width'] == pytest.approx(1.0)
    frame = profile.to_frame()
    assert np.isnan(frame['bias'][0]) and np.isnan(frame['width'][2])


def test_resolution_profile_counts_outside_events():
    profile = resolution_profile([10.0, 300.0, 50.0], [12.0, 400.0, 48.0])
    assert profile.n_outside == 1
    assert profile.counts.sum() + profile.n_outside == 3
    assert_allclose(profile.pred_shape.sum(), 1.0)
    assert profile.residual_hists.shape == (len(profile.edges) - 1, 40)
    with pytest.raises(MetricError):
        resolution_profile([1.0], [1.0, 2.0])


def test_histogram_normalization_and_uncertainty():
    values = np.full(1000000, 0.5)
    comparison = compare_histograms({'A': values, 'C': [0.5, 1.5, 1.5, 9.0]}, bins=[0.0, 1.0, 2.0])
    assert_allclose(comparison.density['A'], [1.0, 0.0])
    assert comparison.uncertainty['A'][0] == pytest.approx(1e-3)
    assert_allclose(comparison.density['C'], [1 / 3, 2 / 3])
    assert_array_equal(comparison.counts['C'], [1, 2])
    frame = comparison.to_frame()
    assert {'A_count', 'A_fraction', 'A_uncertainty', 'C_fraction'} <= set(frame.columns)
    with pytest.raises(ValueError):
        compare_histograms({'A': []}, bins=[0.0, 1.0])


def test_observables_over_generated_events():
    domains, generator = load_domain_configs()
    named = {name: [generate_event('WJETS', domains[name], generator, s) for s in range(20)] for name in ('A', 'C')}
    comparison = compare_observable(named, 'track_multiplicity')
    for name in ('A', 'C'):
        assert comparison.density[name].sum() == pytest.approx(1.0)
    assert len(observable_values(named['A'], 'lepton_pt')) == 20
    with pytest.raises(ValueError):
        observable_values(named['A'], 'photon_pt')


def test_aggregation_mean_and_std():
    records = [_record('scratch', 1000, i, m) for i, m in enumerate([0.61, 0.62, 0.63])]
    records.append(_record('scratch', 1000, 3, None, status='failed'))
    records.append(_record('pretrain_full', 1000, 0, 0.7))
    points = aggregate_runs(records)
    scratch = points[0]
    assert (scratch.strategy, scratch.train_size, scratch.n) == ('scratch', 1000, 3)
    assert scratch.mean == pytest.approx(0.62)
    assert scratch.std == pytest.approx(0.01)
    assert points[1].std is None


def test_data_savings_interpolates_the_baseline():
    points = [CurvePoint('scratch', 1000, 0.60, 0.01, 3), CurvePoint('scratch', 3000, 0.70, 0.01, 3),
              CurvePoint('pretrain_full', 1000, 0.70, 0.01, 3), CurvePoint('pretrain_frozen', 1000, 0.65, 0.01, 3),
              CurvePoint('pretrain_full', 3000, 0.80, 0.01, 3)]
    savings = data_savings(points)
    assert savings['pretrain_full']['1000'] == {'factor': 3.0, 'flag': 'ok'}
    assert savings['pretrain_frozen']['1000']['factor'] == pytest.approx(2.0)
    assert savings['pretrain_full']['3000'] == {'factor': None, 'flag': 'out_of_range'}


def _report_inputs():
    rng = np.random.default_rng(5)
    records = [_record(s, n, i, float(rng.uniform(0.6, 0.9)))
               for s in ('scratch', 'pretrain_full') for n in (100, 200) for i in range(3)]
    labels = rng.integers(0, 2, size=50)
    roc = roc_auc(rng.normal(size=50) + labels, labels)
    trues = rng.uniform(0.0, 200.0, size=300)
    profile = resolution_profile(trues + rng.normal(0.0, 5.0, size=300), trues)
    return records, aggregate_runs(records), {'scratch_200': roc}, {'scratch_200': profile}


def test_report_regeneration_is_byte_identical(tmp_path):
    records, points, rocs, profiles = _report_inputs()
    first = emit_report(str(tmp_path / 'one'), records, points, rocs=rocs, profiles=profiles)
    second = emit_report(str(tmp_path / 'two'), records, points, rocs=rocs, profiles=profiles)
    assert [os.path.basename(p) for p in first] == [os.path.basename(p) for p in second]
    for a, b in zip(first, second):
        with open(a, 'rb') as fa, open(b, 'rb') as fb:
            assert fa.read() == fb.read()


def test_report_tables_round_trip(tmp_path):
    records, points, rocs, profiles = _report_inputs()
    emit_report(str(tmp_path), records, points, rocs=rocs, profiles=profiles)
    curves = read_table(str(tmp_path / 'curves.csv'))
    assert list(curves.columns) == ['strategy', 'train_size', 'mean', 'std', 'n']
    assert curves['mean'].tolist() == [p.mean for p in points]
    roc = read_table(str(tmp_path / 'roc_scratch_200.csv'))
    assert_array_equal(roc['tpr'].to_numpy(), rocs['scratch_200'].tpr)
    resolution = read_table(str(tmp_path / 'resolution_scratch_200.csv'))
    assert resolution['count'].tolist() == profiles['scratch_200'].counts.tolist()
    with open(tmp_path / 'summary.json') as fh:
        summary = json.load(fh)
    assert summary['metric'] == 'auc' and summary['baseline'] == 'scratch'
    assert summary['auc']['scratch_200'] == rocs['scratch_200'].auc
    assert set(summary['data_savings']) == {'pretrain_full'}


def test_report_from_sweep_directory(tmp_path):
    records, _, _, _ = _report_inputs()
    in_dir = tmp_path / 'sweep'
    os.makedirs(in_dir / 'predictions')
    with open(in_dir / 'runs.jsonl', 'w') as fh:
        for record in records:
            fh.write(json.dumps(record) + '\n')
    rng = np.random.default_rng(6)
    labels = rng.integers(0, 2, size=40)
    np.savez(in_dir / 'predictions' / 'scratch_200_0.npz', scores=rng.normal(size=40), targets=labels)
    written = report_from_directory(str(in_dir), str(tmp_path / 'report'))
    names = {os.path.basename(p) for p in written}
    assert {'curves.csv', 'runs.jsonl', 'summary.json', 'roc_scratch_200.csv'} <= names
    assert 'roc_pretrain_full_200.csv' not in names


if __name__ == '__main__':
    sys.exit(pytest.main([__file__]))
