"""
Prepared samples: stacked arrays, standardization and the prepared-sample files
"""

import logging
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np
from sklearn.preprocessing import StandardScaler

from app.collider.clustering import label_jet_flavor
from app.collider.generator import derive_seed, event_rng
from app.features.graph import knn_graph
from app.features.reweight import reweight_qg_pt
from app.features.samples import (
    JetSample,
    METSample,
    SBFeatureVector,
    SelectionRejected,
    build_jet_sample,
    build_met_sample,
    event_jets,
    extract_sb_features,
)
from app.storage import config_hash, read_json, read_jsonl, write_json, write_jsonl
from config.settings import settings

logger = logging.getLogger(__name__)

TASKS = ('sb', 'qg', 'met')
SB_LABELS = {'TTBAR': 1, 'WW': 0}


@dataclass
class SampleSet:
    """Task inputs stacked along the first axis, with per-sample provenance"""
    task: str
    features: np.ndarray
    targets: np.ndarray
    mask: np.ndarray = None
    domains: np.ndarray = None
    seeds: np.ndarray = None
    jet_pt: np.ndarray = None
    graphs: list = None

    def __post_init__(self):
        n = len(self.features)
        if len(self.targets) != n:
            raise ValueError(f"{len(self.targets)} targets for {n} samples")
        if self.domains is None:
            self.domains = np.array([''] * n, dtype=object)
        if self.seeds is None:
            self.seeds = np.zeros(n, dtype=np.uint64)

    def __len__(self):
        return len(self.features)

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        return SampleSet(
            task=self.task,
            features=self.features[idx],
            targets=self.targets[idx],
            mask=None if self.mask is None else self.mask[idx],
            domains=self.domains[idx],
            seeds=self.seeds[idx],
            jet_pt=None if self.jet_pt is None else self.jet_pt[idx],
            graphs=None if self.graphs is None else [self.graphs[i] for i in idx],
        )

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        first = parts[0]
        if any(p.task != first.task for p in parts):
            raise ValueError("Cannot concatenate sample sets of different tasks")
        return cls(
            task=first.task,
            features=np.concatenate([p.features for p in parts]),
            targets=np.concatenate([p.targets for p in parts]),
            mask=None if first.mask is None else np.concatenate([p.mask for p in parts]),
            domains=np.concatenate([p.domains for p in parts]),
            seeds=np.concatenate([p.seeds for p in parts]),
            jet_pt=None if first.jet_pt is None else np.concatenate([p.jet_pt for p in parts]),
            graphs=None if first.graphs is None else [g for p in parts for g in p.graphs],
        )

    @classmethod
    def from_samples(cls, task, samples, k=None):
        if not samples:
            raise ValueError(f"No {task} samples to stack")
        domains = np.array([s.domain for s in samples], dtype=object)
        seeds = np.array([s.seed for s in samples], dtype=np.uint64)
        if task == 'sb':
            return cls(task=task, features=np.stack([s.values for s in samples]),
                       targets=np.array([s.label for s in samples], dtype=np.float64),
                       domains=domains, seeds=seeds)
        if task == 'qg':
            graphs = [knn_graph(s, k).packed() for s in samples]
            return cls(task=task, features=np.stack([s.features for s in samples]),
                       targets=np.array([s.label for s in samples], dtype=np.float64),
                       mask=np.stack([s.real_mask for s in samples]), domains=domains, seeds=seeds,
                       jet_pt=np.array([s.jet_pt for s in samples]), graphs=graphs)
        if task == 'met':
            return cls(task=task, features=np.stack([s.features for s in samples]),
                       targets=np.array([s.target for s in samples], dtype=np.float64),
                       mask=np.stack([s.real_mask for s in samples]), domains=domains, seeds=seeds)
        raise ValueError(f"Unknown task {task!r}")

    def real_rows(self):
        if self.mask is None:
            return self.features
        return self.features[self.mask]


class Standardizer:
    """Per-feature standardization fitted on real rows of a training split (StandardScaler)"""

    def __init__(self, scaler=None):
        self.scaler = scaler

    def fit(self, sample_set):
        self.scaler = StandardScaler().fit(sample_set.real_rows())
        logger.info(f"Fitted standardization on {int(self.scaler.n_samples_seen_)} rows of {sample_set.task} inputs")
        return self

    def transform(self, sample_set):
        if self.scaler is None:
            raise ValueError("Standardizer is not fitted")
        features = np.array(sample_set.features, dtype=np.float64, copy=True)
        if sample_set.mask is None:
            features = self.scaler.transform(features)
        else:
            features[sample_set.mask] = self.scaler.transform(features[sample_set.mask])
            features[~sample_set.mask] = 0.0
        return replace(sample_set, features=features)

    def to_dict(self):
        return {'mean': self.scaler.mean_.tolist(), 'scale': self.scaler.scale_.tolist(),
                'n_samples_seen': int(self.scaler.n_samples_seen_)}

    @classmethod
    def from_dict(cls, record):
        scaler = StandardScaler()
        scaler.mean_ = np.asarray(record['mean'], dtype=np.float64)
        scaler.scale_ = np.asarray(record['scale'], dtype=np.float64)
        scaler.var_ = scaler.scale_ ** 2
        scaler.n_features_in_ = len(scaler.mean_)
        scaler.n_samples_seen_ = record.get('n_samples_seen', 0)
        return cls(scaler)


def reweight_edges(jet_pts, n_bins=None):
    n_bins = settings.REWEIGHT_BINS if n_bins is None else n_bins
    low = min(settings.JET_MIN_PT, float(np.min(jet_pts)))
    high = float(np.max(jet_pts)) * (1.0 + 1e-9) + 1e-9
    return np.linspace(low, high, n_bins + 1)


def prepare_samples(task, events, k=None, n_max=None, n_bins=None, seed=None):
    """Turn events into task samples; returns (samples, metadata)"""
    if task not in TASKS:
        raise ValueError(f"Unknown task {task!r}; expected one of {TASKS}")
    seed = settings.SEED if seed is None else seed
    rejected = Counter()
    samples = []
    meta = {'task': task, 'n_events': len(events), 'code_version': settings.CODE_VERSION}

    if task == 'sb':
        for event in events:
            if event.process not in SB_LABELS:
                rejected['process'] += 1
                continue
            jets, _ = event_jets(event)
            try:
                vector = extract_sb_features(event, jets)
            except SelectionRejected:
                rejected['selection'] += 1
                continue
            vector.label = SB_LABELS[event.process]
            samples.append(vector)

    elif task == 'qg':
        total_jets = 0
        unlabeled = 0
        for event in events:
            jets, tracks = event_jets(event)
            for j, jet in enumerate(jets):
                total_jets += 1
                flavor = label_jet_flavor(jet, event.partons, settings.TRUTH_MATCH_CONE)
                if flavor == 'unlabeled':
                    unlabeled += 1
                    continue
                jet.flavor = flavor
                samples.append(build_jet_sample(jet, tracks, flavor, seed=derive_seed(event.seed, j),
                                                domain=event.domain))
        fraction = unlabeled / total_jets if total_jets else 0.0
        logger.info(f"Labeled {len(samples)} of {total_jets} jets; unlabeled fraction {fraction:.3f}")
        meta.update({'n_jets': total_jets, 'unlabeled_fraction': fraction})
        if samples:
            edges = reweight_edges([s.jet_pt for s in samples], n_bins)
            samples = reweight_qg_pt(samples, edges, event_rng(derive_seed(seed, 0x5157)))
            meta['bin_edges'] = edges.tolist()
        meta['k'] = settings.KNN_K if k is None else k

    else:
        n_max = settings.MET_MAX_TRACKS if n_max is None else n_max
        for event in events:
            try:
                samples.append(build_met_sample(event, n_max))
            except SelectionRejected:
                rejected['no_tracks'] += 1
        meta['n_max'] = n_max

    if rejected:
        logger.info(f"Rejected events: {dict(rejected)}")
    meta['rejected'] = dict(rejected)
    meta['count'] = len(samples)
    meta['config_hash'] = config_hash({'task': task, 'k': k, 'n_max': n_max, 'n_bins': n_bins, 'seed': seed})
    return samples, meta


def _sample_record(task, sample):
    if task == 'sb':
        return {'features': sample.values, 'label': sample.label, 'domain': sample.domain, 'seed': sample.seed}
    rows = sample.features[sample.real_mask]
    if task == 'qg':
        return {'features': rows, 'label': sample.label, 'jet_pt': sample.jet_pt,
                'domain': sample.domain, 'seed': sample.seed}
    return {'features': rows, 'target': sample.target, 'met_true': list(sample.met_true),
            'domain': sample.domain, 'seed': sample.seed}


def _padded(rows, slots, width):
    features = np.zeros((slots, width))
    rows = np.asarray(rows, dtype=np.float64).reshape(-1, width)
    features[:len(rows)] = rows
    mask = np.zeros(slots, dtype=bool)
    mask[:len(rows)] = True
    return features, mask


def _sample_from_record(task, record, meta):
    if task == 'sb':
        return SBFeatureVector(values=np.asarray(record['features'], dtype=np.float64), label=int(record['label']),
                               domain=record.get('domain', ''), seed=int(record.get('seed', 0)))
    if task == 'qg':
        features, mask = _padded(record['features'], meta.get('max_tracks', settings.JET_MAX_TRACKS), 6)
        return JetSample(features=features, real_mask=mask, label=int(record['label']),
                         jet_pt=float(record['jet_pt']), seed=int(record.get('seed', 0)),
                         domain=record.get('domain', ''))
    features, mask = _padded(record['features'], meta.get('n_max', settings.MET_MAX_TRACKS), 4)
    return METSample(features=features, real_mask=mask, target=float(record['target']),
                     seed=int(record.get('seed', 0)), domain=record.get('domain', ''),
                     met_true=tuple(record.get('met_true', (0.0, 0.0))))


def meta_path(path):
    return f"{path}.meta.json"


def write_samples(path, task, samples, meta):
    """Prepared samples as JSON Lines plus a ``<path>.meta.json`` sidecar"""
    if samples:
        stacked = SampleSet.from_samples(task, samples, k=meta.get('k')) if task != 'qg' else None
        rows = stacked.real_rows() if stacked is not None else np.concatenate(
            [s.features[s.real_mask] for s in samples])
        meta = dict(meta, feature_mean=rows.mean(axis=0).tolist(), feature_std=rows.std(axis=0).tolist())
    if task == 'qg':
        meta = dict(meta, max_tracks=settings.JET_MAX_TRACKS)
    write_jsonl(path, (_sample_record(task, s) for s in samples))
    write_json(meta_path(path), meta)


def load_sample_objects(path):
    meta = read_json(meta_path(path))
    task = meta['task']
    return [_sample_from_record(task, record, meta) for record in read_jsonl(path)], meta


def load_samples(path):
    """Read a prepared-sample file into a SampleSet; returns (SampleSet, metadata)"""
    samples, meta = load_sample_objects(path)
    logger.info(f"Loaded {len(samples)} {meta['task']} samples from {path}")
    return SampleSet.from_samples(meta['task'], samples, k=meta.get('k')), meta
