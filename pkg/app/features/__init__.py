"""
Event -> model input conversion for the three tasks
"""

from app.features.datasets import SampleSet, Standardizer, load_samples, prepare_samples, write_samples
from app.features.graph import KnnGraph, knn_graph
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
    select_tracks,
)

__all__ = [
    'JetSample', 'KnnGraph', 'METSample', 'SBFeatureVector', 'SampleSet', 'SelectionRejected', 'Standardizer',
    'build_jet_sample', 'build_met_sample', 'event_jets', 'extract_sb_features', 'knn_graph', 'load_samples',
    'prepare_samples', 'reweight_qg_pt', 'select_tracks', 'write_samples',
]
