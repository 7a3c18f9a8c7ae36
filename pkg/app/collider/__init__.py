"""
Toy collider: event generation, detector response, jet clustering
"""

from app.collider.clustering import antikt_cluster, label_jet_flavor
from app.collider.domains import DomainConfig, GeneratorConfig, load_domain_configs
from app.collider.events import Event, Jet, Lepton, Track, TruthParton, read_events, write_events
from app.collider.generator import (
    add_pileup,
    apply_detector,
    derive_seed,
    event_rng,
    fragment_parton,
    generate_dataset,
    generate_event,
)
from app.collider.kinematics import delta_phi

__all__ = [
    'DomainConfig', 'Event', 'GeneratorConfig', 'Jet', 'Lepton', 'Track', 'TruthParton', 'add_pileup',
    'antikt_cluster', 'apply_detector', 'delta_phi', 'derive_seed', 'event_rng', 'fragment_parton',
    'generate_dataset', 'generate_event', 'label_jet_flavor', 'load_domain_configs', 'read_events',
    'write_events',
]
