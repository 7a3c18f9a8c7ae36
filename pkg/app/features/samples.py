"""
Event -> model input conversions for the three tasks
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from app.collider.clustering import antikt_cluster
from app.collider.kinematics import delta_phi
from config.settings import settings

logger = logging.getLogger(__name__)

SB_FEATURE_NAMES = (
    'jet1_pt', 'jet1_eta', 'jet1_phi', 'jet1_mass',
    'jet2_pt', 'jet2_eta', 'jet2_phi', 'jet2_mass',
    'lepton_pt', 'lepton_eta', 'lepton_phi', 'njets40',
)
JET_FEATURE_NAMES = ('pt', 'deta', 'dphi', 'charge', 'd0', 'z0')
MET_FEATURE_NAMES = ('px', 'py', 'pz', 'd0')
FLAVOR_LABELS = {'quark': 1, 'gluon': 0}


class SelectionRejected(ValueError):
    """The event or jet fails a selection needed to build a sample"""


@dataclass
class SBFeatureVector:
    values: np.ndarray
    label: int = -1
    domain: str = ''
    seed: int = 0

    def as_dict(self):
        return dict(zip(SB_FEATURE_NAMES, self.values.tolist()))


@dataclass
class JetSample:
    features: np.ndarray
    real_mask: np.ndarray
    label: int
    jet_pt: float
    seed: int = 0
    domain: str = ''

    @property
    def n_real(self):
        return int(self.real_mask.sum())


@dataclass
class METSample:
    features: np.ndarray
    real_mask: np.ndarray
    target: float
    seed: int = 0
    domain: str = ''
    met_true: tuple = field(default=(0.0, 0.0))

    @property
    def n_real(self):
        return int(self.real_mask.sum())


def _track_sort_key(track):
    # descending pt; the angular keys only break exact pt ties
    return (-track.pt, track.pz, track.px)


def select_tracks(event, min_pt=None):
    """Tracks with pt strictly above the threshold, hardest first"""
    threshold = settings.TRACK_MIN_PT if min_pt is None else min_pt
    return sorted((t for t in event.tracks if t.pt > threshold), key=_track_sort_key)


def jet_inputs(event, min_pt=None):
    """Selected tracks eligible for clustering (charged-lepton tracks removed)"""
    return [t for t in select_tracks(event, min_pt) if t.origin != 'lepton']


def event_jets(event, radius=None, min_pt=None, max_eta=None):
    """Cluster the event and return (jets, tracks the constituent indices refer to)"""
    tracks = jet_inputs(event)
    jets = antikt_cluster(
        tracks,
        radius=settings.JET_RADIUS if radius is None else radius,
        min_pt=settings.JET_MIN_PT if min_pt is None else min_pt,
        max_eta=settings.JET_MAX_ETA if max_eta is None else max_eta,
    )
    return jets, tracks


def extract_sb_features(event, jets):
    """Fixed 12-slot layout: two leading jets (pt, η, φ, m), leading lepton (pt, η, φ), jet count above 40 GeV"""
    if len(jets) < 2:
        raise SelectionRejected(f"Event {event.seed}: needs 2 jets, has {len(jets)}")
    if not event.leptons:
        raise SelectionRejected(f"Event {event.seed}: no lepton")
    ordered = sorted(jets, key=lambda j: -j.pt)
    j1, j2 = ordered[0], ordered[1]
    lepton = max(event.leptons, key=lambda lep: lep.pt)
    njets40 = sum(1 for j in jets if j.pt > settings.SB_JET_COUNT_PT)
    values = np.array([
        j1.pt, j1.eta, j1.phi, j1.mass,
        j2.pt, j2.eta, j2.phi, j2.mass,
        lepton.pt, lepton.eta, lepton.phi, float(njets40),
    ], dtype=np.float64)
    return SBFeatureVector(values=values, domain=event.domain, seed=event.seed)


def build_jet_sample(jet, tracks, flavor, max_tracks=None, seed=0, domain=''):
    """Up to ``max_tracks`` hardest constituents in jet-relative coordinates, zero-padded"""
    max_tracks = settings.JET_MAX_TRACKS if max_tracks is None else max_tracks
    if not jet.constituent_indices:
        raise SelectionRejected("Jet has no constituents")
    if flavor not in FLAVOR_LABELS:
        raise SelectionRejected(f"Jet flavor must be quark or gluon, got {flavor!r}")
    constituents = sorted((tracks[i] for i in jet.constituent_indices), key=_track_sort_key)[:max_tracks]
    features = np.zeros((max_tracks, len(JET_FEATURE_NAMES)))
    for row, track in enumerate(constituents):
        features[row] = (track.pt, track.eta - jet.eta, delta_phi(track.phi, jet.phi),
                         track.charge, track.d0, track.z0)
    mask = np.zeros(max_tracks, dtype=bool)
    mask[:len(constituents)] = True
    return JetSample(features=features, real_mask=mask, label=FLAVOR_LABELS[flavor], jet_pt=jet.pt,
                     seed=seed, domain=domain)


def build_met_sample(event, n_max=None):
    """Hardest ``n_max`` selected tracks as (px, py, pz, d0), zero-padded; target |met_true|"""
    n_max = settings.MET_MAX_TRACKS if n_max is None else n_max
    tracks = select_tracks(event)[:n_max]
    if not tracks:
        raise SelectionRejected(f"Event {event.seed}: no selected tracks")
    features = np.zeros((n_max, len(MET_FEATURE_NAMES)))
    for row, track in enumerate(tracks):
        features[row] = (track.px, track.py, track.pz, track.d0)
    mask = np.zeros(n_max, dtype=bool)
    mask[:len(tracks)] = True
    return METSample(features=features, real_mask=mask,
                     target=math.hypot(event.met_true[0], event.met_true[1]),
                     seed=event.seed, domain=event.domain, met_true=tuple(event.met_true))
