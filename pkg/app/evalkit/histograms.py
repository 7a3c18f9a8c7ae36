"""
Per-domain distributions of input observables, unit-normalized with Poisson bands
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from app.features.samples import event_jets, select_tracks

logger = logging.getLogger(__name__)


def _lepton_pt(event):
    return [max(lep.pt for lep in event.leptons)] if event.leptons else []


def _leading_jet_pt(event):
    jets, _ = event_jets(event)
    return [jets[0].pt] if jets else []


def _jet_multiplicity(event):
    jets, _ = event_jets(event)
    return [len(jets)]


def _leading_track_pt(event):
    tracks = select_tracks(event)
    return [tracks[0].pt] if tracks else []


def _track_multiplicity(event):
    return [len(select_tracks(event))]


def _track_component(attr):
    def extract(event):
        return [abs(getattr(t, attr)) for t in select_tracks(event)]
    return extract


# name -> (extractor returning the event's values, default bin edges)
OBSERVABLES = {
    'lepton_pt': (_lepton_pt, np.linspace(0.0, 200.0, 41)),
    'leading_jet_pt': (_leading_jet_pt, np.linspace(30.0, 330.0, 31)),
    'jet_multiplicity': (_jet_multiplicity, np.arange(-0.5, 10.5, 1.0)),
    'leading_track_pt': (_leading_track_pt, np.linspace(0.0, 200.0, 41)),
    'track_multiplicity': (_track_multiplicity, np.linspace(-0.5, 199.5, 41)),
    'track_px': (_track_component('px'), np.linspace(0.0, 50.0, 51)),
    'track_py': (_track_component('py'), np.linspace(0.0, 50.0, 51)),
    'track_pz': (_track_component('pz'), np.linspace(0.0, 100.0, 51)),
}


@dataclass
class HistogramComparison:
    observable: str
    edges: np.ndarray
    counts: dict
    density: dict
    uncertainty: dict

    def to_frame(self):
        frame = pd.DataFrame({'low': self.edges[:-1], 'high': self.edges[1:]})
        for name in self.counts:
            frame[f"{name}_count"] = self.counts[name]
            frame[f"{name}_fraction"] = self.density[name]
            frame[f"{name}_uncertainty"] = self.uncertainty[name]
        return frame


def observable_values(events, observable):
    if observable not in OBSERVABLES:
        raise ValueError(f"Unknown observable {observable!r}; choose from {sorted(OBSERVABLES)}")
    extract, _ = OBSERVABLES[observable]
    return np.array([v for event in events for v in extract(event)], dtype=np.float64)


def compare_histograms(datasets, bins, observable=''):
    """
    Unit-normalized histograms of each named value array on shared bins.

    Fractions are normalized over the in-range entries; the band of a bin is
    sqrt(n) scaled by the same normalization.
    """
    edges = np.asarray(bins, dtype=np.float64)
    counts, density, uncertainty = {}, {}, {}
    for name, values in datasets.items():
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise ValueError(f"Dataset {name!r} is empty")
        n, _ = np.histogram(values, bins=edges)
        total = n.sum()
        if total < values.size:
            logger.info(f"{name}: {values.size - total} of {values.size} entries outside the histogram range")
        counts[name] = n
        density[name] = n / total if total else np.zeros(len(n))
        uncertainty[name] = np.sqrt(n) / total if total else np.zeros(len(n))
    return HistogramComparison(observable=observable, edges=edges, counts=counts, density=density,
                               uncertainty=uncertainty)


def compare_observable(named_events, observable, bins=None):
    """Histogram one observable over several event collections, e.g. {'A': events_a, 'C': events_c}"""
    edges = OBSERVABLES[observable][1] if bins is None else bins
    datasets = {name: observable_values(events, observable) for name, events in named_events.items()}
    return compare_histograms(datasets, edges, observable)
