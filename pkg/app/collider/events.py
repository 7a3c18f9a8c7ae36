"""
Event record types and their JSON Lines form
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from app.collider.kinematics import wrap_phi
from app.storage import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

PROCESSES = ('TTBAR', 'WW', 'WJETS', 'ZJETS')
DOMAINS = ('A', 'B', 'C')
TRACK_ORIGINS = ('hard', 'pileup', 'lepton')
FLAVORS = ('quark', 'gluon')
LEPTON_FLAVORS = ('electron', 'muon')


class EventFormatError(ValueError):
    """An event record violates the event layout"""


@dataclass
class Track:
    px: float
    py: float
    pz: float
    charge: int
    d0: float
    z0: float
    origin: str = 'hard'

    @property
    def pt(self):
        return math.hypot(self.px, self.py)

    @property
    def eta(self):
        return math.asinh(self.pz / self.pt)

    @property
    def phi(self):
        return wrap_phi(math.atan2(self.py, self.px))

    def to_dict(self):
        return {'px': self.px, 'py': self.py, 'pz': self.pz, 'charge': self.charge,
                'd0': self.d0, 'z0': self.z0, 'origin': self.origin}


@dataclass
class TruthParton:
    pt: float
    eta: float
    phi: float
    flavor: str

    def to_dict(self):
        return {'pt': self.pt, 'eta': self.eta, 'phi': self.phi, 'flavor': self.flavor}


@dataclass
class Lepton:
    pt: float
    eta: float
    phi: float
    flavor: str

    def to_dict(self):
        return {'pt': self.pt, 'eta': self.eta, 'phi': self.phi, 'flavor': self.flavor}


@dataclass
class Jet:
    pt: float
    eta: float
    phi: float
    mass: float
    constituent_indices: list
    flavor: str = 'unlabeled'


@dataclass
class Event:
    process: str
    domain: str
    tracks: list = field(default_factory=list)
    leptons: list = field(default_factory=list)
    partons: list = field(default_factory=list)
    met_true: tuple = (0.0, 0.0)
    seed: int = 0

    @property
    def met_magnitude(self):
        return math.hypot(self.met_true[0], self.met_true[1])

    def validate(self):
        if self.process not in PROCESSES:
            raise EventFormatError(f"Unknown process {self.process!r}")
        if self.domain not in DOMAINS:
            raise EventFormatError(f"Unknown domain {self.domain!r}")
        expected = 2 if self.process == 'ZJETS' else 1
        if len(self.leptons) != expected:
            raise EventFormatError(f"{self.process} event needs {expected} leptons, has {len(self.leptons)}")
        if not all(math.isfinite(v) for v in self.met_true):
            raise EventFormatError("met_true must be finite")
        for t in self.tracks:
            if t.origin not in TRACK_ORIGINS:
                raise EventFormatError(f"Unknown track origin {t.origin!r}")
        return self

    def track_array(self, columns=('px', 'py', 'pz', 'charge', 'd0', 'z0')):
        if not self.tracks:
            return np.zeros((0, len(columns)))
        return np.array([[getattr(t, c) for c in columns] for t in self.tracks], dtype=np.float64)

    def to_dict(self):
        return {
            'process': self.process,
            'domain': self.domain,
            'seed': int(self.seed),
            'met_true': [float(self.met_true[0]), float(self.met_true[1])],
            'leptons': [lep.to_dict() for lep in self.leptons],
            'partons': [p.to_dict() for p in self.partons],
            'tracks': [t.to_dict() for t in self.tracks],
        }

    @classmethod
    def from_dict(cls, record):
        try:
            event = cls(
                process=record['process'],
                domain=record['domain'],
                seed=int(record['seed']),
                met_true=(float(record['met_true'][0]), float(record['met_true'][1])),
                leptons=[Lepton(**lep) for lep in record['leptons']],
                partons=[TruthParton(**p) for p in record['partons']],
                tracks=[Track(**t) for t in record['tracks']],
            )
        except (KeyError, TypeError, IndexError) as e:
            raise EventFormatError(f"Malformed event record: {e}") from e
        return event.validate()


def write_events(path, events):
    """Write events as JSON Lines; a ``.jsonl.gz`` path is gzip-compressed"""
    write_jsonl(path, (event.to_dict() for event in events))


def read_events(path):
    return [Event.from_dict(record) for record in read_jsonl(path)]


def iter_events(path):
    for record in read_jsonl(path):
        yield Event.from_dict(record)
