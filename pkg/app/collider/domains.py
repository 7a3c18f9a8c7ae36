"""
Detector/physics-modeling settings of the simulation domains
"""

import logging
import math
from dataclasses import asdict, dataclass, field

from config.settings import settings

logger = logging.getLogger(__name__)


class DomainConfigError(ValueError):
    """Invalid domain or generator configuration"""


@dataclass
class DomainConfig:
    name: str
    pt_resolution: dict = field(default_factory=lambda: {'a': 0.05, 'b': 0.5})
    track_efficiency: dict = field(default_factory=lambda: {'plateau': 0.95, 'turn_on': 0.0})
    pileup_mu: float = 0.0
    spectrum_hardness: float = 1.0
    extra_jet_rate: float = 0.0
    eta_smear: float = 0.0
    phi_smear: float = 0.0
    d0_mask_prob: float = 0.0
    drop_z0: bool = False
    lepton_flavors: list = field(default_factory=lambda: ['electron', 'muon'])

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.name not in ('A', 'B', 'C'):
            raise DomainConfigError(f"Domain name must be A, B or C, got {self.name!r}")
        if self.pileup_mu < 0:
            raise DomainConfigError(f"pileup_mu must be >= 0, got {self.pileup_mu}")
        if self.spectrum_hardness <= 0:
            raise DomainConfigError(f"spectrum_hardness must be > 0, got {self.spectrum_hardness}")
        plateau = self.track_efficiency.get('plateau', 1.0)
        if not 0.0 <= plateau <= 1.0:
            raise DomainConfigError(f"track efficiency plateau must be in [0, 1], got {plateau}")
        if self.track_efficiency.get('turn_on', 0.0) < 0:
            raise DomainConfigError("track efficiency turn_on must be >= 0")
        if not 0.0 <= self.d0_mask_prob <= 1.0:
            raise DomainConfigError(f"d0_mask_prob must be in [0, 1], got {self.d0_mask_prob}")
        if self.extra_jet_rate < 0:
            raise DomainConfigError(f"extra_jet_rate must be >= 0, got {self.extra_jet_rate}")
        if not self.lepton_flavors or any(f not in ('electron', 'muon') for f in self.lepton_flavors):
            raise DomainConfigError(f"lepton_flavors must be a non-empty subset of electron/muon, got {self.lepton_flavors}")

    def efficiency(self, pt):
        plateau = self.track_efficiency.get('plateau', 1.0)
        turn_on = self.track_efficiency.get('turn_on', 0.0)
        if turn_on <= 0:
            return plateau
        return plateau * (1.0 - math.exp(-pt / turn_on))

    def sigma_rel(self, pt):
        """Relative pt resolution a ⊕ b/√pt"""
        a = self.pt_resolution.get('a', 0.0)
        b = self.pt_resolution.get('b', 0.0)
        return math.sqrt(a * a + b * b / max(pt, 1e-6))

    def to_dict(self):
        return asdict(self)


@dataclass
class GeneratorConfig:
    processes: dict
    eta_width: float = 1.2
    eta_max: float = 2.5
    gluon_fraction: float = 0.5
    boson_masses: dict = field(default_factory=lambda: {'W': 80.4, 'Z': 91.2})
    zjets_met_sigma: float = 2.0
    fragmentation: dict = field(default_factory=dict)
    pileup: dict = field(default_factory=lambda: {'mean_pt': 1.0, 'z0_sigma': 50.0})

    def process(self, name):
        if name not in self.processes:
            raise DomainConfigError(f"Unknown process {name!r}; expected one of {sorted(self.processes)}")
        return self.processes[name]


def load_domain_configs(path=None, overrides=None):
    """Return ({name: DomainConfig}, GeneratorConfig) from the shipped JSON plus optional overrides"""
    raw = settings.load_domain_file(path)
    domains_raw = dict(raw.get('domains', {}))
    for name, values in (overrides or {}).get('domains', {}).items():
        merged = dict(domains_raw.get(name, {}))
        merged.update(values)
        domains_raw[name] = merged
    try:
        domains = {name: DomainConfig(name=name, **values) for name, values in domains_raw.items()}
        generator_raw = dict(raw['generator'])
        generator_raw.update((overrides or {}).get('generator', {}))
        generator = GeneratorConfig(**generator_raw)
    except TypeError as e:
        raise DomainConfigError(f"Unknown or missing configuration field: {e}") from e
    logger.debug(f"Loaded domain configs: {sorted(domains)}")
    return domains, generator
