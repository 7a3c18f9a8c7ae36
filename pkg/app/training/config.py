"""
Training run configuration
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace

from app.storage import config_hash
from config.settings import settings

STRATEGIES = ('scratch', 'pretrain_full', 'pretrain_frozen')
CLI_STRATEGIES = {'full': 'pretrain_full', 'frozen': 'pretrain_frozen'}


class TrainConfigError(ValueError):
    """Invalid or unknown training configuration fields"""


@dataclass
class TrainConfig:
    task: str
    lr: float = None
    beta1: float = settings.ADAM['beta1']
    beta2: float = settings.ADAM['beta2']
    eps: float = settings.ADAM['eps']
    batch_size: int = settings.BATCH_SIZE
    max_epochs: int = settings.MAX_EPOCHS
    patience: int = settings.PATIENCE
    seed: int = settings.SEED
    strategy: str = 'scratch'
    bundle: str = None
    freeze: list = None
    lambda_bias: float = settings.MET_LAMBDA_BIAS
    architecture: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in settings.TRAIN_DEFAULTS:
            raise TrainConfigError(f"Unknown task {self.task!r}")
        if self.lr is None:
            self.lr = settings.TRAIN_DEFAULTS[self.task]['lr']
        self.validate()

    def validate(self):
        if self.lr <= 0:
            raise TrainConfigError(f"lr must be positive, got {self.lr}")
        if self.patience < 1:
            raise TrainConfigError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 2:
            raise TrainConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.max_epochs < 0:
            raise TrainConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.strategy not in STRATEGIES:
            raise TrainConfigError(f"Unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.strategy != 'scratch' and not self.bundle:
            raise TrainConfigError(f"Strategy {self.strategy} needs a pretrained bundle path")

    @property
    def optimizer(self):
        return {'lr': self.lr, 'beta1': self.beta1, 'beta2': self.beta2, 'eps': self.eps}

    @classmethod
    def from_dict(cls, record, **overrides):
        record = dict(record)
        optimizer = record.pop('optimizer', None)
        if optimizer is not None:
            optimizer = dict(optimizer)
            optimizer.pop('name', None)
            record.update(optimizer)
        record.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(record) - known)
        if unknown:
            raise TrainConfigError(f"Unknown training config fields: {unknown}")
        return cls(**record)

    @classmethod
    def from_file(cls, path, **overrides):
        with open(path, 'r', encoding='utf-8') as fh:
            return cls.from_dict(json.load(fh), **overrides)

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)

    def hash(self):
        record = self.to_dict()
        # the bundle location does not change what is trained
        record.pop('bundle')
        return config_hash(record)
