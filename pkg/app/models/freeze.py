import logging
from dataclasses import dataclass, field

from config.settings import settings

logger = logging.getLogger(__name__)


class FreezeSpecError(ValueError):
    """A freeze prefix that matches no parameter"""


def _matches(name, prefix):
    # whole dotted components only: 'met.embed' does not match 'met.embed_norm.gamma'
    return name == prefix or name.startswith(prefix + '.')


@dataclass
class FreezeSpec:
    prefixes: list = field(default_factory=list)

    @classmethod
    def for_task(cls, task):
        return cls(list(settings.FREEZE_SPECS[task]))

    def to_dict(self):
        return {'prefixes': list(self.prefixes)}


def apply_freeze(model, spec):
    """Mark parameters under any prefix as frozen; returns (trainable, frozen) parameter lists"""
    params = model.parameters() if hasattr(model, 'parameters') else list(model)
    for prefix in spec.prefixes:
        if not any(_matches(p.name, prefix) for p in params):
            raise FreezeSpecError(f"Freeze prefix {prefix!r} matches no parameter")
    trainable, frozen = [], []
    for p in params:
        if any(_matches(p.name, prefix) for prefix in spec.prefixes):
            p.trainable = False
            frozen.append(p)
        else:
            p.trainable = True
            trainable.append(p)
    if frozen:
        logger.info(f"Froze {len(frozen)} parameter arrays "
                    f"({sum(p.data.size for p in frozen)} values) under {spec.prefixes}")
    return trainable, frozen
