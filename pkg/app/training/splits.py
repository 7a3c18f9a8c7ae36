"""
Train/val/test splits, nested training subsets and domain mixing
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from app.collider.generator import event_rng
from app.features.datasets import SampleSet
from config.settings import settings

logger = logging.getLogger(__name__)


class SplitError(ValueError):
    """A dataset too small for the requested split or subset"""


@dataclass
class DatasetSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int
    test_frozen: bool = True

    def sizes(self):
        return len(self.train), len(self.val), len(self.test)

    def to_dict(self):
        return {'train': self.train.tolist(), 'val': self.val.tolist(), 'test': self.test.tolist(),
                'seed': self.seed, 'test_frozen': self.test_frozen}


def split_dataset(n, fractions=None, seed=None):
    """
    Shuffle 0..n-1 by ``seed`` and cut test, then val, then train.

    The test block comes first in the shuffled order, so it depends only on n,
    the test fraction and the seed.
    """
    fractions = tuple(settings.SPLIT_FRACTIONS if fractions is None else fractions)
    seed = settings.SEED if seed is None else seed
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or not np.isclose(sum(fractions), 1.0):
        raise SplitError(f"Split fractions must be three positive numbers summing to 1, got {fractions}")
    n_test = int(round(n * fractions[2]))
    n_val = int(round(n * fractions[1]))
    n_train = n - n_test - n_val
    if min(n_train, n_val, n_test) < 1:
        raise SplitError(f"{n} samples are too few for non-empty splits with fractions {fractions}")
    order = event_rng(seed).permutation(n)
    return DatasetSplit(train=order[n_test + n_val:], val=order[n_test:n_test + n_val], test=order[:n_test],
                        seed=seed)


def nested_subset(indices, size, seed):
    """First ``size`` entries of a seed-fixed shuffle, so smaller subsets are contained in larger ones"""
    indices = np.asarray(indices)
    if size > len(indices):
        raise SplitError(f"Requested {size} training samples, only {len(indices)} available")
    return event_rng(seed).permutation(indices)[:size]


@dataclass
class MixedDataset:
    samples: SampleSet
    provenance: np.ndarray
    counts: dict = field(default_factory=dict)


def mix_domains(dataset_a, dataset_b, total, fraction_a, seed):
    """round(total * fraction_a) samples of A plus the rest from B, drawn without replacement and shuffled"""
    if not 0.0 <= fraction_a <= 1.0:
        raise SplitError(f"fraction_a must be in [0, 1], got {fraction_a}")
    n_a = int(round(total * fraction_a))
    n_b = total - n_a
    if n_a > len(dataset_a) or n_b > len(dataset_b):
        raise SplitError(f"Mixing needs {n_a} + {n_b} samples, have {len(dataset_a)} + {len(dataset_b)}")
    rng = event_rng(seed)
    pick_a = rng.permutation(len(dataset_a))[:n_a]
    pick_b = rng.permutation(len(dataset_b))[:n_b]
    parts = [dataset_a.subset(pick_a), dataset_b.subset(pick_b)]
    merged = SampleSet.concat(parts)
    provenance = np.array(['a'] * n_a + ['b'] * n_b, dtype=object)
    order = rng.permutation(total)
    logger.info(f"Mixed {n_a} + {n_b} samples (fraction {fraction_a})")
    return MixedDataset(samples=merged.subset(order), provenance=provenance[order], counts={'a': n_a, 'b': n_b})
