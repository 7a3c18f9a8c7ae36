"""
Training, transfer strategies and experiment sweeps
"""

from app.training.config import TrainConfig, TrainConfigError
from app.training.loop import (
    FreezeViolation,
    RunResult,
    TrainingDiverged,
    evaluate,
    fine_tune,
    fit,
    init_model,
    predict,
    train,
)
from app.training.optim import Adam
from app.training.splits import DatasetSplit, SplitError, mix_domains, nested_subset, split_dataset
from app.training.sweep import learning_curve_sweep, mixed_sweep

__all__ = [
    'Adam', 'DatasetSplit', 'FreezeViolation', 'RunResult', 'SplitError', 'TrainConfig', 'TrainConfigError',
    'TrainingDiverged', 'evaluate', 'fine_tune', 'fit', 'init_model', 'learning_curve_sweep', 'mix_domains',
    'mixed_sweep', 'nested_subset', 'predict', 'split_dataset', 'train',
]
