"""
Optimization loop with best-validation checkpointing, and the transfer entry point
"""

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from app.autodiff.tensor import NonFiniteError, Tape, backward
from app.collider.generator import derive_seed, event_rng
from app.evalkit.curves import HIGHER_IS_BETTER
from app.evalkit.metrics import auc_score
from app.features.datasets import Standardizer
from app.models.bundle import BundleMismatch, load_bundle, save_bundle
from app.models.freeze import FreezeSpec, apply_freeze
from app.models.losses import bce_loss, bce_with_logits, met_loss
from app.models.networks import build_model
from app.training.optim import Adam
from config.settings import settings

logger = logging.getLogger(__name__)

EVAL_BATCH = 512


class TrainingDiverged(RuntimeError):
    """The loss or an intermediate value became non-finite"""

    def __init__(self, message, lr, epoch, batch):
        super().__init__(f"{message} (lr {lr}, epoch {epoch}, batch {batch})")
        self.lr = lr
        self.epoch = epoch
        self.batch = batch


class FreezeViolation(RuntimeError):
    """A frozen parameter changed during training"""


@dataclass
class RunResult:
    task: str
    strategy: str
    train_size: int
    seed: int
    seed_index: int = None
    val_metric: float = None
    initial_val_metric: float = None
    test_metric: float = None
    best_epoch: int = 0
    epochs_run: int = 0
    config_hash: str = ''
    code_version: str = settings.CODE_VERSION
    status: str = 'ok'
    error: str = None
    config: dict = None
    provenance: dict = None
    wall_time: float = field(default=0.0, compare=False)
    predictions: dict = field(default=None, repr=False, compare=False)

    def to_record(self):
        """JSON Lines form; wall time and predictions are kept out so records are reproducible"""
        record = asdict(self)
        record.pop('wall_time')
        record.pop('predictions')
        return record


def init_model(config):
    """Fresh model whose initialization is keyed by the run seed"""
    return build_model(config.task, event_rng(derive_seed(config.seed, 0)), config.architecture or None)


def forward(model, task, batch):
    if task == 'sb':
        return model(batch.features)
    if task == 'qg':
        return model(batch.features, batch.mask, batch.graphs)
    return model(batch.features, batch.mask)


def batch_loss(task, outputs, targets, config):
    if task == 'sb':
        return bce_loss(outputs, targets)
    if task == 'qg':
        return bce_with_logits(outputs, targets)
    return met_loss(outputs, targets, config.lambda_bias)


def predict(model, task, samples, batch_size=EVAL_BATCH):
    """Eval-mode outputs over a whole sample set: probabilities (SB), logits (QG) or MET in GeV"""
    model.eval()
    chunks = []
    for start in range(0, len(samples), batch_size):
        batch = samples.subset(np.arange(start, min(start + batch_size, len(samples))))
        chunks.append(np.array(forward(model, task, batch).data, dtype=np.float64).reshape(-1))
    return np.concatenate(chunks) if chunks else np.zeros(0)


def evaluate(model, task, samples, lambda_bias=None):
    """(metric, outputs): AUC for the classifiers, met_loss for MET"""
    outputs = predict(model, task, samples)
    if task == 'met':
        return met_loss(outputs, samples.targets, lambda_bias).item(), outputs
    return auc_score(outputs, samples.targets), outputs


def is_better(task, candidate, best):
    return candidate > best if HIGHER_IS_BETTER[task] else candidate < best


def _batches(order, batch_size):
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    # batch statistics and the MET bias term need two samples
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


def fit(model, train_set, val_set, test_set, config, standardizer=None, seed_index=None, bundle_dir=None,
        source_domain=''):
    """
    Train ``model`` and report the test metric at the best validation checkpoint.

    The untrained model is the epoch-0 checkpoint, so training never selects a
    state worse than the initial one. Returns (RunResult, Standardizer).
    """
    started = time.perf_counter()
    task = config.task
    if len(train_set) < 2:
        raise ValueError(f"Training needs at least 2 samples, got {len(train_set)}")
    if standardizer is None:
        standardizer = Standardizer().fit(train_set)
    train_set = standardizer.transform(train_set)
    val_set = standardizer.transform(val_set)
    test_set = standardizer.transform(test_set)

    shuffle_rng = event_rng(derive_seed(config.seed, 1))
    model.set_rng(event_rng(derive_seed(config.seed, 2)))
    trainable = [p for p in model.parameters() if p.trainable]
    optimizer = Adam(trainable, **config.optimizer)

    initial, _ = evaluate(model, task, val_set, config.lambda_bias)
    best, best_epoch, best_state = initial, 0, model.state_dict()
    logger.info(f"{task}/{config.strategy}: {len(train_set)} training samples, initial val metric {initial:.6f}")

    stale = 0
    epochs_run = 0
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        total = 0.0
        for b, indices in enumerate(_batches(shuffle_rng.permutation(len(train_set)), config.batch_size)):
            batch = train_set.subset(indices)
            try:
                with Tape() as tape:
                    loss = batch_loss(task, forward(model, task, batch), batch.targets, config)
                backward(loss, tape, trainable)
            except NonFiniteError as e:
                logger.error(f"{task}/{config.strategy}: non-finite values at epoch {epoch}, batch {b}: {e}")
                raise TrainingDiverged(str(e), config.lr, epoch, b) from e
            optimizer.step()
            optimizer.zero_grad()
            total += loss.item() * len(indices)
            logger.debug(f"epoch {epoch} batch {b}: loss {loss.item():.6f}")
        epochs_run = epoch

        val_metric, _ = evaluate(model, task, val_set, config.lambda_bias)
        logger.info(f"{task}/{config.strategy} epoch {epoch}: train loss {total / len(train_set):.6f}, "
                    f"val metric {val_metric:.6f}")
        if is_better(task, val_metric, best):
            best, best_epoch, best_state = val_metric, epoch, model.state_dict()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info(f"Early stop after epoch {epoch}; best epoch {best_epoch}")
                break

    model.load_state_dict(best_state)
    model.eval()
    test_metric, test_outputs = evaluate(model, task, test_set, config.lambda_bias)

    result = RunResult(
        task=task, strategy=config.strategy, train_size=len(train_set), seed=config.seed, seed_index=seed_index,
        val_metric=best, initial_val_metric=initial, test_metric=test_metric, best_epoch=best_epoch,
        epochs_run=epochs_run, config_hash=config.hash(), config=config.to_dict(),
        wall_time=time.perf_counter() - started,
        predictions={'scores': test_outputs, 'targets': np.asarray(test_set.targets),
                     'domains': np.asarray(test_set.domains, dtype=str)},
    )
    if bundle_dir:
        save_bundle(bundle_dir, model, standardizer, source_domain=source_domain, config_hash=result.config_hash)
    logger.info(f"{task}/{config.strategy}: test metric {test_metric:.6f} at epoch {best_epoch} "
                f"({result.wall_time:.1f}s)")
    return result, standardizer


def train(model, data, split, config, train_indices=None, bundle_dir=None, seed_index=None):
    """Train on ``split.train`` (or a subset of it); val and test always come from the split"""
    indices = split.train if train_indices is None else train_indices
    domains = sorted(set(data.domains[indices]))
    return fit(model, data.subset(indices), data.subset(split.val), data.subset(split.test), config,
               seed_index=seed_index, bundle_dir=bundle_dir, source_domain=','.join(domains))


def load_pretrained(config):
    """Bundle model and its source standardization, frozen according to the strategy"""
    model, metadata = load_bundle(config.bundle, task=config.task)
    for key, value in (config.architecture or {}).items():
        if metadata['architecture'].get(key) != value:
            raise BundleMismatch(f"Bundle {config.bundle} has {key}={metadata['architecture'].get(key)}, "
                                 f"config asks for {value}")
    if metadata.get('standardizer') is None:
        raise BundleMismatch(f"Bundle {config.bundle} carries no standardization constants")
    standardizer = Standardizer.from_dict(metadata['standardizer'])
    if config.strategy == 'pretrain_frozen':
        spec = FreezeSpec(list(config.freeze)) if config.freeze is not None else FreezeSpec.for_task(config.task)
        apply_freeze(model, spec)
    return model, standardizer, metadata


def fine_tune_sets(train_set, val_set, test_set, config, seed_index=None, bundle_dir=None):
    """Adapt a pretrained bundle; frozen parameters are verified unchanged afterwards"""
    model, standardizer, metadata = load_pretrained(config)
    frozen = {p.name: p.data.copy() for p in model.parameters() if not p.trainable}
    result, _ = fit(model, train_set, val_set, test_set, config, standardizer=standardizer,
                    seed_index=seed_index, bundle_dir=bundle_dir, source_domain=metadata.get('source_domain', ''))
    for p in model.parameters():
        if p.name in frozen and not np.array_equal(frozen[p.name], p.data):
            raise FreezeViolation(f"Frozen parameter {p.name} changed during fine-tuning")
    return result, model


def fine_tune(data, split, config, train_indices=None, bundle_dir=None, seed_index=None):
    indices = split.train if train_indices is None else train_indices
    return fine_tune_sets(data.subset(indices), data.subset(split.val), data.subset(split.test), config,
                          seed_index=seed_index, bundle_dir=bundle_dir)
