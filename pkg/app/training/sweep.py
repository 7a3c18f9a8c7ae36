"""
Multi-seed learning-curve sweeps and the domain-mixing study
"""

import logging
import os

import numpy as np
from joblib import Parallel, delayed

from app.collider.generator import derive_seed
from app.evalkit.curves import aggregate_runs, strategy_key
from app.storage import config_hash, write_json, write_jsonl
from app.training.config import TrainConfig
from app.training.loop import RunResult, fine_tune_sets, fit, init_model
from app.training.splits import SplitError, mix_domains, nested_subset, split_dataset
from config.settings import settings

logger = logging.getLogger(__name__)

STRATEGY_CODES = {'scratch': 0, 'pretrain_full': 1, 'pretrain_frozen': 2, 'pure': 3, 'mixed': 4}
DEFAULT_STRATEGIES = ('scratch', 'pretrain_full', 'pretrain_frozen')

# sub-stream tags under the global seed
SPLIT_STREAM = 101
SUBSET_STREAM = 102
PRETRAIN_STREAM = 103
MIX_STREAM = 104


def run_seed(global_seed, size, seed_index, strategy):
    return derive_seed(global_seed, size, seed_index, STRATEGY_CODES[strategy])


def _run_one(strategy, train_set, val_set, test_set, config, size, seed_index, provenance=None):
    try:
        if config.strategy == 'scratch':
            result, _ = fit(init_model(config), train_set, val_set, test_set, config, seed_index=seed_index)
        else:
            result, _ = fine_tune_sets(train_set, val_set, test_set, config, seed_index=seed_index)
    except Exception as e:
        logger.warning(f"Run {strategy}/{size}/{seed_index} failed: {type(e).__name__}: {e}")
        result = RunResult(task=config.task, strategy=strategy, train_size=size, seed=config.seed,
                           seed_index=seed_index, config_hash=config.hash(), config=config.to_dict(),
                           status='failed', error=f"{type(e).__name__}: {e}")
    result.strategy = strategy
    result.train_size = size
    result.provenance = provenance
    return result


def _sort_key(result):
    return strategy_key(result.strategy), result.train_size, result.seed_index


def sweep_record(result, out_dir):
    """Run record with the bundle path relative to the sweep directory"""
    record = result.to_record()
    config = record.get('config')
    if config and config.get('bundle'):
        config['bundle'] = os.path.relpath(config['bundle'], out_dir).replace(os.sep, '/')
    return record


def write_sweep_outputs(out_dir, results, manifest):
    """runs.jsonl, timings.jsonl, manifest.json and per-run test predictions under predictions/"""
    os.makedirs(os.path.join(out_dir, 'predictions'), exist_ok=True)
    write_jsonl(os.path.join(out_dir, 'runs.jsonl'), [sweep_record(r, out_dir) for r in results])
    write_jsonl(os.path.join(out_dir, 'timings.jsonl'), [
        {'strategy': r.strategy, 'train_size': r.train_size, 'seed_index': r.seed_index, 'wall_time': r.wall_time}
        for r in results
    ])
    for r in results:
        if r.predictions is not None:
            np.savez(os.path.join(out_dir, 'predictions', f"{r.strategy}_{r.train_size}_{r.seed_index}.npz"),
                     **r.predictions)
    write_json(os.path.join(out_dir, 'manifest.json'), manifest)
    logger.info(f"Wrote {len(results)} run results to {out_dir}")


def _check_sizes(sizes, available):
    too_big = [s for s in sizes if s > available]
    if too_big:
        raise SplitError(f"Training sizes {too_big} exceed the {available} available training samples")


def pretrain(source, config, out_dir, global_seed):
    """Scratch training on the full source sample; the bundle lands in ``out_dir/pretrained``"""
    split = split_dataset(len(source), seed=derive_seed(global_seed, SPLIT_STREAM, 1))
    pre_config = config.with_(strategy='scratch', bundle=None, seed=derive_seed(global_seed, PRETRAIN_STREAM))
    bundle_dir = os.path.join(out_dir, 'pretrained')
    domains = ','.join(sorted(set(source.domains)))
    result, _ = fit(init_model(pre_config), source.subset(split.train), source.subset(split.val),
                    source.subset(split.test), pre_config, bundle_dir=bundle_dir, source_domain=domains)
    logger.info(f"Pretrained on {len(split.train)} source samples; source test metric {result.test_metric:.6f}")
    return bundle_dir, result


def learning_curve_sweep(task, source, target, sizes=None, n_seeds=None, strategies=None, out_dir=None,
                         global_seed=None, jobs=None, base_config=None):
    """
    Every (size, seed index, strategy) on the target sample; returns (RunResults, CurvePoints).

    The target test and validation sets are fixed for the whole sweep. Training
    subsets are nested per seed index, and each run's seed derives from
    (global seed, size, seed index, strategy), so results do not depend on the
    execution order or the worker count.
    """
    sizes = list(settings.SIZE_GRID if sizes is None else sizes)
    n_seeds = settings.SEEDS_PER_POINT if n_seeds is None else n_seeds
    strategies = list(DEFAULT_STRATEGIES if strategies is None else strategies)
    global_seed = settings.SEED if global_seed is None else global_seed
    jobs = settings.JOBS if jobs is None else jobs
    base_config = base_config or TrainConfig(task=task)
    if out_dir is None:
        raise ValueError("learning_curve_sweep needs an output directory")
    unknown = [s for s in strategies if s not in DEFAULT_STRATEGIES]
    if unknown:
        raise ValueError(f"Unknown strategies {unknown}")

    split = split_dataset(len(target), seed=derive_seed(global_seed, SPLIT_STREAM))
    _check_sizes(sizes, len(split.train))
    val_set, test_set = target.subset(split.val), target.subset(split.test)

    bundle_dir, pretrain_result = None, None
    if any(s != 'scratch' for s in strategies):
        bundle_dir, pretrain_result = pretrain(source, base_config, out_dir, global_seed)

    def job(size, seed_index, strategy):
        indices = nested_subset(split.train, size, derive_seed(global_seed, SUBSET_STREAM, seed_index))
        config = base_config.with_(seed=run_seed(global_seed, size, seed_index, strategy), strategy=strategy,
                                   bundle=bundle_dir if strategy != 'scratch' else None)
        return delayed(_run_one)(strategy, target.subset(indices), val_set, test_set, config, size, seed_index)

    grid = [(size, i, strategy) for size in sizes for i in range(n_seeds) for strategy in strategies]
    logger.info(f"Sweep {task}: {len(grid)} runs ({len(sizes)} sizes x {n_seeds} seeds x {len(strategies)} "
                f"strategies) on {jobs} worker(s)")
    results = sorted(Parallel(n_jobs=jobs)(job(*point) for point in grid), key=_sort_key)
    failed = sum(r.status != 'ok' for r in results)
    if failed:
        logger.warning(f"{failed} of {len(results)} runs failed")

    manifest = {
        'kind': 'learning_curve', 'task': task, 'sizes': sizes, 'seeds': n_seeds, 'strategies': strategies,
        'global_seed': global_seed, 'base_config': base_config.to_dict(), 'config_hash': base_config.hash(),
        'code_version': settings.CODE_VERSION, 'split_sizes': list(split.sizes()),
        'test_hash': config_hash(split.test), 'failed_runs': failed,
        'pretrain': None if pretrain_result is None else pretrain_result.to_record(),
    }
    write_sweep_outputs(out_dir, results, manifest)
    return results, aggregate_runs([r.to_record() for r in results])


def mixed_sweep(task, dataset_a, dataset_b, sizes=None, n_seeds=None, fraction_a=0.5, out_dir=None,
                global_seed=None, jobs=None, base_config=None):
    """
    Pure-A versus mixed A+B training at equal total size, tested on a fixed pure-A test set.
    """
    sizes = list(settings.SIZE_GRID if sizes is None else sizes)
    n_seeds = settings.SEEDS_PER_POINT if n_seeds is None else n_seeds
    global_seed = settings.SEED if global_seed is None else global_seed
    jobs = settings.JOBS if jobs is None else jobs
    base_config = (base_config or TrainConfig(task=task)).with_(strategy='scratch', bundle=None)
    if out_dir is None:
        raise ValueError("mixed_sweep needs an output directory")

    split = split_dataset(len(dataset_a), seed=derive_seed(global_seed, SPLIT_STREAM))
    _check_sizes(sizes, len(split.train))
    train_a = dataset_a.subset(split.train)
    val_set, test_set = dataset_a.subset(split.val), dataset_a.subset(split.test)

    def job(size, seed_index, strategy):
        config = base_config.with_(seed=run_seed(global_seed, size, seed_index, strategy))
        if strategy == 'pure':
            indices = nested_subset(np.arange(len(train_a)), size, derive_seed(global_seed, SUBSET_STREAM, seed_index))
            return delayed(_run_one)(strategy, train_a.subset(indices), val_set, test_set, config, size, seed_index,
                                     {'a': size, 'b': 0})
        mixed = mix_domains(train_a, dataset_b, size, fraction_a, derive_seed(global_seed, MIX_STREAM, seed_index))
        return delayed(_run_one)(strategy, mixed.samples, val_set, test_set, config, size, seed_index, mixed.counts)

    grid = [(size, i, strategy) for size in sizes for i in range(n_seeds) for strategy in ('pure', 'mixed')]
    logger.info(f"Mixing sweep {task}: {len(grid)} runs, fraction_a {fraction_a}")
    results = sorted(Parallel(n_jobs=jobs)(job(*point) for point in grid), key=_sort_key)

    manifest = {
        'kind': 'mixing', 'task': task, 'sizes': sizes, 'seeds': n_seeds, 'fraction_a': fraction_a,
        'global_seed': global_seed, 'base_config': base_config.to_dict(), 'config_hash': base_config.hash(),
        'code_version': settings.CODE_VERSION, 'split_sizes': list(split.sizes()),
        'test_hash': config_hash(split.test), 'failed_runs': sum(r.status != 'ok' for r in results),
    }
    write_sweep_outputs(out_dir, results, manifest)
    return results, aggregate_runs([r.to_record() for r in results])
