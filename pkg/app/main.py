"""
Command-line surface: generate, prepare, train, transfer, sweep and report
"""

import argparse
import logging
import os
import sys

from app.collider.domains import load_domain_configs
from app.collider.events import read_events, write_events
from app.collider.generator import generate_dataset
from app.evalkit.histograms import OBSERVABLES, compare_observable
from app.evalkit.report import frame_to_csv, report_from_directory
from app.features.datasets import load_samples, prepare_samples, write_samples
from app.storage import write_json, write_text
from app.training.config import CLI_STRATEGIES, TrainConfig
from app.training.loop import fine_tune, init_model, train
from app.training.splits import split_dataset
from app.training.sweep import DEFAULT_STRATEGIES, learning_curve_sweep, mixed_sweep
from config.settings import settings

logger = logging.getLogger(__name__)


def configure_logging(level=None):
    logging.basicConfig(level=getattr(logging, level or settings.LOG_LEVEL, logging.INFO),
                        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')


def _sizes(text):
    return [int(s) for s in text.split(',') if s.strip()]


def _train_config(args, **overrides):
    if args.config:
        return TrainConfig.from_file(args.config, task=args.task, **overrides)
    return TrainConfig.from_dict({'task': args.task}, **overrides)


def cmd_gen(args):
    domains, generator = load_domain_configs(args.domain_config)
    if args.domain not in domains:
        raise ValueError(f"Unknown domain {args.domain!r}; configured: {sorted(domains)}")
    events = generate_dataset(args.process, domains[args.domain], generator, args.n, args.seed, jobs=args.jobs)
    write_events(args.out, events)
    logger.info(f"Wrote {len(events)} events to {args.out}")


def cmd_prepare(args):
    events = [event for path in args.input for event in read_events(path)]
    samples, meta = prepare_samples(args.task, events, k=args.k, n_max=args.nmax, n_bins=args.bins, seed=args.seed)
    write_samples(args.out, args.task, samples, meta)
    logger.info(f"Prepared {len(samples)} {args.task} samples from {len(events)} events")


def cmd_train(args):
    config = _train_config(args, seed=args.seed)
    data, _ = load_samples(args.data)
    split = split_dataset(len(data), seed=config.seed)
    result, _ = train(init_model(config), data, split, config, bundle_dir=args.out)
    write_json(os.path.join(args.out, 'run.json'), result.to_record())
    print(f"test metric {result.test_metric:.6f} (best epoch {result.best_epoch})")


def cmd_transfer(args):
    config = _train_config(args, seed=args.seed, strategy=CLI_STRATEGIES[args.strategy], bundle=args.bundle)
    data, _ = load_samples(args.data)
    split = split_dataset(len(data), seed=config.seed)
    result, _ = fine_tune(data, split, config, bundle_dir=args.out)
    if args.out:
        write_json(os.path.join(args.out, 'run.json'), result.to_record())
    print(f"{config.strategy}: zero-shot val metric {result.initial_val_metric:.6f}, "
          f"test metric {result.test_metric:.6f}")


def cmd_sweep(args):
    config = _train_config(args)
    source, _ = load_samples(args.source)
    target, _ = load_samples(args.target)
    strategies = args.strategies.split(',') if args.strategies else list(DEFAULT_STRATEGIES)
    learning_curve_sweep(args.task, source, target, sizes=_sizes(args.sizes), n_seeds=args.seeds,
                         strategies=strategies, out_dir=args.out, global_seed=args.seed, jobs=args.jobs,
                         base_config=config)
    report_from_directory(args.out, args.out)


def cmd_mix_sweep(args):
    config = _train_config(args)
    data_a, _ = load_samples(args.a)
    data_b, _ = load_samples(args.b)
    mixed_sweep(args.task, data_a, data_b, sizes=_sizes(args.sizes), n_seeds=args.seeds, fraction_a=args.fraction,
                out_dir=args.out, global_seed=args.seed, jobs=args.jobs, base_config=config)
    report_from_directory(args.out, args.out)


def cmd_report(args):
    report_from_directory(args.input, args.out)


def cmd_compare(args):
    named = {}
    for path in args.events:
        events = read_events(path)
        label = events[0].domain if events else os.path.basename(path)
        if label in named:
            label = os.path.basename(path)
        named[label] = events
    comparison = compare_observable(named, args.observable)
    os.makedirs(args.out, exist_ok=True)
    write_text(os.path.join(args.out, f"histograms_{args.observable}.csv"), frame_to_csv(comparison.to_frame()))
    logger.info(f"Compared {args.observable} over {sorted(named)}")


def build_parser():
    parser = argparse.ArgumentParser(prog='domainshift', description='Desk-scale transfer-learning lab')
    parser.add_argument('--log-level', default=None, help='overrides DOMAINSHIFT_LOG_LEVEL')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen', help='generate toy events')
    p.add_argument('--process', required=True, choices=['TTBAR', 'WW', 'WJETS', 'ZJETS'])
    p.add_argument('--domain', required=True)
    p.add_argument('--n', type=int, required=True)
    p.add_argument('--seed', type=int, default=settings.SEED)
    p.add_argument('--out', required=True)
    p.add_argument('--domain-config', default=None)
    p.add_argument('--jobs', type=int, default=settings.JOBS)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser('prepare', help='turn events into task samples')
    p.add_argument('--task', required=True, choices=['sb', 'qg', 'met'])
    p.add_argument('--in', dest='input', nargs='+', required=True, help='one or more event files')
    p.add_argument('--out', required=True)
    p.add_argument('--k', type=int, default=settings.KNN_K)
    p.add_argument('--nmax', type=int, default=settings.MET_MAX_TRACKS)
    p.add_argument('--bins', type=int, default=settings.REWEIGHT_BINS)
    p.add_argument('--seed', type=int, default=settings.SEED)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser('train', help='train from scratch and save a bundle')
    p.add_argument('--task', required=True, choices=['sb', 'qg', 'met'])
    p.add_argument('--data', required=True)
    p.add_argument('--config', default=None)
    p.add_argument('--out', required=True)
    p.add_argument('--seed', type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('transfer', help='fine-tune a pretrained bundle')
    p.add_argument('--task', required=True, choices=['sb', 'qg', 'met'])
    p.add_argument('--bundle', required=True)
    p.add_argument('--data', required=True)
    p.add_argument('--strategy', required=True, choices=sorted(CLI_STRATEGIES))
    p.add_argument('--config', default=None)
    p.add_argument('--out', default=None)
    p.add_argument('--seed', type=int, default=None)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser('sweep', help='learning-curve sweep over sizes, seeds and strategies')
    p.add_argument('--task', required=True, choices=['sb', 'qg', 'met'])
    p.add_argument('--source', required=True)
    p.add_argument('--target', required=True)
    p.add_argument('--sizes', default=','.join(str(s) for s in settings.SIZE_GRID))
    p.add_argument('--seeds', type=int, default=settings.SEEDS_PER_POINT)
    p.add_argument('--strategies', default=None)
    p.add_argument('--config', default=None)
    p.add_argument('--out', required=True)
    p.add_argument('--seed', type=int, default=settings.SEED)
    p.add_argument('--jobs', type=int, default=settings.JOBS)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('mix-sweep', help='pure versus mixed-domain training')
    p.add_argument('--task', required=True, choices=['sb', 'qg', 'met'])
    p.add_argument('--a', required=True)
    p.add_argument('--b', required=True)
    p.add_argument('--fraction', type=float, default=0.5)
    p.add_argument('--sizes', default=','.join(str(s) for s in settings.SIZE_GRID))
    p.add_argument('--seeds', type=int, default=settings.SEEDS_PER_POINT)
    p.add_argument('--config', default=None)
    p.add_argument('--out', required=True)
    p.add_argument('--seed', type=int, default=settings.SEED)
    p.add_argument('--jobs', type=int, default=settings.JOBS)
    p.set_defaults(func=cmd_mix_sweep)

    p = sub.add_parser('report', help='rebuild CSV/JSON reports from a sweep directory')
    p.add_argument('--in', dest='input', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser('compare', help='per-domain histograms of an input observable')
    p.add_argument('--observable', required=True, choices=sorted(OBSERVABLES))
    p.add_argument('--events', nargs='+', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level.upper() if args.log_level else None)
    try:
        args.func(args)
    except Exception as e:
        logger.exception(f"{args.command} failed: {e}")
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
