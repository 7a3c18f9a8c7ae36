import logging
from collections import defaultdict
from dataclasses import asdict, dataclass

import numpy as np

logger = logging.getLogger(__name__)

STRATEGY_ORDER = ('scratch', 'pretrain_full', 'pretrain_frozen', 'pure', 'mixed')
HIGHER_IS_BETTER = {'sb': True, 'qg': True, 'met': False}


@dataclass
class CurvePoint:
    strategy: str
    train_size: int
    mean: float
    std: float
    n: int

    def to_dict(self):
        return asdict(self)


def strategy_key(strategy):
    return STRATEGY_ORDER.index(strategy) if strategy in STRATEGY_ORDER else len(STRATEGY_ORDER)


def aggregate_runs(records):
    """One CurvePoint per (strategy, size) over the successful runs; std needs at least two seeds"""
    grouped = defaultdict(list)
    for record in records:
        if record.get('status', 'ok') != 'ok' or record.get('test_metric') is None:
            continue
        grouped[(record['strategy'], int(record['train_size']))].append(float(record['test_metric']))
    points = []
    for (strategy, size), values in sorted(grouped.items(), key=lambda kv: (strategy_key(kv[0][0]), kv[0][1])):
        values = np.asarray(values)
        std = float(values.std(ddof=1)) if values.size >= 2 else None
        points.append(CurvePoint(strategy=strategy, train_size=size, mean=float(values.mean()), std=std,
                                 n=int(values.size)))
    return points


def _crossing(sizes, means, target):
    """Size at which the piecewise-linear curve first reaches ``target``, or None"""
    for i in range(len(sizes) - 1):
        lo, hi = means[i], means[i + 1]
        if min(lo, hi) <= target <= max(lo, hi):
            if hi == lo:
                return float(sizes[i])
            return float(sizes[i] + (target - lo) / (hi - lo) * (sizes[i + 1] - sizes[i]))
    if len(sizes) == 1 and means[0] == target:
        return float(sizes[0])
    return None


def data_savings(points, baseline='scratch'):
    """
    Scratch training size needed to match each transfer point's mean metric, over that point's size.

    The baseline curve is interpolated linearly between its sizes; a metric
    outside the baseline's range gives None with flag 'out_of_range'.
    """
    base = sorted((p for p in points if p.strategy == baseline), key=lambda p: p.train_size)
    sizes = [p.train_size for p in base]
    means = [p.mean for p in base]
    savings = {}
    for point in points:
        if point.strategy == baseline:
            continue
        matched = _crossing(sizes, means, point.mean) if base else None
        entry = {'factor': None if matched is None else matched / point.train_size,
                 'flag': 'out_of_range' if matched is None else 'ok'}
        savings.setdefault(point.strategy, {})[str(point.train_size)] = entry
    return savings
