"""
Classification and regression metrics: ROC/AUC and MET resolution profiles
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import rankdata
from sklearn.metrics import roc_curve

from config.settings import settings

logger = logging.getLogger(__name__)


class MetricError(ValueError):
    """Inputs a metric cannot be computed on"""


@dataclass
class RocCurve:
    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float

    def to_frame(self):
        return pd.DataFrame({'threshold': self.thresholds, 'tpr': self.tpr, 'fpr': self.fpr})


def auc_score(scores, labels):
    """Mann-Whitney statistic: fraction of (signal, background) pairs ranked correctly, ties count 1/2"""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise MetricError(f"{scores.size} scores for {labels.size} labels")
    if not np.all((labels == 0) | (labels == 1)):
        raise MetricError("Labels must be 0 or 1")
    n_sig = int(np.sum(labels == 1))
    n_bkg = labels.size - n_sig
    if n_sig == 0 or n_bkg == 0:
        raise MetricError(f"AUC needs both classes, got {n_sig} signal and {n_bkg} background")
    ranks = rankdata(scores, method='average')
    # twice the pair count stays integral with half-ranks, so the division is the only rounding
    twice_pairs = 2.0 * ranks[labels == 1].sum() - n_sig * (n_sig + 1.0)
    return float(twice_pairs / (2.0 * n_sig * n_bkg))


def roc_auc(scores, labels):
    auc = auc_score(scores, labels)
    fpr, tpr, thresholds = roc_curve(np.asarray(labels).reshape(-1), np.asarray(scores, dtype=np.float64).reshape(-1),
                                     drop_intermediate=False)
    return RocCurve(thresholds=thresholds, tpr=tpr, fpr=fpr, auc=auc)


@dataclass
class ResolutionProfile:
    edges: np.ndarray
    counts: np.ndarray
    bias: np.ndarray
    width: np.ndarray
    empty: np.ndarray
    n_outside: int = 0
    residual_edges: np.ndarray = None
    residual_hists: np.ndarray = None
    shape_edges: np.ndarray = None
    pred_shape: np.ndarray = None
    true_shape: np.ndarray = None
    highlight: tuple = field(default=None)

    def bin_of(self, low, high):
        for i in range(len(self.edges) - 1):
            if np.isclose(self.edges[i], low) and np.isclose(self.edges[i + 1], high):
                return i
        raise MetricError(f"[{low}, {high}) is not a bin of the profile")

    def highlighted(self):
        low, high = self.highlight or settings.MET_HIGHLIGHT_BIN
        i = self.bin_of(low, high)
        return {'low': low, 'high': high, 'count': int(self.counts[i]),
                'bias': None if self.empty[i] else float(self.bias[i]),
                'width': None if self.empty[i] else float(self.width[i])}

    def to_frame(self):
        return pd.DataFrame({
            'low': self.edges[:-1], 'high': self.edges[1:], 'count': self.counts,
            'bias': np.where(self.empty, np.nan, self.bias), 'width': np.where(self.empty, np.nan, self.width),
        })

    def shapes_frame(self):
        return pd.DataFrame({'low': self.shape_edges[:-1], 'high': self.shape_edges[1:],
                             'predicted': self.pred_shape, 'true': self.true_shape})


def _unit_histogram(values, edges):
    counts, _ = np.histogram(values, bins=edges)
    total = counts.sum()
    return counts / total if total else counts.astype(np.float64)


def resolution_profile(preds, trues, edges=None, residual_bins=40, shape_bins=50):
    """
    Bias (mean of pred - true) and width (sample std) per bin of true MET.

    Bins with fewer than two events are flagged empty. Events outside the edges
    are counted in ``n_outside``.
    """
    preds = np.asarray(preds, dtype=np.float64).reshape(-1)
    trues = np.asarray(trues, dtype=np.float64).reshape(-1)
    if preds.shape != trues.shape:
        raise MetricError(f"{preds.size} predictions for {trues.size} true values")
    edges = np.asarray(settings.MET_PROFILE_EDGES if edges is None else edges, dtype=np.float64)
    residual = preds - trues
    which = np.searchsorted(edges, trues, side='right') - 1
    inside = (which >= 0) & (which < len(edges) - 1)
    n_bins = len(edges) - 1

    counts = np.bincount(which[inside], minlength=n_bins)
    bias = np.zeros(n_bins)
    width = np.zeros(n_bins)
    for b in range(n_bins):
        r = residual[inside & (which == b)]
        if r.size >= 2:
            bias[b] = r.mean()
            width[b] = r.std(ddof=1)
    empty = counts < 2

    span = float(np.max(np.abs(residual), initial=0.0)) or 1.0
    residual_edges = np.linspace(-span, span, residual_bins + 1)
    residual_hists = np.stack([np.histogram(residual[inside & (which == b)], bins=residual_edges)[0]
                               for b in range(n_bins)])
    top = max(float(np.max(preds, initial=0.0)), float(np.max(trues, initial=0.0)), 1.0)
    shape_edges = np.linspace(0.0, top * (1.0 + 1e-9), shape_bins + 1)
    if not inside.all():
        logger.info(f"{int((~inside).sum())} events outside the profile range [{edges[0]}, {edges[-1]})")
    return ResolutionProfile(
        edges=edges, counts=counts, bias=bias, width=width, empty=empty, n_outside=int((~inside).sum()),
        residual_edges=residual_edges, residual_hists=residual_hists, shape_edges=shape_edges,
        pred_shape=_unit_histogram(preds, shape_edges), true_shape=_unit_histogram(trues, shape_edges),
    )
