import logging

import numpy as np

logger = logging.getLogger(__name__)


def bin_acceptance(quark_counts, gluon_counts):
    """Per-bin keep probabilities (quark, gluon): the majority class is thinned to the minority count"""
    q = np.asarray(quark_counts, dtype=np.float64)
    g = np.asarray(gluon_counts, dtype=np.float64)
    accept_q = np.where(q > g, np.divide(g, q, out=np.zeros_like(q), where=q > 0), 1.0)
    accept_g = np.where(g > q, np.divide(q, g, out=np.zeros_like(g), where=g > 0), 1.0)
    return accept_q, accept_g


def reweight_qg_pt(samples, bins, rng):
    """
    Thin quark and gluon jets so their pt spectra match bin by bin.

    Accept-reject keeps the retained jets unweighted; the minority class of a
    bin is never touched. Jets outside the bin range are dropped.
    """
    edges = np.asarray(bins, dtype=np.float64)
    labels = np.array([s.label for s in samples])
    if not np.any(labels == 1) or not np.any(labels == 0):
        raise ValueError("reweight_qg_pt needs both quark and gluon jets")
    pts = np.array([s.jet_pt for s in samples])
    which = np.searchsorted(edges, pts, side='right') - 1
    inside = (which >= 0) & (which < len(edges) - 1)
    if not inside.all():
        logger.warning(f"Dropping {int((~inside).sum())} jets outside the reweighting range [{edges[0]}, {edges[-1]})")

    n_bins = len(edges) - 1
    quark_counts = np.bincount(which[inside & (labels == 1)], minlength=n_bins)
    gluon_counts = np.bincount(which[inside & (labels == 0)], minlength=n_bins)
    for b in range(n_bins):
        if (quark_counts[b] == 0) != (gluon_counts[b] == 0):
            logger.warning(f"Reweighting bin {b} [{edges[b]:.1f}, {edges[b + 1]:.1f}) has a single class "
                           f"({quark_counts[b]} quark / {gluon_counts[b]} gluon); dropping it")
    accept_q, accept_g = bin_acceptance(quark_counts, gluon_counts)

    kept = []
    for sample, b, ok in zip(samples, which, inside):
        if not ok:
            continue
        p = accept_q[b] if sample.label == 1 else accept_g[b]
        if p >= 1.0 or rng.random() < p:
            kept.append(sample)
    logger.info(f"Reweighting kept {len(kept)} of {len(samples)} jets")
    return kept
