from dataclasses import dataclass

import numpy as np

from app.collider.kinematics import delta_phi
from config.settings import settings

ETA_COLUMN = 1
PHI_COLUMN = 2


@dataclass
class KnnGraph:
    neighbors: list

    def packed(self):
        """Rectangular (index [n, k], weight [n, k]) form; weights average over each node's neighbors"""
        n = len(self.neighbors)
        width = max(len(nb) for nb in self.neighbors)
        index = np.repeat(np.arange(n)[:, None], width, axis=1)
        weight = np.zeros((n, width))
        for i, nb in enumerate(self.neighbors):
            index[i, :len(nb)] = nb
            weight[i, :len(nb)] = 1.0 / len(nb)
        return index, weight


def knn_graph(sample, k=None):
    """
    k nearest real nodes in the (η, φ) plane with periodic Δφ.

    Each node gets min(k, n_real - 1) neighbors; a lone node is paired with itself.
    Equal distances resolve to the lower index.
    """
    k = settings.KNN_K if k is None else k
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n = int(np.asarray(sample.real_mask).sum())
    if n == 0:
        raise ValueError("knn_graph: sample has no real nodes")
    if n == 1:
        return KnnGraph(neighbors=[[0]])
    eta = sample.features[:n, ETA_COLUMN]
    phi = sample.features[:n, PHI_COLUMN]
    d_eta = eta[:, None] - eta[None, :]
    d_phi = delta_phi(phi[:, None], phi[None, :])
    dist2 = d_eta * d_eta + d_phi * d_phi
    dist2[np.diag_indices(n)] = np.inf
    order = np.argsort(dist2, axis=1, kind='stable')[:, :min(k, n - 1)]
    return KnnGraph(neighbors=[row.tolist() for row in order])
