"""
Anti-kT sequential recombination and truth flavor labeling
"""

import logging
import math

import numpy as np

from app.collider.events import Jet
from app.collider.kinematics import delta_phi, delta_r, eta_of, phi_of, rapidity_of

logger = logging.getLogger(__name__)


def tracks_to_four_vectors(tracks):
    """Massless four-vectors (px, py, pz, E) for a list of Tracks or an [n, 3] momentum array"""
    if isinstance(tracks, np.ndarray):
        p = np.asarray(tracks, dtype=np.float64)[:, :3]
    else:
        p = np.array([[t.px, t.py, t.pz] for t in tracks], dtype=np.float64).reshape(-1, 3)
    e = np.sqrt((p * p).sum(axis=1))
    return np.column_stack([p, e])


def _pseudojet_coordinates(vectors):
    px, py, pz, e = vectors.T
    pt2 = px * px + py * py
    with np.errstate(divide='ignore'):
        inv_pt2 = np.where(pt2 > 0, 1.0 / pt2, np.inf)
    y = rapidity_of(e, pz)
    phi = np.arctan2(py, px)
    return inv_pt2, y, phi


def cluster_sequence(vectors, radius):
    """
    Run the full anti-kT recombination and return the constituent index lists
    of the final pseudojets, in the order they were declared final.

    The pair (i, j) with the smallest distance is chosen each step, beam
    distances sitting on the diagonal (i, i); ties go to the lower index pair.
    A merge keeps the lower slot and removes the higher one.
    """
    if radius <= 0:
        raise ValueError(f"Jet radius must be positive, got {radius}")
    active = np.array(vectors, dtype=np.float64).reshape(-1, 4)
    members = [[i] for i in range(len(active))]
    final = []
    r2 = radius * radius
    while len(active):
        inv_pt2, y, phi = _pseudojet_coordinates(active)
        dy = y[:, None] - y[None, :]
        dphi = delta_phi(phi[:, None], phi[None, :])
        dij = np.minimum(inv_pt2[:, None], inv_pt2[None, :]) * (dy * dy + dphi * dphi) / r2
        n = len(active)
        dist = np.where(np.triu(np.ones((n, n), dtype=bool), k=1), dij, np.inf)
        dist[np.diag_indices(n)] = inv_pt2
        i, j = divmod(int(np.argmin(dist)), n)
        if i == j:
            final.append((active[i].copy(), sorted(members[i])))
            active = np.delete(active, i, axis=0)
            del members[i]
        else:
            active[i] = active[i] + active[j]
            members[i] = members[i] + members[j]
            active = np.delete(active, j, axis=0)
            del members[j]
    return final


def _make_jet(vector, constituents):
    px, py, pz, e = vector
    pt = math.hypot(px, py)
    mass2 = e * e - (px * px + py * py + pz * pz)
    return Jet(pt=pt, eta=float(eta_of(px, py, pz)) if pt > 0 else math.copysign(math.inf, pz),
               phi=float(phi_of(px, py)), mass=math.sqrt(max(mass2, 0.0)),
               constituent_indices=list(constituents))


def antikt_cluster(tracks, radius=0.4, min_pt=30.0, max_eta=2.5):
    """Anti-kT jets (E-scheme, massless tracks) with pt > min_pt and |η| < max_eta, hardest first"""
    vectors = tracks_to_four_vectors(tracks)
    if len(vectors) == 0:
        return []
    jets = [_make_jet(vec, members) for vec, members in cluster_sequence(vectors, radius)]
    jets = [j for j in jets if j.pt > min_pt and abs(j.eta) < max_eta]
    jets.sort(key=lambda j: (-j.pt, j.constituent_indices[0]))
    return jets


def label_jet_flavor(jet, partons, cone=0.4):
    """Flavor of the highest-pt parton within ΔR < cone of the jet axis, else 'unlabeled'"""
    if cone <= 0:
        raise ValueError(f"Matching cone must be positive, got {cone}")
    best = None
    for parton in partons:
        if delta_r(jet.eta, jet.phi, parton.eta, parton.phi) < cone:
            if best is None or parton.pt > best.pt:
                best = parton
    return best.flavor if best is not None else 'unlabeled'
