import math

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_phi(phi):
    """Map angles into (-π, π]; works on floats and arrays"""
    if isinstance(phi, np.ndarray):
        r = np.mod(math.pi - phi, TWO_PI)
        # mod of a tiny negative rounds up to 2π
        return math.pi - np.where(r >= TWO_PI, 0.0, r)
    return math.pi - math.fmod(math.fmod(math.pi - phi, TWO_PI) + TWO_PI, TWO_PI)


def delta_phi(a, b):
    """(a - b) wrapped into (-π, π]"""
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return wrap_phi(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    return wrap_phi(a - b)


def delta_r(eta1, phi1, eta2, phi2):
    return np.sqrt((eta1 - eta2) ** 2 + delta_phi(phi1, phi2) ** 2)


def pt_of(px, py):
    return np.hypot(px, py)


def eta_of(px, py, pz):
    """Pseudorapidity from momentum components (pt > 0)"""
    return np.arcsinh(pz / np.hypot(px, py))


def phi_of(px, py):
    return wrap_phi(np.arctan2(py, px))


def rapidity_of(e, pz):
    return 0.5 * np.log((e + pz) / (e - pz))


def momentum_from(pt, eta, phi):
    return pt * np.cos(phi), pt * np.sin(phi), pt * np.sinh(eta)
