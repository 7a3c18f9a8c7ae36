"""
Parametric toy event generator.

Pipeline per event: hard partons -> boson decay (leptons, neutrino) ->
fragmentation into tracks -> detector response -> pile-up overlay.

Randomness comes from numpy's Philox4x64 counter-based generator keyed by
the 64-bit event seed; dataset event seeds are derived from
(global seed, event index) through ``numpy.random.SeedSequence``, so any
scheduling order produces the same events.
"""

import logging
import math
from dataclasses import replace

import numpy as np
from joblib import Parallel, delayed

from app.collider.events import PROCESSES, Event, Lepton, Track, TruthParton
from app.collider.kinematics import momentum_from, wrap_phi

logger = logging.getLogger(__name__)

MAX_SMEAR_REDRAWS = 100


class GenerationError(ValueError):
    """Invalid process/domain combination or generator settings"""


def event_rng(seed):
    """Philox4x64 stream keyed by a 64-bit seed"""
    return np.random.Generator(np.random.Philox(key=int(seed) & 0xFFFFFFFFFFFFFFFF))


def derive_seed(*components):
    """64-bit seed for a sub-stream identified by integer components"""
    state = np.random.SeedSequence([int(c) & 0xFFFFFFFFFFFFFFFF for c in components]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def _truncated_eta(rng, width, eta_max):
    while True:
        eta = rng.normal(0.0, width)
        if abs(eta) < eta_max:
            return float(eta)


def _uniform_phi(rng):
    return float(wrap_phi(rng.uniform(-math.pi, math.pi)))


def _sample_partons(process, proc_cfg, domain, gen, rng):
    extra = rng.poisson(domain.extra_jet_rate) if domain.extra_jet_rate > 0 else 0
    if process == 'TTBAR':
        flavors = ['quark'] * 4 + ['gluon'] * extra
    elif process == 'WW':
        flavors = ['quark'] * 2 + ['gluon'] * extra
    else:
        count = 1 + rng.poisson(proc_cfg.get('jet_rate', 1.0) + domain.extra_jet_rate)
        flavors = ['gluon' if rng.random() < gen.gluon_fraction else 'quark' for _ in range(count)]

    scale = proc_cfg['parton_scale'] * domain.spectrum_hardness
    partons = []
    for flavor in flavors:
        pt = float(rng.gamma(proc_cfg['parton_shape'], scale))
        partons.append(TruthParton(pt=max(pt, 1e-6), eta=_truncated_eta(rng, gen.eta_width, gen.eta_max),
                                   phi=_uniform_phi(rng), flavor=flavor))
    return partons


def _sample_boson_decay(process, proc_cfg, domain, gen, rng):
    """Two-body decay in the transverse plane: daughters p_B/2 ± q with |q| = (m/2)·sinθ*"""
    boson = proc_cfg.get('boson', 'W')
    mass = gen.boson_masses[boson]
    boson_pt = rng.gamma(proc_cfg['boson_pt_shape'], proc_cfg['boson_pt_scale'] * domain.spectrum_hardness)
    boson_phi = rng.uniform(-math.pi, math.pi)
    half = 0.5 * np.array([boson_pt * math.cos(boson_phi), boson_pt * math.sin(boson_phi)])
    cos_theta = rng.uniform(-1.0, 1.0)
    q_mag = 0.5 * mass * math.sqrt(max(0.0, 1.0 - cos_theta * cos_theta))
    q_phi = rng.uniform(-math.pi, math.pi)
    q = np.array([q_mag * math.cos(q_phi), q_mag * math.sin(q_phi)])

    daughters = [half + q, half - q]
    n_leptons = 2 if process == 'ZJETS' else 1
    flavor = domain.lepton_flavors[int(rng.integers(len(domain.lepton_flavors)))]
    leptons = []
    for vec in daughters[:n_leptons]:
        pt = max(float(math.hypot(vec[0], vec[1])), 1e-3)
        measured = pt * (1.0 + rng.normal(0.0, domain.sigma_rel(pt)))
        leptons.append(Lepton(pt=max(measured, 1e-3), eta=_truncated_eta(rng, gen.eta_width, gen.eta_max),
                              phi=float(wrap_phi(math.atan2(vec[1], vec[0]))), flavor=flavor))

    if process == 'ZJETS':
        met = rng.normal(0.0, gen.zjets_met_sigma, size=2)
    else:
        met = daughters[1]
    return leptons, (float(met[0]), float(met[1]))


def fragment_parton(parton, fragmentation, rng):
    """
    Split a parton into charged tracks.

    Multiplicity 1 + Poisson(λ·log pt), momentum fractions from a symmetric
    Dirichlet, Gaussian angular spread around the parton axis.
    """
    params = fragmentation[parton.flavor]
    sigma_ip = fragmentation.get('sigma_ip', 0.05)
    mean_extra = params['multiplicity'] * max(0.0, math.log(parton.pt))
    m = 1 + int(rng.poisson(mean_extra))
    if m == 1:
        fractions = np.ones(1)
    else:
        fractions = np.maximum(rng.dirichlet(np.full(m, params['alpha'])), 1e-12)
        fractions = fractions / fractions.sum()

    d_eta = rng.normal(0.0, params['sigma'], size=m)
    d_phi = rng.normal(0.0, params['sigma'], size=m)
    charges = rng.choice([-1, 1], size=m)
    d0 = rng.normal(0.0, sigma_ip, size=m)
    z0 = rng.normal(0.0, sigma_ip, size=m)

    tracks = []
    for i in range(m):
        pt = parton.pt * fractions[i]
        eta = parton.eta + d_eta[i]
        phi = wrap_phi(parton.phi + d_phi[i])
        px, py, pz = momentum_from(pt, eta, phi)
        tracks.append(Track(px=float(px), py=float(py), pz=float(pz), charge=int(charges[i]),
                            d0=float(d0[i]), z0=float(z0[i]), origin='hard'))
    return tracks


def _mask_impact_parameters(track, domain, rng):
    d0 = track.d0
    if domain.d0_mask_prob > 0 and rng.random() < domain.d0_mask_prob:
        d0 = 0.0
    z0 = 0.0 if domain.drop_z0 else track.z0
    if d0 == track.d0 and z0 == track.z0:
        return track
    return replace(track, d0=d0, z0=z0)


def apply_detector(tracks, domain, rng):
    """Efficiency loss, relative pt smearing a ⊕ b/√pt, small η/φ smearing"""
    measured = []
    for track in tracks:
        pt = track.pt
        if rng.random() >= domain.efficiency(pt):
            continue
        sigma = domain.sigma_rel(pt)
        new_pt = pt * (1.0 + rng.normal(0.0, sigma))
        redraws = 0
        while new_pt <= 0.0 and redraws < MAX_SMEAR_REDRAWS:
            new_pt = pt * (1.0 + rng.normal(0.0, sigma))
            redraws += 1
        if new_pt <= 0.0:
            new_pt = pt
        eta = track.eta + rng.normal(0.0, domain.eta_smear)
        phi = wrap_phi(track.phi + rng.normal(0.0, domain.phi_smear))
        px, py, pz = momentum_from(new_pt, eta, phi)
        measured.append(_mask_impact_parameters(
            replace(track, px=float(px), py=float(py), pz=float(pz)), domain, rng))
    return measured


def add_pileup(event, domain, rng, pileup=None):
    """Overlay Poisson(pileup_mu) soft tracks tagged origin=pileup"""
    if domain.pileup_mu <= 0:
        return event
    pileup = pileup or {'mean_pt': 1.0, 'z0_sigma': 50.0, 'sigma_ip': 0.05}
    count = int(rng.poisson(domain.pileup_mu))
    added = []
    for _ in range(count):
        pt = max(float(rng.exponential(pileup.get('mean_pt', 1.0))), 1e-6)
        eta = rng.uniform(-2.5, 2.5)
        phi = _uniform_phi(rng)
        px, py, pz = momentum_from(pt, eta, phi)
        track = Track(px=float(px), py=float(py), pz=float(pz), charge=int(rng.choice([-1, 1])),
                      d0=float(rng.normal(0.0, pileup.get('sigma_ip', 0.05))),
                      z0=float(rng.normal(0.0, pileup.get('z0_sigma', 50.0))), origin='pileup')
        added.append(_mask_impact_parameters(track, domain, rng))
    return replace(event, tracks=list(event.tracks) + added)


def _lepton_track(lepton, fragmentation, domain, rng):
    px, py, pz = momentum_from(lepton.pt, lepton.eta, lepton.phi)
    track = Track(px=float(px), py=float(py), pz=float(pz), charge=int(rng.choice([-1, 1])),
                  d0=float(rng.normal(0.0, fragmentation.get('sigma_ip', 0.05))),
                  z0=float(rng.normal(0.0, fragmentation.get('sigma_ip', 0.05))), origin='lepton')
    return _mask_impact_parameters(track, domain, rng)


def generate_event(process, domain, generator, seed):
    """Deterministic in (process, domain, generator settings, seed)"""
    if process not in PROCESSES:
        raise GenerationError(f"Unknown process {process!r}; expected one of {PROCESSES}")
    proc_cfg = generator.process(process)
    if (process == 'ZJETS') != (proc_cfg.get('boson', 'W') == 'Z'):
        raise GenerationError(f"Process {process} is configured with boson {proc_cfg.get('boson')}")

    rng = event_rng(seed)
    partons = _sample_partons(process, proc_cfg, domain, generator, rng)
    leptons, met_true = _sample_boson_decay(process, proc_cfg, domain, generator, rng)

    hadrons = []
    for parton in partons:
        hadrons.extend(fragment_parton(parton, generator.fragmentation, rng))
    tracks = apply_detector(hadrons, domain, rng)
    tracks.extend(_lepton_track(lep, generator.fragmentation, domain, rng) for lep in leptons)

    event = Event(process=process, domain=domain.name, tracks=tracks, leptons=leptons,
                  partons=partons, met_true=met_true, seed=int(seed))
    pileup = dict(generator.pileup)
    pileup.setdefault('sigma_ip', generator.fragmentation.get('sigma_ip', 0.05))
    return add_pileup(event, domain, rng, pileup)


def _generate_chunk(process, domain, generator, global_seed, indices):
    return [generate_event(process, domain, generator, derive_seed(global_seed, i)) for i in indices]


def generate_dataset(process, domain, generator, n, global_seed, jobs=1, chunk_size=500):
    """Generate ``n`` events; event i uses the seed derived from (global_seed, i)"""
    if n < 0:
        raise GenerationError(f"Event count must be >= 0, got {n}")
    chunks = [range(start, min(start + chunk_size, n)) for start in range(0, n, chunk_size)]
    logger.info(f"Generating {n} {process} events in domain {domain.name} (seed {global_seed}, jobs {jobs})")
    results = Parallel(n_jobs=jobs)(
        delayed(_generate_chunk)(process, domain, generator, global_seed, chunk) for chunk in chunks
    )
    events = [event for chunk in results for event in chunk]
    mean_tracks = np.mean([len(e.tracks) for e in events]) if events else 0.0
    logger.info(f"Generated {len(events)} events, mean track count {mean_tracks:.1f}")
    return events
