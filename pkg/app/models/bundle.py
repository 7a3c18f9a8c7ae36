"""
Model bundles: a directory holding the parameter snapshot and its metadata
"""

import logging
import os

from app.autodiff.parameter import check_unique_names, load_snapshot, save_snapshot
from app.collider.generator import event_rng
from app.models.networks import build_model
from app.storage import read_json, write_json
from config.settings import settings

logger = logging.getLogger(__name__)

PARAMS_FILE = 'params.txt'
METADATA_FILE = 'metadata.json'


class BundleMismatch(ValueError):
    """A bundle does not fit the requested task or architecture"""


def save_bundle(directory, model, standardizer=None, source_domain='', config_hash='', extra=None):
    os.makedirs(directory, exist_ok=True)
    check_unique_names(model.parameters())
    save_snapshot(os.path.join(directory, PARAMS_FILE), model.state_dict())
    metadata = {
        'task': model.task,
        'architecture': model.architecture,
        'standardizer': None if standardizer is None else standardizer.to_dict(),
        'source_domain': source_domain,
        'config_hash': config_hash,
        'code_version': settings.CODE_VERSION,
    }
    metadata.update(extra or {})
    write_json(os.path.join(directory, METADATA_FILE), metadata)
    logger.info(f"Saved {model.task} bundle to {directory}")
    return metadata


def load_bundle(directory, task=None):
    """Rebuild the model stored in ``directory``; returns (model, metadata)"""
    try:
        metadata = read_json(os.path.join(directory, METADATA_FILE))
    except FileNotFoundError as e:
        raise BundleMismatch(f"{directory} is not a model bundle (no {METADATA_FILE})") from e
    if task is not None and metadata.get('task') != task:
        raise BundleMismatch(f"Bundle {directory} holds a {metadata.get('task')} model, expected {task}")
    model = build_model(metadata['task'], event_rng(0), metadata['architecture'])
    state = load_snapshot(os.path.join(directory, PARAMS_FILE))
    try:
        model.load_state_dict(state, strict=True)
    except ValueError as e:
        raise BundleMismatch(f"Bundle {directory} does not match its architecture: {e}") from e
    model.eval()
    logger.info(f"Loaded {metadata['task']} bundle from {directory} (source domain {metadata.get('source_domain')!r})")
    return model, metadata
