from app.models.bundle import BundleMismatch, load_bundle, save_bundle
from app.models.freeze import FreezeSpec, FreezeSpecError, apply_freeze
from app.models.losses import LabelError, bce_loss, bce_with_logits, met_loss
from app.models.networks import (
    METRegressor,
    QGTagger,
    SBClassifier,
    build_model,
    met_forward,
    qg_forward,
    sb_forward,
)

__all__ = [
    'BundleMismatch', 'FreezeSpec', 'FreezeSpecError', 'LabelError', 'METRegressor', 'QGTagger',
    'SBClassifier', 'apply_freeze', 'bce_loss', 'bce_with_logits', 'build_model', 'load_bundle', 'met_forward',
    'met_loss', 'qg_forward', 'save_bundle', 'sb_forward',
]
