import numpy as np

from app.autodiff import tensor as T
from config.settings import settings


class LabelError(ValueError):
    """Classification labels outside {0, 1}"""


def bce_loss(p, y, clamp=None):
    """Mean binary cross-entropy with probabilities clamped to [clamp, 1 - clamp]"""
    clamp = settings.BCE_CLAMP if clamp is None else clamp
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise LabelError(f"Labels must be 0 or 1, got values {np.unique(y)[:5].tolist()}")
    p = T.reshape(T.as_tensor(p), (-1,))
    if p.shape != y.shape:
        raise T.ShapeError(f"bce_loss: {p.shape[0]} probabilities for {y.shape[0]} labels")
    p = T.clip(p, clamp, 1.0 - clamp)
    per_sample = T.add(T.mul(T.log(p), y), T.mul(T.log(T.sub(1.0, p)), 1.0 - y))
    return T.mul(T.mean(per_sample), -1.0)


def bce_with_logits(logits, y, clamp=None):
    return bce_loss(T.sigmoid(logits), y, clamp)


def met_loss(pred, true, lambda_bias=None):
    """mean((pred - true)^2) + lambda_bias * mean(pred - true)^2 over the batch"""
    lambda_bias = settings.MET_LAMBDA_BIAS if lambda_bias is None else lambda_bias
    true = np.asarray(true, dtype=np.float64).reshape(-1)
    pred = T.reshape(T.as_tensor(pred), (-1,))
    if pred.shape != true.shape:
        raise T.ShapeError(f"met_loss: {pred.shape[0]} predictions for {true.shape[0]} targets")
    if true.size < 2:
        raise ValueError(f"met_loss needs a batch of at least 2 events, got {true.size}")
    residual = T.sub(pred, true)
    bias = T.mean(residual)
    return T.add(T.mean(T.mul(residual, residual)), T.mul(T.mul(bias, bias), lambda_bias))
