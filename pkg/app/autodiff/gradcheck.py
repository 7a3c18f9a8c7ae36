import numpy as np

from app.autodiff.tensor import NonFiniteError, Tape, Tensor, backward


def finite_difference_check(f, point, h=1e-5):
    """
    Compare the tape gradient of scalar ``f`` at ``point`` with central differences.

    Returns max over components of |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
    """
    if h <= 0:
        raise ValueError(f"Step h must be positive, got {h}")
    base = np.array(getattr(point, 'data', point), dtype=np.float64)

    x = Tensor(base.copy(), requires_grad=True)
    with Tape() as tape:
        y = f(x)
    if y.size != 1:
        raise ValueError(f"f must return a scalar, got shape {y.shape}")
    if not np.isfinite(y.data).all():
        raise NonFiniteError("f is not finite at the check point")
    if y.requires_grad:
        backward(y, tape)
    analytic = np.zeros_like(base) if x.grad is None else x.grad

    numeric = np.empty_like(base)
    flat = numeric.reshape(-1)
    for i in range(base.size):
        plus = base.copy()
        minus = base.copy()
        plus.reshape(-1)[i] += h
        minus.reshape(-1)[i] -= h
        f_plus = f(Tensor(plus)).item()
        f_minus = f(Tensor(minus)).item()
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError(f"f is not finite around component {i}")
        flat[i] = (f_plus - f_minus) / (2.0 * h)

    rel = np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-12)
    return float(rel.max()) if rel.size else 0.0


def parameter_gradient_check(loss_fn, parameters, h=1e-5, floor=None):
    """
    Tape gradients of ``loss_fn()`` against central differences taken by nudging
    each parameter entry in place. Entries are restored afterwards.

    Returns max |analytic - numeric| / max(|analytic| + |numeric|, floor). The
    floor defaults to 1e-6 times the loss magnitude, the scale below which
    central differences are round-off.
    """
    if h <= 0:
        raise ValueError(f"Step h must be positive, got {h}")
    parameters = [p for p in parameters if p.trainable]
    for p in parameters:
        p.tensor.grad = None
    with Tape() as tape:
        loss = loss_fn()
    if loss.size != 1:
        raise ValueError(f"loss_fn must return a scalar, got shape {loss.shape}")
    backward(loss, tape, parameters)
    if floor is None:
        floor = 1e-6 * max(1.0, abs(loss.item()))

    worst = 0.0
    for p in parameters:
        analytic = p.tensor.grad.reshape(-1)
        flat = p.tensor.data.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            f_plus = loss_fn().item()
            flat[i] = saved - h
            f_minus = loss_fn().item()
            flat[i] = saved
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = abs(analytic[i] - numeric) / max(abs(analytic[i]) + abs(numeric), floor)
            worst = max(worst, err)
    return worst
