"""
Dense float64 tensors with a recording tape for reverse-mode differentiation.

Operations record themselves on the active Tape (``with Tape() as tape:``)
whenever one of their inputs requires a gradient. Without an active tape
nothing is recorded, which is how evaluation runs.
"""

import contextvars
import logging

import numpy as np

logger = logging.getLogger(__name__)

# Additive fill used to remove masked logits from a softmax
MASK_FILL = -1.0e9

GELU_COEFF = 0.044715
SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)

_ACTIVE_TAPE = contextvars.ContextVar('domainshift_active_tape', default=None)


class ShapeError(ValueError):
    """Operand shapes do not conform"""


class DomainError(ValueError):
    """Operand outside the mathematical domain of an op"""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or infinity"""


class TapeError(RuntimeError):
    """Misuse of the tape (non-scalar root, reused tape, foreign root)"""


class Node:
    """One recorded operation: inputs, output and the rule mapping the output gradient to input gradients"""

    __slots__ = ('inputs', 'output', 'backward')

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    def __init__(self):
        self.nodes = []
        self.consumed = False
        self._token = None

    def record(self, inputs, output, backward):
        if self.consumed:
            raise TapeError("Cannot record on a tape that was already consumed by backward()")
        node = Node(inputs, output, backward)
        output._node = node
        output._tape = self
        self.nodes.append(node)

    def __len__(self):
        return len(self.nodes)

    def __enter__(self):
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPE.reset(self._token)
        self._token = None
        return False


def active_tape():
    return _ACTIVE_TAPE.get()


class Tensor:
    """n-dimensional float64 value, optionally participating in gradients"""

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._node = None
        self._tape = None

    @classmethod
    def _wrap(cls, array, requires_grad=False):
        out = cls.__new__(cls)
        out.data = array
        out.requires_grad = requires_grad
        out.grad = None
        out.name = None
        out._node = None
        out._tape = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.asarray(value, dtype=np.float64))


def _emit(data, inputs, backward):
    """Wrap an op result and record it when a tape is active and an input needs a gradient"""
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"Operation produced non-finite values (output shape {data.shape})")
    tape = _ACTIVE_TAPE.get()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, requires_grad=needs_grad)
    if needs_grad:
        tape.record(inputs, out, backward)
    return out


def _unbroadcast(grad, shape):
    """Sum a gradient back down to the shape of the operand it flows into"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary_shape(a, b, op_name):
    # one operand must broadcast onto the other: scalar, trailing bias or keepdims reductions
    try:
        out = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        out = None
    if out is None or (out != a.shape and out != b.shape):
        raise ShapeError(f"{op_name}: cannot combine shapes {a.shape} and {b.shape}")
    return out


# --- element-wise arithmetic -------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape(a, b, 'add')

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape(a, b, 'subtract')

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape(a, b, 'multiply')

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape(a, b, 'divide')
    if np.any(b.data == 0):
        raise DomainError(f"divide: zero in divisor of shape {b.shape}")

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _emit(a.data / b.data, (a, b), backward)


def power(a, exponent):
    """Element-wise power with a constant scalar exponent"""
    a = as_tensor(a)
    p = float(exponent)
    if p != int(p) and np.any(a.data < 0):
        raise DomainError(f"power: negative base with non-integer exponent {p}")

    def backward(g):
        return (g * p * np.power(a.data, p - 1.0),)

    return _emit(np.power(a.data, p), (a,), backward)


# --- linear algebra and shape manipulation --------------------------------------

def matmul(a, b):
    """Matrix product over the last two axes; leading batch axes must match or b is a plain matrix"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-d, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner extents differ for shapes {a.shape} and {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch extents differ for shapes {a.shape} and {b.shape}")
    if b.ndim > a.ndim:
        raise ShapeError(f"matmul: right operand {b.shape} has more axes than left {a.shape}")

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _emit(np.matmul(a.data, b.data), (a, b), backward)


def transpose(a, axes=None):
    """Reverse all axes, or permute them by ``axes``; 2-d input gives the plain transpose"""
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return _emit(np.transpose(a.data, axes), (a,), backward)


def swap_last(a):
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def reshape(a, shape):
    a = as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {tuple(shape)}") from e

    def backward(g):
        return (g.reshape(a.shape),)

    return _emit(data, (a,), backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: no operands")
    ndim = tensors[0].ndim
    ax = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != ax):
            raise ShapeError(f"concat: shapes {tensors[0].shape} and {t.shape} differ off axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _emit(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), backward)


def gather(a, indices, axis=0):
    """Select entries along ``axis`` by an integer index array of any shape"""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    ax = axis % a.ndim
    if idx.size and (idx.min() < -a.shape[ax] or idx.max() >= a.shape[ax]):
        raise ShapeError(f"gather: index out of range for axis {axis} of shape {a.shape}")

    def backward(g):
        out = np.zeros_like(a.data)
        moved = np.moveaxis(out, ax, 0)
        g_moved = np.moveaxis(g, list(range(ax, ax + idx.ndim)), list(range(idx.ndim)))
        np.add.at(moved, idx, g_moved)
        return (out,)

    return _emit(np.take(a.data, idx, axis=ax), (a,), backward)


def getitem(a, key):
    a = as_tensor(a)

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, key, g)
        return (out,)

    return _emit(np.array(a.data[key], dtype=np.float64), (a,), backward)


# --- reductions ----------------------------------------------------------------

def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g.reshape((1,) * len(shape)) if g.ndim else g, shape)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)

    def backward(g):
        return (np.array(_expand_reduced(g, a.shape, axis, keepdims)),)

    return _emit(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.size if axis is None else int(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    if count == 0:
        raise ShapeError(f"mean: empty reduction over shape {a.shape}")

    def backward(g):
        return (np.array(_expand_reduced(g, a.shape, axis, keepdims)) / count,)

    return _emit(np.asarray(a.data.mean(axis=axis, keepdims=keepdims)), (a,), backward)


def max_(a, axis=-1, keepdims=False):
    """Maximum over one axis; the gradient flows to the first maximal entry"""
    a = as_tensor(a)
    idx = np.argmax(a.data, axis=axis)
    idx_k = np.expand_dims(idx, axis)

    def backward(g):
        out = np.zeros_like(a.data)
        gk = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(out, idx_k, gk, axis=axis)
        return (out,)

    data = np.take_along_axis(a.data, idx_k, axis=axis)
    if not keepdims:
        data = np.squeeze(data, axis=axis)
    return _emit(np.asarray(data), (a,), backward)


# --- element-wise functions ------------------------------------------------------

def exp(a):
    a = as_tensor(a)
    with np.errstate(over='ignore'):
        out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return _emit(out, (a,), backward)


def log(a):
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError(f"log: negative entries in operand of shape {a.shape}")
    with np.errstate(divide='ignore'):
        out = np.log(a.data)

    def backward(g):
        return (g / a.data,)

    return _emit(out, (a,), backward)


def sqrt(a):
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError(f"sqrt: negative entries in operand of shape {a.shape}")
    out = np.sqrt(a.data)

    def backward(g):
        with np.errstate(divide='ignore'):
            return (g * 0.5 / out,)

    return _emit(out, (a,), backward)


def relu(a):
    a = as_tensor(a)
    positive = a.data > 0

    def backward(g):
        return (g * positive,)

    return _emit(np.where(positive, a.data, 0.0), (a,), backward)


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return _emit(out, (a,), backward)


def gelu(a):
    """GELU, tanh approximation: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))"""
    a = as_tensor(a)
    x = a.data
    inner = SQRT_2_OVER_PI * (x + GELU_COEFF * x ** 3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        d_inner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEFF * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return _emit(out, (a,), backward)


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    # split form avoids overflow in exp for large |x|
    ez = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))

    def backward(g):
        return (g * out * (1.0 - out),)

    return _emit(out, (a,), backward)


def softmax(a, axis=-1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit(out, (a,), backward)


def clip(a, low, high):
    """Clamp into [low, high]; the gradient is zero where clamping was active"""
    a = as_tensor(a)
    inside = (a.data >= low) & (a.data <= high)

    def backward(g):
        return (g * inside,)

    return _emit(np.clip(a.data, low, high), (a,), backward)


def masked_fill(a, keep):
    """Add MASK_FILL wherever ``keep`` is false; ``keep`` broadcasts onto ``a``"""
    a = as_tensor(a)
    keep = np.asarray(keep, dtype=bool)
    try:
        fill = np.broadcast_to(np.where(keep, 0.0, MASK_FILL), a.shape)
    except ValueError as e:
        raise ShapeError(f"masked_fill: mask shape {keep.shape} does not broadcast onto {a.shape}") from e

    def backward(g):
        return (g,)

    return _emit(a.data + fill, (a,), backward)


# --- gradient propagation ---------------------------------------------------------

def backward(root, tape, parameters=None):
    """
    Propagate d(root)/d(leaf) through ``tape`` and consume it.

    Every requires_grad leaf reached gets its ``grad`` populated (summed with
    any gradient already present). Returns {name: gradient} for named leaves;
    parameters passed explicitly but not reached get a zero gradient.
    """
    if tape.consumed:
        raise TapeError("Tape already consumed; run a new forward pass before calling backward() again")
    if root.size != 1:
        raise TapeError(f"backward() needs a scalar root, got shape {root.shape}")
    if root._tape is not tape:
        raise TapeError("Root tensor was not produced through this tape")

    grads = {id(root): np.ones_like(root.data)}
    leaves = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for tensor, g_in in zip(node.inputs, node.backward(g)):
            if g_in is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if tensor._node is None:
                leaves[key] = tensor
            if key in grads:
                grads[key] = grads[key] + g_in
            else:
                grads[key] = np.array(g_in, dtype=np.float64)

    tape.consumed = True
    tape.nodes = []

    result = {}
    for key, tensor in leaves.items():
        g = grads[key].reshape(tensor.shape)
        tensor.grad = g if tensor.grad is None else tensor.grad + g
        if tensor.name is not None:
            result[tensor.name] = tensor.grad
    for param in parameters or ():
        t = getattr(param, 'tensor', param)
        if t.requires_grad and t.grad is None:
            t.grad = np.zeros_like(t.data)
        if t.name is not None and t.requires_grad:
            result.setdefault(t.name, t.grad)
    logger.debug(f"backward: {len(leaves)} leaves received gradients")
    return result
