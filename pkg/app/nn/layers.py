"""
Neural layers whose forward passes record on the autodiff tape
"""

import logging

import numpy as np

from app.autodiff import tensor as T
from app.autodiff.parameter import Parameter, SnapshotError
from app.autodiff.tensor import ShapeError, Tensor

logger = logging.getLogger(__name__)

DEFAULT_DROPOUT = 0.1
BATCHNORM_MOMENTUM = 0.1
NORM_EPS = 1e-5


def kaiming_uniform(rng, fan_in, shape):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def xavier_uniform(rng, fan_in, fan_out, shape):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """
    Base for layers and models.

    Parameters, buffers and sub-modules are discovered from instance attributes
    in assignment order, so names and snapshot order are stable.
    """

    def __init__(self, name):
        self.name = name
        self.training = True
        self.rng = np.random.Generator(np.random.Philox(0))

    def children(self):
        for value in vars(self).values():
            if isinstance(value, Module):
                yield value
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield item

    def own_parameters(self):
        return [v for v in vars(self).values() if isinstance(v, Parameter)]

    def parameters(self):
        params = list(self.own_parameters())
        for child in self.children():
            params.extend(child.parameters())
        return params

    def buffers(self):
        """Non-learned state that travels with the parameters (running statistics)"""
        found = {}
        for child in self.children():
            found.update(child.buffers())
        return found

    def train(self, mode=True):
        self.training = mode
        for child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def set_rng(self, rng):
        self.rng = rng
        for child in self.children():
            child.set_rng(rng)

    def state_dict(self):
        state = {p.name: p.data.copy() for p in self.parameters()}
        state.update({name: array.copy() for name, array in self.buffers().items()})
        return state

    def load_state_dict(self, state, strict=True):
        params = {p.name: p for p in self.parameters()}
        buffers = self.buffers()
        expected = set(params) | set(buffers)
        missing = expected - set(state)
        unexpected = set(state) - expected
        if strict and (missing or unexpected):
            raise SnapshotError(
                f"State mismatch for {self.name}: missing {sorted(missing)[:5]}, unexpected {sorted(unexpected)[:5]}"
            )
        for name, values in state.items():
            if name in params:
                params[name].assign(values)
            elif name in buffers:
                if np.shape(values) != buffers[name].shape:
                    raise SnapshotError(f"Buffer {name}: expected shape {buffers[name].shape}, got {np.shape(values)}")
                buffers[name][...] = values

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class DenseLayer(Module):
    def __init__(self, name, in_features, out_features, rng, init='kaiming'):
        super().__init__(name)
        self.in_features = in_features
        self.out_features = out_features
        if init == 'kaiming':
            w = kaiming_uniform(rng, in_features, (out_features, in_features))
        elif init == 'xavier':
            w = xavier_uniform(rng, in_features, out_features, (out_features, in_features))
        else:
            raise ValueError(f"Unknown init policy: {init}")
        self.weight = Parameter(f"{name}.weight", w)
        self.bias = Parameter(f"{name}.bias", np.zeros(out_features))

    def forward(self, x):
        """y = x·Wᵀ + b over the last axis"""
        if x.shape[-1] != self.in_features:
            raise ShapeError(f"{self.name}: expected last extent {self.in_features}, got input shape {x.shape}")
        return T.add(T.matmul(x, T.transpose(self.weight.tensor)), self.bias.tensor)


class NormLayer(Module):
    def __init__(self, name, features, kind='layer', eps=NORM_EPS, momentum=BATCHNORM_MOMENTUM):
        super().__init__(name)
        if kind not in ('layer', 'batch'):
            raise ValueError(f"Unknown norm kind: {kind}")
        if eps <= 0:
            raise ValueError(f"Norm epsilon must be positive, got {eps}")
        self.kind = kind
        self.features = features
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(f"{name}.gamma", np.ones(features))
        self.beta = Parameter(f"{name}.beta", np.zeros(features))
        if kind == 'batch':
            self.running_mean = np.zeros(features)
            self.running_var = np.ones(features)

    def buffers(self):
        if self.kind != 'batch':
            return {}
        return {f"{self.name}.running_mean": self.running_mean,
                f"{self.name}.running_var": self.running_var}

    def forward(self, x, mode=None):
        if x.shape[-1] != self.features:
            raise ShapeError(f"{self.name}: expected {self.features} features, got input shape {x.shape}")
        training = self.training if mode is None else mode == 'train'
        if self.kind == 'layer':
            mu = T.mean(x, axis=-1, keepdims=True)
            centered = T.sub(x, mu)
            var = T.mean(T.mul(centered, centered), axis=-1, keepdims=True)
            x_hat = T.div(centered, T.sqrt(T.add(var, self.eps)))
        elif training:
            flat = T.reshape(x, (-1, self.features))
            n = flat.shape[0]
            if n < 2:
                raise ShapeError(f"{self.name}: batch normalization in train mode needs at least 2 rows, got {n}")
            mu = T.mean(flat, axis=0, keepdims=True)
            centered = T.sub(flat, mu)
            var = T.mean(T.mul(centered, centered), axis=0, keepdims=True)
            x_hat = T.reshape(T.div(centered, T.sqrt(T.add(var, self.eps))), x.shape)
            m = self.momentum
            self.running_mean[...] = (1.0 - m) * self.running_mean + m * mu.data.reshape(-1)
            self.running_var[...] = (1.0 - m) * self.running_var + m * var.data.reshape(-1) * n / (n - 1)
        else:
            x_hat = T.div(T.sub(x, self.running_mean), np.sqrt(self.running_var + self.eps))
        return T.add(T.mul(x_hat, self.gamma.tensor), self.beta.tensor)


class DropoutLayer(Module):
    def __init__(self, name, rate=DEFAULT_DROPOUT):
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"Dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x):
        if not self.training or self.rate == 0.0:
            return x
        keep = self.rng.random(x.shape) >= self.rate
        return T.mul(x, keep / (1.0 - self.rate))


class MultiHeadAttention(Module):
    def __init__(self, name, model_dim, heads, rng):
        super().__init__(name)
        if model_dim % heads:
            raise ValueError(f"model_dim {model_dim} is not divisible by {heads} heads")
        self.model_dim = model_dim
        self.heads = heads
        self.head_dim = model_dim // heads
        self.query = DenseLayer(f"{name}.query", model_dim, model_dim, rng, init='xavier')
        self.key = DenseLayer(f"{name}.key", model_dim, model_dim, rng, init='xavier')
        self.value = DenseLayer(f"{name}.value", model_dim, model_dim, rng, init='xavier')
        self.output = DenseLayer(f"{name}.output", model_dim, model_dim, rng, init='xavier')
        self.last_weights = None

    def _split_heads(self, x, batch, seq):
        return T.transpose(T.reshape(x, (batch, seq, self.heads, self.head_dim)), (0, 2, 1, 3))

    def forward(self, x, mask):
        """Self-attention over [batch, seq, dim]; ``mask`` marks real tokens"""
        if x.ndim != 3 or x.shape[-1] != self.model_dim:
            raise ShapeError(f"{self.name}: expected [batch, seq, {self.model_dim}], got {x.shape}")
        mask = np.asarray(mask, dtype=bool)
        batch, seq, _ = x.shape
        if mask.shape != (batch, seq):
            raise ShapeError(f"{self.name}: mask shape {mask.shape} does not match input {x.shape}")
        if not mask.any(axis=1).all():
            raise ValueError(f"{self.name}: sequence with no real token")

        q = self._split_heads(self.query(x), batch, seq)
        k = self._split_heads(self.key(x), batch, seq)
        v = self._split_heads(self.value(x), batch, seq)
        scores = T.mul(T.matmul(q, T.swap_last(k)), 1.0 / np.sqrt(self.head_dim))
        scores = T.masked_fill(scores, mask[:, None, None, :])
        weights = T.softmax(scores, axis=-1)
        self.last_weights = weights.data
        context = T.matmul(weights, v)
        merged = T.reshape(T.transpose(context, (0, 2, 1, 3)), (batch, seq, self.model_dim))
        return self.output(merged)


class FeedForward(Module):
    def __init__(self, name, model_dim, hidden_dim, rng, dropout=DEFAULT_DROPOUT):
        super().__init__(name)
        self.dense0 = DenseLayer(f"{name}.dense0", model_dim, hidden_dim, rng)
        self.dense1 = DenseLayer(f"{name}.dense1", hidden_dim, model_dim, rng)
        self.dropout = DropoutLayer(f"{name}.dropout", dropout)

    def forward(self, x):
        return self.dense1(self.dropout(T.gelu(self.dense0(x))))


class TransformerEncoderLayer(Module):
    """Pre-norm encoder layer: x + MHA(LN(x)), then x + FF(LN(x))"""

    def __init__(self, name, model_dim, heads, ff_dim, rng, dropout=DEFAULT_DROPOUT):
        super().__init__(name)
        self.norm0 = NormLayer(f"{name}.norm0", model_dim, kind='layer')
        self.attention = MultiHeadAttention(f"{name}.attention", model_dim, heads, rng)
        self.dropout0 = DropoutLayer(f"{name}.dropout0", dropout)
        self.norm1 = NormLayer(f"{name}.norm1", model_dim, kind='layer')
        self.feed_forward = FeedForward(f"{name}.ff", model_dim, ff_dim, rng, dropout)
        self.dropout1 = DropoutLayer(f"{name}.dropout1", dropout)

    def forward(self, x, mask):
        x = T.add(x, self.dropout0(self.attention(self.norm0(x), mask)))
        return T.add(x, self.dropout1(self.feed_forward(self.norm1(x))))


def pack_neighbors(neighbor_lists, n_nodes=None):
    """
    Turn per-node neighbor lists into a rectangular index array plus averaging weights.

    Nodes without neighbors are paired with themselves. Unused slots point at
    the node itself with weight 0.
    """
    n = len(neighbor_lists) if n_nodes is None else n_nodes
    width = max([len(nb) for nb in neighbor_lists] + [1])
    index = np.repeat(np.arange(n)[:, None], width, axis=1)
    weight = np.zeros((n, width))
    for i, nb in enumerate(neighbor_lists):
        nb = list(nb) if len(nb) else [i]
        for j in nb:
            if not 0 <= j < n:
                raise ShapeError(f"Neighbor index {j} of node {i} is outside [0, {n})")
        index[i, :len(nb)] = nb
        weight[i, :len(nb)] = 1.0 / len(nb)
    return index, weight


class EdgeConvBlock(Module):
    def __init__(self, name, in_features, out_features, rng, dropout=DEFAULT_DROPOUT, aggregation='mean'):
        super().__init__(name)
        if aggregation != 'mean':
            raise ValueError(f"Unsupported EdgeConv aggregation: {aggregation}")
        self.in_features = in_features
        self.out_features = out_features
        self.aggregation = aggregation
        self.mlp0 = DenseLayer(f"{name}.mlp.dense0", 2 * in_features, out_features, rng)
        self.mlp1 = DenseLayer(f"{name}.mlp.dense1", out_features, out_features, rng)
        self.norm = NormLayer(f"{name}.norm", out_features, kind='batch')
        self.dropout = DropoutLayer(f"{name}.dropout", dropout)

    def edge_features(self, nodes, index):
        center = T.gather(nodes, np.repeat(np.arange(nodes.shape[0])[:, None], index.shape[1], axis=1), axis=0)
        neighbor = T.gather(nodes, index, axis=0)
        pair = T.concat([center, T.sub(neighbor, center)], axis=-1)
        return self.mlp1(T.relu(self.mlp0(pair)))

    def aggregate(self, nodes, neighbors):
        """Mean over neighbors of edge_mlp(x_i, x_j - x_i), before the post-processing"""
        if nodes.ndim != 2 or nodes.shape[1] != self.in_features:
            raise ShapeError(f"{self.name}: expected [n, {self.in_features}] nodes, got {nodes.shape}")
        if isinstance(neighbors, tuple):
            index, weight = neighbors
        else:
            index, weight = pack_neighbors(neighbors, nodes.shape[0])
        edges = self.edge_features(nodes, index)
        return T.sum_(T.mul(edges, weight[:, :, None]), axis=1)

    def forward(self, nodes, neighbors):
        return self.dropout(self.norm(T.relu(self.aggregate(nodes, neighbors))))


def global_mean_pool(nodes, real_mask):
    """Mean over the rows flagged real; other rows are never read"""
    real = np.flatnonzero(np.asarray(real_mask, dtype=bool))
    if real.size == 0:
        raise ValueError("global_mean_pool: no real nodes")
    return T.mean(T.gather(nodes, real, axis=0), axis=0)


def segment_mean_pool(nodes, slot_index, slot_mask):
    """
    Batched mean pool: ``slot_index`` [batch, slots] maps each slot to a node row,
    ``slot_mask`` flags slots that hold a real node.
    """
    slot_mask = np.asarray(slot_mask, dtype=bool)
    counts = slot_mask.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("segment_mean_pool: a segment has no real nodes")
    weights = (slot_mask / counts[:, None])[:, :, None]
    gathered = T.gather(nodes, np.where(slot_mask, slot_index, 0), axis=0)
    return T.sum_(T.mul(gathered, weights), axis=1)
