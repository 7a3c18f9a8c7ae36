"""
The three task networks: event classifier (SB), jet tagger (QG) and MET regressor
"""

import logging

import numpy as np

from app.autodiff import tensor as T
from app.autodiff.parameter import Parameter
from app.autodiff.tensor import NonFiniteError, ShapeError, Tensor
from app.features.graph import KnnGraph
from app.nn.layers import (
    DenseLayer,
    DropoutLayer,
    EdgeConvBlock,
    Module,
    NormLayer,
    TransformerEncoderLayer,
    segment_mean_pool,
)
from config.settings import settings

logger = logging.getLogger(__name__)


def _check_finite(x, name):
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{name}: input contains non-finite values")


def _architecture(task, overrides):
    arch = dict(settings.MODEL_DEFAULTS[task])
    for key, value in (overrides or {}).items():
        if key not in arch:
            raise ValueError(f"Unknown {task} architecture field: {key}")
        arch[key] = value
    return arch


class SBClassifier(Module):
    """Dense stack 12 -> 64 -> 64 -> 32 -> 1 with relu and dropout after each hidden layer"""

    task = 'sb'

    def __init__(self, rng, architecture=None):
        super().__init__('sb')
        self.architecture = _architecture(self.task, architecture)
        widths = [self.architecture['inputs']] + list(self.architecture['hidden'])
        self.dense = [DenseLayer(f"sb.dense{i}", widths[i], widths[i + 1], rng) for i in range(len(widths) - 1)]
        self.dropout = [DropoutLayer(f"sb.dropout{i}", self.architecture['dropout']) for i in range(len(widths) - 1)]
        self.out = DenseLayer('sb.out', widths[-1], 1, rng)

    def logits(self, x):
        _check_finite(x, self.name)
        h = T.as_tensor(x)
        if h.ndim != 2 or h.shape[1] != self.architecture['inputs']:
            raise ShapeError(f"sb: expected [batch, {self.architecture['inputs']}] inputs, got {h.shape}")
        for dense, dropout in zip(self.dense, self.dropout):
            h = dropout(T.relu(dense(h)))
        return T.reshape(self.out(h), (-1,))

    def forward(self, x):
        return T.sigmoid(self.logits(x))


def _packed(graph):
    if isinstance(graph, KnnGraph):
        return graph.packed()
    return graph


class QGTagger(Module):
    """
    EdgeConv jet tagger.

    Only real constituent rows are gathered into the node array, so padded rows
    never enter a computation. Each EdgeConv block's output is kept and all of
    them are concatenated per node before the mean pool.
    """

    task = 'qg'

    def __init__(self, rng, architecture=None):
        super().__init__('qg')
        self.architecture = _architecture(self.task, architecture)
        arch = self.architecture
        dims = [arch['inputs']] + list(arch['edgeconv'])
        self.edgeconv = [EdgeConvBlock(f"qg.edgeconv{i}", dims[i], dims[i + 1], rng, dropout=arch['dropout'])
                         for i in range(len(dims) - 1)]
        widths = [sum(arch['edgeconv'])] + list(arch['head'])
        self.head = [DenseLayer(f"qg.head.dense{i}", widths[i], widths[i + 1], rng) for i in range(len(widths) - 1)]
        self.head_dropout = [DropoutLayer(f"qg.head.dropout{i}", arch['dropout']) for i in range(len(widths) - 1)]
        self.out = DenseLayer('qg.head.out', widths[-1], 1, rng)

    def _nodes(self, features, mask, graphs):
        """Stack real rows of every jet; returns (nodes, index, weight, slot_index, slot_mask)"""
        mask = np.asarray(mask, dtype=bool)
        batch, slots = mask.shape
        if len(graphs) != batch:
            raise ShapeError(f"qg: {len(graphs)} graphs for a batch of {batch} jets")
        counts = mask.sum(axis=1)
        if np.any(counts == 0):
            raise ValueError("qg: jet with no real constituents")
        packed = [_packed(g) for g in graphs]
        for b, (index, _) in enumerate(packed):
            if index.shape[0] != counts[b]:
                raise ShapeError(f"qg: graph of jet {b} has {index.shape[0]} nodes, mask flags {counts[b]}")
            if not mask[b, :counts[b]].all():
                raise ShapeError(f"qg: real rows of jet {b} are not a prefix of the slots")

        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
        width = max(index.shape[1] for index, _ in packed)
        total = int(counts.sum())
        index = np.repeat(np.arange(total)[:, None], width, axis=1)
        weight = np.zeros((total, width))
        for (idx, w), start, n in zip(packed, offsets, counts):
            index[start:start + n, :idx.shape[1]] = idx + start
            weight[start:start + n, :w.shape[1]] = w

        real = np.flatnonzero(mask.reshape(-1))
        if isinstance(features, Tensor):
            nodes = T.gather(T.reshape(features, (batch * slots, -1)), real, axis=0)
        else:
            nodes = T.as_tensor(np.asarray(features, dtype=np.float64).reshape(batch * slots, -1)[real])
        _check_finite(nodes, self.name)

        max_n = int(counts.max())
        slot_index = offsets[:, None] + np.arange(max_n)[None, :]
        slot_mask = np.arange(max_n)[None, :] < counts[:, None]
        return nodes, (index, weight), np.where(slot_mask, slot_index, 0), slot_mask

    def forward(self, features, mask, graphs):
        """Logits [batch] for jets given padded features [batch, slots, 6], real masks and kNN graphs"""
        nodes, neighbors, slot_index, slot_mask = self._nodes(features, mask, graphs)
        outputs = []
        h = nodes
        for block in self.edgeconv:
            h = block(h, neighbors)
            outputs.append(h)
        pooled = segment_mean_pool(T.concat(outputs, axis=-1), slot_index, slot_mask)
        for dense, dropout in zip(self.head, self.head_dropout):
            pooled = dropout(T.relu(dense(pooled)))
        return T.reshape(self.out(pooled), (-1,))


class METRegressor(Module):
    """
    Transformer over track tokens with a learnable CLS token; no positional encoding.

    The head reads the CLS position and predicts |MET| in units of target_scale GeV.
    """

    task = 'met'

    def __init__(self, rng, architecture=None):
        super().__init__('met')
        self.architecture = _architecture(self.task, architecture)
        arch = self.architecture
        dim = arch['model_dim']
        self.embed = DenseLayer('met.embed', arch['inputs'], dim, rng)
        self.embed_norm = NormLayer('met.embed_norm', dim, kind='layer')
        self.cls = Parameter('met.cls', rng.normal(0.0, 0.02, size=dim))
        self.encoder = [TransformerEncoderLayer(f"met.encoder{i}", dim, arch['heads'], arch['ff_dim'], rng,
                                                dropout=arch['dropout'])
                        for i in range(arch['layers'])]
        self.head_norm = NormLayer('met.head.norm', dim, kind='layer')
        self.head_dense = DenseLayer('met.head.dense0', dim, arch['head_dim'], rng)
        self.head_dropout = DropoutLayer('met.head.dropout', arch['dropout'])
        self.head_out = DenseLayer('met.head.out', arch['head_dim'], 1, rng)
        self.target_scale = float(arch['target_scale'])

    def forward(self, features, mask):
        """Predicted MET in GeV, shape [batch]"""
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 2:
            raise ShapeError(f"met: expected [batch, tracks] mask, got {mask.shape}")
        if not mask.any(axis=1).all():
            raise ValueError("met: event with zero real tracks")
        batch, _ = mask.shape
        if isinstance(features, Tensor):
            x = T.mul(features, mask[:, :, None].astype(np.float64))
        else:
            x = T.as_tensor(np.where(mask[:, :, None], np.asarray(features, dtype=np.float64), 0.0))
        _check_finite(x, self.name)

        tokens = self.embed_norm(T.gelu(self.embed(x)))
        cls = T.add(np.zeros((batch, 1, self.architecture['model_dim'])), self.cls.tensor)
        seq = T.concat([cls, tokens], axis=1)
        seq_mask = np.concatenate([np.ones((batch, 1), dtype=bool), mask], axis=1)
        for layer in self.encoder:
            seq = layer(seq, seq_mask)

        h = self.head_norm(T.getitem(seq, (slice(None), 0)))
        h = self.head_dropout(T.gelu(self.head_dense(h)))
        return T.mul(T.reshape(self.head_out(h), (-1,)), self.target_scale)


MODEL_CLASSES = {'sb': SBClassifier, 'qg': QGTagger, 'met': METRegressor}


def build_model(task, rng, architecture=None):
    if task not in MODEL_CLASSES:
        raise ValueError(f"Unknown task {task!r}")
    model = MODEL_CLASSES[task](rng, architecture)
    logger.debug(f"Built {task} model with {sum(p.data.size for p in model.parameters())} parameters")
    return model


def sb_forward(model, x):
    """Signal probabilities for a batch of standardized SB feature vectors"""
    return model(x)


def qg_forward(model, sample, graph):
    """Logit of one jet; ``graph`` is the KnnGraph built from the same sample"""
    logits = model(sample.features[None], sample.real_mask[None], [graph])
    return T.reshape(logits, ())


def met_forward(model, sample):
    """Predicted MET of one event, GeV"""
    return T.reshape(model(sample.features[None], sample.real_mask[None]), ())
