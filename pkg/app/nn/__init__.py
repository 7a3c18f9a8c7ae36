"""
Composable layers recorded on the autodiff tape
"""

from app.nn.layers import (
    DenseLayer,
    DropoutLayer,
    EdgeConvBlock,
    FeedForward,
    Module,
    MultiHeadAttention,
    NormLayer,
    TransformerEncoderLayer,
    global_mean_pool,
    pack_neighbors,
    segment_mean_pool,
)

__all__ = [
    'DenseLayer', 'DropoutLayer', 'EdgeConvBlock', 'FeedForward', 'Module', 'MultiHeadAttention',
    'NormLayer', 'TransformerEncoderLayer', 'global_mean_pool', 'pack_neighbors', 'segment_mean_pool',
]
