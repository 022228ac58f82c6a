from .layers import (
    AttentionBlock,
    Embedding,
    FeedForward,
    LayerNorm,
    Linear,
    PatchEmbed,
    TransformerBlock,
    UpConv2x,
    attn,
    feed_forward,
    patch_embed,
    upconv2x,
)
from .module import Module, set_frozen

__all__ = [
    'Module', 'set_frozen', 'Linear', 'LayerNorm', 'Embedding', 'AttentionBlock', 'FeedForward',
    'PatchEmbed', 'UpConv2x', 'TransformerBlock', 'attn', 'feed_forward', 'patch_embed', 'upconv2x',
]
