"""Network construction and forward passes."""

from .networks import (
    Encoder,
    Heads,
    MaskNet,
    Models,
    NetConfig,
    build_encoder,
    build_feature_mask_net,
    build_heads,
    build_mask_net,
    encode,
    mask_forward,
    score_energy,
)

__all__ = [
    "Encoder",
    "Heads",
    "MaskNet",
    "Models",
    "NetConfig",
    "build_encoder",
    "build_feature_mask_net",
    "build_heads",
    "build_mask_net",
    "encode",
    "mask_forward",
    "score_energy",
]
