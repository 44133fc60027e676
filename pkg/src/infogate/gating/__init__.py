"""Input- and feature-space noise gates."""

from .gates import (
    GateConfig,
    GatedView,
    LambdaSchedule,
    NoiseSpec,
    gate_feature,
    gate_input,
    gated_embedding,
    lambda_at,
    random_mask,
    reversed_mask,
    sample_noise,
    shuffle_masks,
    sparsity_penalty,
)

__all__ = [
    "GateConfig",
    "GatedView",
    "LambdaSchedule",
    "NoiseSpec",
    "gate_feature",
    "gate_input",
    "gated_embedding",
    "lambda_at",
    "random_mask",
    "reversed_mask",
    "sample_noise",
    "shuffle_masks",
    "sparsity_penalty",
]
