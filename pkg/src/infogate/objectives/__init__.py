"""Training objectives with gating."""

from .losses import (
    OBJECTIVES,
    LossBundle,
    QNet,
    bc_gated_loss,
    contrastive_loss,
    cross_entropy,
    forward_dynamics_loss,
    infonce,
    inverse_dynamics_loss,
    negative_cosine,
    objective_loss,
    simsiam_gated_loss,
    td_gated_loss,
    td_residual_loss,
    td_target,
)

__all__ = [
    "OBJECTIVES",
    "LossBundle",
    "QNet",
    "bc_gated_loss",
    "contrastive_loss",
    "cross_entropy",
    "forward_dynamics_loss",
    "infonce",
    "inverse_dynamics_loss",
    "negative_cosine",
    "objective_loss",
    "simsiam_gated_loss",
    "td_gated_loss",
    "td_residual_loss",
    "td_target",
]
