"""DistractorDot environment and offline datasets."""

from .dataset import Batch, Dataset, augment_crop, generate_dataset, load_dataset, save_dataset
from .env import ACTIONS, EnvConfig, EnvState, env_reset, env_step, expert_action, render

__all__ = [
    "ACTIONS",
    "Batch",
    "Dataset",
    "EnvConfig",
    "EnvState",
    "augment_crop",
    "env_reset",
    "env_step",
    "expert_action",
    "generate_dataset",
    "load_dataset",
    "render",
    "save_dataset",
]
