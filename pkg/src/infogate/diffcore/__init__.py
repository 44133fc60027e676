"""Reverse-mode differentiation core."""

from .gradcheck import GradCheckReport, finite_diff_check, run_gradcheck_suite
from .optim import AdamState, adam_step
from .params import ParamSet, load_param_sets, save_param_sets
from .tensor import Graph, Tensor, backward, no_grad, precision

__all__ = [
    "AdamState",
    "GradCheckReport",
    "Graph",
    "ParamSet",
    "Tensor",
    "adam_step",
    "backward",
    "finite_diff_check",
    "load_param_sets",
    "no_grad",
    "precision",
    "run_gradcheck_suite",
    "save_param_sets",
]
