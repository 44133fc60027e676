"""Training loops, probes, sweeps and run logs."""

from .loop import TrainConfig, Trainer, TrainResult, reverse_mask_train, train
from .probes import (
    MaskReport,
    ProbeConfig,
    ProbeResult,
    RolloutReport,
    bc_probe,
    eval_masks,
    fit_probe,
    mask_report,
    policy_rollout,
)
from .runlog import RunLog
from .sweep import SweepRow, lambda_sweep, summarize, write_sweep_csv

__all__ = [
    "MaskReport",
    "ProbeConfig",
    "ProbeResult",
    "RolloutReport",
    "RunLog",
    "SweepRow",
    "TrainConfig",
    "TrainResult",
    "Trainer",
    "bc_probe",
    "eval_masks",
    "fit_probe",
    "lambda_sweep",
    "mask_report",
    "policy_rollout",
    "reverse_mask_train",
    "summarize",
    "train",
    "write_sweep_csv",
]
