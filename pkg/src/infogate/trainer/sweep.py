"""Sparsity-weight sweeps."""

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..errors import ValidationError
from ..gating.gates import GateConfig, LambdaSchedule
from ..nets.networks import NetConfig
from ..utils.rng import RngStreams
from ..worldgen.dataset import Dataset
from .loop import TrainConfig, train
from .probes import ProbeConfig, bc_probe

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ("lambda", "seed", "mean_gate", "probe_accuracy", "selectivity", "iou")


@dataclass
class SweepRow:
    lam: float
    seed: int
    mean_gate: float
    probe_accuracy: float
    selectivity: Optional[float] = None
    iou: Optional[float] = None

    def as_dict(self) -> Dict[str, object]:
        return {"lambda": self.lam, "seed": self.seed, "mean_gate": self.mean_gate,
                "probe_accuracy": self.probe_accuracy, "selectivity": self.selectivity, "iou": self.iou}


def lambda_sweep(train_cfg: TrainConfig, gate_cfg: GateConfig, net_cfg: NetConfig, probe_cfg: ProbeConfig,
                 lambdas: Sequence[float], seeds: Sequence[int], dataset: Dataset, eval_dataset: Dataset,
                 expert_dataset: Optional[Dataset] = None) -> List[SweepRow]:
    """Train and probe once per (lambda, seed); rows come back ordered by lambda then seed.

    The mean gate is measured on ``eval_dataset`` when gating is input-space
    and taken from the last training record otherwise. The probe trains on
    ``expert_dataset`` (``dataset`` when omitted) and scores ``eval_dataset``.
    """
    if len(lambdas) < 2:
        raise ValidationError(f"A sweep needs at least 2 lambda values, got {len(lambdas)}")
    if not seeds:
        raise ValidationError("A sweep needs at least one seed")
    expert_dataset = expert_dataset or dataset

    rows = []
    for lam in sorted(float(v) for v in lambdas):
        gate = replace(gate_cfg, schedule=LambdaSchedule(kind="constant", start=lam, end=lam))
        for seed in seeds:
            result = train(train_cfg, gate, net_cfg, dataset, seed=seed, eval_dataset=eval_dataset)
            report = result.final_mask_report
            mean_gate = report.mean_gate if report is not None else result.runlog.final["mean_gate"]
            probe = bc_probe(result.models.encoder, expert_dataset, eval_dataset, probe_cfg,
                             RngStreams.from_seed(seed).probe, mask_net=result.models.mask_net, gate_cfg=gate)
            row = SweepRow(lam=lam, seed=int(seed), mean_gate=float(mean_gate), probe_accuracy=probe.accuracy,
                           selectivity=None if report is None else report.selectivity,
                           iou=None if report is None else report.iou)
            logger.info("sweep_point | lambda=%g | seed=%d | mean_gate=%.4f | accuracy=%.4f",
                        lam, seed, row.mean_gate, row.probe_accuracy)
            rows.append(row)
    return rows


def summarize(rows: Sequence[SweepRow]) -> List[Dict[str, float]]:
    """Median mean-gate and accuracy per lambda, ordered by lambda."""
    summary = []
    for lam in sorted({r.lam for r in rows}):
        group = [r for r in rows if r.lam == lam]
        summary.append({"lambda": lam,
                        "mean_gate": float(np.median([r.mean_gate for r in group])),
                        "probe_accuracy": float(np.median([r.probe_accuracy for r in group]))})
    return summary


def write_sweep_csv(rows: Sequence[SweepRow], path: Union[str, Path], config_hash: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(SWEEP_COLUMNS) + ["config_hash"])
        writer.writeheader()
        for row in rows:
            writer.writerow({**row.as_dict(), "config_hash": config_hash})
    logger.info("sweep_written | path=%s | rows=%d", path, len(rows))
    return path
