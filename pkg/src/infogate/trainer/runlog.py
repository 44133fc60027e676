"""Per-step and per-evaluation training records."""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from ..errors import ValidationError

logger = logging.getLogger(__name__)

STEP_KEYS = ("kind", "step", "lambda", "task", "penalty", "total", "mean_gate")
EVAL_KEYS = ("kind", "step", "mean_gate", "relevant_gate", "background_gate", "selectivity", "iou",
             "probe_accuracy")


@dataclass
class RunLog:
    seed: int
    config_hash: str = ""
    objective: str = ""
    steps: List[Dict[str, Any]] = field(default_factory=list)
    evals: List[Dict[str, Any]] = field(default_factory=list)

    def add_step(self, step: int, lam: float, task: float, penalty: float, total: float, mean_gate: float) -> None:
        if self.steps and step <= self.steps[-1]["step"]:
            raise ValidationError(f"Step records must increase: {step} after {self.steps[-1]['step']}")
        self.steps.append({"kind": "step", "step": step, "lambda": lam, "task": task, "penalty": penalty,
                           "total": total, "mean_gate": mean_gate})

    def add_eval(self, step: int, report=None, probe_accuracy: Optional[float] = None) -> None:
        if self.evals and step <= self.evals[-1]["step"]:
            raise ValidationError(f"Eval records must increase: {step} after {self.evals[-1]['step']}")
        record = {key: None for key in EVAL_KEYS}
        record.update(kind="eval", step=step, probe_accuracy=probe_accuracy)
        if report is not None:
            record.update(report.as_dict())
        self.evals.append(record)

    def header(self) -> Dict[str, Any]:
        return {"kind": "run", "seed": self.seed, "config_hash": self.config_hash, "objective": self.objective}

    def lines(self) -> List[str]:
        records = [self.header()] + sorted(self.steps + self.evals, key=lambda r: (r["step"], r["kind"] == "eval"))
        return [json.dumps(r, sort_keys=True) for r in records]

    def write_jsonl(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.lines()) + "\n", encoding="utf-8")
        logger.info("runlog_written | path=%s | steps=%d | evals=%d", path, len(self.steps), len(self.evals))
        return path

    def write_csv(self, steps_path: Union[str, Path], evals_path: Optional[Union[str, Path]] = None) -> None:
        _write_rows(steps_path, STEP_KEYS, self.steps, self.config_hash)
        if evals_path is not None:
            _write_rows(evals_path, EVAL_KEYS, self.evals, self.config_hash)

    @property
    def final(self) -> Dict[str, Any]:
        return self.steps[-1] if self.steps else {}


def _write_rows(path, keys, rows, config_hash: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(keys) + ["config_hash"])
        writer.writeheader()
        for row in rows:
            writer.writerow({**{k: row.get(k) for k in keys}, "config_hash": config_hash})


def read_jsonl(path: Union[str, Path]) -> List[Dict[str, Any]]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
