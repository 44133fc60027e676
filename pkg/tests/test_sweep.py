import csv

import pytest

from infogate.errors import ValidationError
from infogate.trainer.sweep import SweepRow, lambda_sweep, summarize, write_sweep_csv


def test_sweep_rows_ordered_by_lambda_then_seed(train_cfg, gate_cfg, net_cfg, probe_cfg, dataset, eval_dataset):
    rows = lambda_sweep(train_cfg, gate_cfg, net_cfg, probe_cfg, [1.0, 0.01], [1, 0], dataset, eval_dataset)
    assert [(r.lam, r.seed) for r in rows] == [(0.01, 1), (0.01, 0), (1.0, 1), (1.0, 0)]
    assert all(0.0 < r.mean_gate < 1.0 and r.iou is not None for r in rows)


@pytest.mark.parametrize("lambdas,seeds", [([0.1], [0]), ([0.1, 1.0], [])])
def test_sweep_needs_two_lambdas_and_a_seed(lambdas, seeds, train_cfg, gate_cfg, net_cfg, probe_cfg, dataset,
                                             eval_dataset):
    with pytest.raises(ValidationError):
        lambda_sweep(train_cfg, gate_cfg, net_cfg, probe_cfg, lambdas, seeds, dataset, eval_dataset)


def test_summary_takes_medians():
    rows = [SweepRow(0.1, 0, 0.9, 0.5), SweepRow(0.1, 1, 0.7, 0.7), SweepRow(0.1, 2, 0.8, 0.2),
            SweepRow(1.0, 0, 0.2, 0.4)]
    assert summarize(rows) == [{"lambda": 0.1, "mean_gate": 0.8, "probe_accuracy": 0.5},
                               {"lambda": 1.0, "mean_gate": 0.2, "probe_accuracy": 0.4}]


def test_csv_layout(tmp_path):
    rows = [SweepRow(0.1, 0, 0.9, 0.5, selectivity=2.0, iou=0.3), SweepRow(1.0, 0, 0.2, 0.4)]
    path = write_sweep_csv(rows, tmp_path / "out" / "sweep.csv", config_hash="0123abcd4567")
    with open(path, newline="") as f:
        records = list(csv.DictReader(f))
    assert list(records[0]) == ["lambda", "seed", "mean_gate", "probe_accuracy", "selectivity", "iou", "config_hash"]
    assert records[0]["iou"] == "0.3" and records[1]["iou"] == ""
    assert {r["config_hash"] for r in records} == {"0123abcd4567"}
