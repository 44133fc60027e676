from dataclasses import replace

import numpy as np
import pytest

from infogate.diffcore.tensor import Tensor, backward
from infogate.errors import NumericalAbort, ValidationError
from infogate.gating.gates import GateConfig, LambdaSchedule
from infogate.nets.networks import NetConfig
from infogate.objectives.losses import LossBundle
from infogate.trainer import loop
from infogate.trainer.loop import TrainConfig, Trainer, reverse_mask_train, train
from infogate.trainer.runlog import RunLog, read_jsonl
from infogate.utils.rng import RngStreams


def snapshot(params):
    return {name: tensor.data.copy() for name, tensor in params.items()}


def unchanged(params, before):
    return all(np.array_equal(params[name].data, value) for name, value in before.items())


def grads(params):
    return {name: None if t.grad is None else t.grad.copy() for name, t in params.items()}


class TestTrainConfig:
    def test_steps_must_exceed_warmup(self, train_cfg):
        with pytest.raises(ValidationError, match="warm-up"):
            train_cfg.validate(GateConfig(warmup=5))

    def test_reverse_mask_needs_adversarial(self, train_cfg, gate_cfg):
        with pytest.raises(ValidationError, match="adversarial"):
            replace(train_cfg, reverse_mask=True).validate(gate_cfg)

    def test_unknown_objective(self, train_cfg, gate_cfg):
        with pytest.raises(ValidationError):
            replace(train_cfg, objective="autoencoder").validate(gate_cfg)

    def test_dataset_must_match_network(self, train_cfg, gate_cfg, dataset):
        with pytest.raises(ValidationError, match="do not match"):
            Trainer(train_cfg, gate_cfg, NetConfig(obs_shape=(3, 32, 32)), dataset)


class TestTrainingLoop:
    def test_run_log_records(self, train_cfg, gate_cfg, net_cfg, dataset, eval_dataset):
        result = train(train_cfg, gate_cfg, net_cfg, dataset, seed=0, eval_dataset=eval_dataset)
        assert [r["step"] for r in result.runlog.steps] == [0, 1, 2, 3, 4]
        assert [r["step"] for r in result.runlog.evals] == [1, 3, 4]
        assert result.final_mask_report is not None
        assert all(np.isfinite(r["total"]) for r in result.runlog.steps)

    def test_mask_frozen_during_warmup(self, train_cfg, gate_cfg, net_cfg, dataset):
        trainer = Trainer(train_cfg, gate_cfg, net_cfg, dataset)
        before = snapshot(trainer.models.mask_net.params)
        encoder_before = snapshot(trainer.models.encoder.params)
        trainer.train_step(0)
        trainer.train_step(1)
        assert unchanged(trainer.models.mask_net.params, before)
        assert not unchanged(trainer.models.encoder.params, encoder_before)
        trainer.train_step(2)
        assert not unchanged(trainer.models.mask_net.params, before)

    def test_same_seed_same_log(self, train_cfg, gate_cfg, net_cfg, dataset):
        a = train(train_cfg, gate_cfg, net_cfg, dataset, seed=3)
        b = train(train_cfg, gate_cfg, net_cfg, dataset, seed=3)
        assert a.runlog.steps == b.runlog.steps

    def test_forced_open_gate_reproduces_ungated_run(self, train_cfg, net_cfg, dataset):
        zero = LambdaSchedule(start=0.0, end=0.0)
        opened = train(train_cfg, GateConfig(force_open=True, schedule=zero, warmup=2),
                       net_cfg, dataset, seed=1)
        plain = train(train_cfg, GateConfig(enabled=False, schedule=zero, warmup=2), net_cfg, dataset, seed=1)
        assert opened.runlog.steps == plain.runlog.steps
        assert all(r["mean_gate"] == 1.0 for r in opened.runlog.steps)

    def test_non_learned_gates_skip_mask_evaluation(self, train_cfg, net_cfg, dataset, eval_dataset):
        result = train(train_cfg, GateConfig(random_keep_prob=0.5, warmup=2), net_cfg, dataset,
                       eval_dataset=eval_dataset)
        assert result.final_mask_report is None and result.runlog.evals == []

    def test_eval_records_leave_accuracy_empty_by_default(self, train_cfg, gate_cfg, net_cfg, dataset,
                                                                eval_dataset):
        result = train(train_cfg, gate_cfg, net_cfg, dataset, eval_dataset=eval_dataset)
        assert all(r["probe_accuracy"] is None for r in result.runlog.evals)

    def test_eval_records_fill_bc_accuracy(self, train_cfg, gate_cfg, net_cfg, dataset, eval_dataset, probe_cfg):
        cfg = replace(train_cfg, eval_probe=True)
        result = train(cfg, gate_cfg, net_cfg, dataset, eval_dataset=eval_dataset, probe_cfg=probe_cfg)
        assert [r["step"] for r in result.runlog.evals] == [1, 3, 4]
        assert all(0.0 <= r["probe_accuracy"] <= 1.0 for r in result.runlog.evals)
        assert all(r["iou"] is not None for r in result.runlog.evals)

    def test_bc_accuracy_recorded_without_learned_gates(self, train_cfg, net_cfg, dataset, eval_dataset, probe_cfg):
        cfg = replace(train_cfg, eval_probe=True)
        result = train(cfg, GateConfig(enabled=False, warmup=2), net_cfg, dataset, eval_dataset=eval_dataset,
                       probe_cfg=probe_cfg)
        assert result.final_mask_report is None
        assert len(result.runlog.evals) == 3
        assert all(r["mean_gate"] is None and r["probe_accuracy"] is not None for r in result.runlog.evals)

    def test_zero_task_weight_only_closes_gates(self, train_cfg, net_cfg, dataset):
        cfg = replace(train_cfg, task_weight=0.0, mask_lr=1e-2)
        gate = GateConfig(warmup=0, mix_unmasked=False, schedule=LambdaSchedule(start=1.0, end=1.0))
        trainer = Trainer(cfg, gate, net_cfg, dataset)
        encoder_before = snapshot(trainer.models.encoder.params)
        gates = [trainer.train_step(step).diagnostics["mean_gate"] for step in range(cfg.steps)]
        assert gates[-1] < gates[0]
        assert unchanged(trainer.models.encoder.params, encoder_before)

    @pytest.mark.parametrize("objective", ["forward", "td", "bc", "simsiam", "contrastive"])
    def test_other_objectives_train(self, objective, train_cfg, gate_cfg, net_cfg, dataset):
        cfg = replace(train_cfg, objective=objective, target_sync=2)
        result = train(cfg, gate_cfg, net_cfg, dataset)
        assert len(result.runlog.steps) == cfg.steps
        assert all(np.isfinite(r["task"]) for r in result.runlog.steps)

    def test_feature_gating_trains_gate_head(self, train_cfg, net_cfg, dataset):
        trainer = Trainer(train_cfg, GateConfig(location="feature", warmup=0), net_cfg, dataset)
        before = snapshot(trainer.models.feature_mask_net.params)
        trainer.train_step(0)
        assert not unchanged(trainer.models.feature_mask_net.params, before)

    def test_non_finite_loss_aborts(self, train_cfg, gate_cfg, net_cfg, dataset, monkeypatch):
        real = loop.objective_loss
        calls = []

        def flaky(*args, **kwargs):
            calls.append(1)
            bundle = real(*args, **kwargs)
            if len(calls) == 4:
                nan = Tensor(np.float32(np.nan))
                return LossBundle(task=nan, penalty=bundle.penalty, total=nan, diagnostics=bundle.diagnostics)
            return bundle

        monkeypatch.setattr(loop, "objective_loss", flaky)
        with pytest.raises(NumericalAbort) as excinfo:
            train(train_cfg, replace(gate_cfg, warmup=4), net_cfg, dataset)
        assert excinfo.value.last_good_step == 2


class TestAdversarial:
    def test_mask_and_encoder_both_move(self, train_cfg, net_cfg, dataset):
        trainer = Trainer(train_cfg, GateConfig(mode="adversarial", warmup=0), net_cfg, dataset)
        mask_before = snapshot(trainer.models.mask_net.params)
        encoder_before = snapshot(trainer.models.encoder.params)
        trainer.train_step(0)
        assert not unchanged(trainer.models.mask_net.params, mask_before)
        assert not unchanged(trainer.models.encoder.params, encoder_before)

    def test_penalty_sends_no_gradient_to_encoder(self, train_cfg, net_cfg, dataset):
        trainer = Trainer(train_cfg, GateConfig(mode="adversarial", warmup=0), net_cfg, dataset)
        batch, views = trainer.next_batch()
        bundle = trainer._loss(batch, views, 2.0)
        encoder = trainer.models.encoder.params

        backward(bundle.task)
        from_task = grads(encoder)
        trainer._clear_all()
        backward(bundle.total)
        from_total = grads(encoder)
        trainer._clear_all()
        backward(bundle.penalty)

        assert all(np.array_equal(from_task[name], from_total[name]) for name in from_task)
        assert all(t.grad is None or not np.any(t.grad) for _, t in encoder.items())
        assert np.abs(trainer.models.mask_net.params["final.w"].grad).sum() > 0

    def test_reverse_encoder_is_trained(self, train_cfg, net_cfg, dataset):
        gate = GateConfig(mode="adversarial", warmup=2)
        result = reverse_mask_train(train_cfg, gate, net_cfg, dataset, seed=0)
        assert result.reverse_encoder is not None and result.reverse_heads is not None
        assert not np.array_equal(result.reverse_encoder.params["fc.w"].data,
                                  result.models.encoder.params["fc.w"].data)


class TestRunLog:
    def test_lines_start_with_header_and_interleave(self):
        log = RunLog(seed=4, config_hash="abc", objective="inverse")
        log.add_step(0, 0.1, 1.0, 0.9, 1.09, 0.9)
        log.add_step(2, 0.1, 0.8, 0.7, 0.87, 0.7)
        log.add_eval(0)
        kinds = [line.split('"kind": "')[1].split('"')[0] for line in log.lines()]
        assert kinds == ["run", "step", "eval", "step"]

    def test_steps_must_increase(self):
        log = RunLog(seed=0)
        log.add_step(3, 0.1, 1.0, 1.0, 1.1, 1.0)
        with pytest.raises(ValidationError):
            log.add_step(3, 0.1, 1.0, 1.0, 1.1, 1.0)

    def test_files(self, tmp_path):
        log = RunLog(seed=1, config_hash="ff00")
        log.add_step(0, 0.5, 2.0, 1.0, 2.5, 1.0)
        records = read_jsonl(log.write_jsonl(tmp_path / "runlog.jsonl"))
        assert records[0] == {"kind": "run", "seed": 1, "config_hash": "ff00", "objective": ""}
        assert records[1]["total"] == 2.5
        log.write_csv(tmp_path / "steps.csv", tmp_path / "evals.csv")
        lines = (tmp_path / "steps.csv").read_text().splitlines()
        assert lines[0].endswith(",config_hash") and lines[1].endswith(",ff00")
        assert len((tmp_path / "evals.csv").read_text().splitlines()) == 1


def test_rng_streams_are_independent_and_repeatable():
    a, b = RngStreams.from_seed(9), RngStreams.from_seed(9)
    assert a.gate.random() == b.gate.random()
    draws = {name: getattr(RngStreams.from_seed(9), name).random() for name in ("init", "data", "gate", "probe")}
    assert len(set(draws.values())) == 4
