"""Cooperative and adversarial training loops."""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from tqdm import tqdm

from ..diffcore import ops
from ..diffcore.optim import AdamState, adam_step, adam_step_all
from ..diffcore.tensor import backward
from ..errors import NumericalAbort, ValidationError
from ..gating.gates import GateConfig, lambda_at, reversed_mask
from ..nets.networks import Encoder, Heads, Models, NetConfig
from ..objectives.losses import OBJECTIVES, LossBundle, objective_loss
from ..utils.rng import RngStreams
from ..worldgen.dataset import Batch, Dataset, augment_crop
from .probes import MaskReport, ProbeConfig, bc_probe, eval_masks
from .runlog import RunLog

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    objective: str = "inverse"
    batch_size: int = 128
    steps: int = 2000
    eval_interval: int = 500
    log_interval: int = 10
    lr: float = 1e-4
    mask_lr: float = 1e-4
    gamma: float = 0.99
    target_sync: int = 200
    crop_pad: int = 4
    augment: bool = True
    task_weight: float = 1.0
    reverse_mask: bool = False
    eval_probe: bool = False
    progress: bool = True

    def validate(self, gate: GateConfig) -> None:
        if self.objective not in OBJECTIVES:
            raise ValidationError(f"Unknown objective '{self.objective}' (expected one of {', '.join(OBJECTIVES)})")
        if self.batch_size < 2:
            raise ValidationError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.steps <= gate.warmup:
            raise ValidationError(f"steps ({self.steps}) must exceed warm-up steps ({gate.warmup})")
        if self.lr <= 0 or self.mask_lr <= 0:
            raise ValidationError("learning rates must be positive")
        if self.log_interval < 1 or self.eval_interval < 1 or self.target_sync < 1:
            raise ValidationError("log_interval, eval_interval and target_sync must be >= 1")
        if self.reverse_mask and gate.mode != "adversarial":
            raise ValidationError("reverse_mask training requires gate mode 'adversarial'")


@dataclass
class TrainResult:
    models: Models
    runlog: RunLog
    reverse_encoder: Optional[Encoder] = None
    reverse_heads: Optional[Heads] = None
    final_mask_report: Optional[MaskReport] = None


class Trainer:
    """One training run: models, optimizers, random streams and the run log."""

    def __init__(self, train_cfg: TrainConfig, gate_cfg: GateConfig, net_cfg: NetConfig, dataset: Dataset,
                 seed: int = 0, eval_dataset: Optional[Dataset] = None, config_hash: str = "",
                 probe_cfg: Optional[ProbeConfig] = None):
        gate_cfg.validate()
        train_cfg.validate(gate_cfg)
        if tuple(dataset.obs_shape) != tuple(net_cfg.obs_shape):
            raise ValidationError(f"Dataset observations {dataset.obs_shape} do not match "
                                  f"network input {tuple(net_cfg.obs_shape)}")
        if len(dataset) == 0:
            raise ValidationError("Training dataset is empty")
        self.cfg = train_cfg
        self.gate = gate_cfg
        self.dataset = dataset
        self.eval_dataset = eval_dataset
        self.probe_cfg = probe_cfg or ProbeConfig()
        self.rng = RngStreams.from_seed(seed)

        self.models = Models.build(net_cfg, self.rng.init)
        self.models.set_input_stats(*dataset.stats)
        if train_cfg.objective == "td":
            self.models.sync_target()
        self.encoder_opt = AdamState.for_params(self.models.encoder.params, lr=train_cfg.lr)
        self.heads_opt = AdamState.for_params(self.models.heads.params, lr=train_cfg.lr)
        self.mask_params = (self.models.mask_net if gate_cfg.location == "input"
                            else self.models.feature_mask_net).params
        self.mask_opt = AdamState.for_params(self.mask_params, lr=train_cfg.mask_lr)

        self.reverse_encoder = self.reverse_heads = None
        if train_cfg.reverse_mask:
            self.reverse_encoder = Encoder.build(net_cfg, self.rng.init)
            self.reverse_encoder.set_input_stats(*dataset.stats)
            self.reverse_heads = Heads.build(net_cfg, self.rng.init)
            self.reverse_opts = [(self.reverse_encoder.params, AdamState.for_params(self.reverse_encoder.params,
                                                                                      lr=train_cfg.lr)),
                                 (self.reverse_heads.params, AdamState.for_params(self.reverse_heads.params,
                                                                                    lr=train_cfg.lr))]
            self.reverse_gate = replace(gate_cfg, mix_unmasked=False, shuffle_prob=0.0)

        self.runlog = RunLog(seed=seed, config_hash=config_hash, objective=train_cfg.objective)

    # -- batches -------------------------------------------------------------

    def _crop(self, images: np.ndarray) -> np.ndarray:
        if not self.cfg.augment:
            return images
        return augment_crop(images, pad=self.cfg.crop_pad, rng=self.rng.data)

    def next_batch(self):
        raw = self.dataset.sample(self.rng.data, self.cfg.batch_size)
        views = None
        if self.cfg.objective in ("simsiam", "contrastive"):
            views = (self._crop(raw.obs), self._crop(raw.obs))
        batch = replace(raw, obs=self._crop(raw.obs), obs_k=self._crop(raw.obs_k), obs_next=self._crop(raw.obs_next))
        return batch, views

    # -- steps ---------------------------------------------------------------

    def _loss(self, batch: Batch, views, lam: float, gate: Optional[GateConfig] = None,
              **overrides) -> LossBundle:
        return objective_loss(self.cfg.objective, self.models, batch, gate or self.gate, self.rng.gate, lam=lam,
                              gamma=self.cfg.gamma, views=views, **overrides)

    def _weighted(self, bundle: LossBundle, lam: float):
        if self.cfg.task_weight == 1.0:
            return bundle.total
        return ops.add(ops.scale(bundle.task, self.cfg.task_weight), ops.scale(bundle.penalty, lam))

    @staticmethod
    def _check(bundle: LossBundle, step: int) -> None:
        if not np.isfinite(bundle.total.data).all():
            raise NumericalAbort(f"Non-finite loss at step {step}", last_good_step=step - 1)

    def _step_encoder(self) -> None:
        adam_step(self.models.encoder.params, self.encoder_opt)
        adam_step(self.models.heads.params, self.heads_opt)

    def _clear_all(self) -> None:
        for params in self.models.param_sets().values():
            params.zero_grad()

    def train_step(self, step: int) -> LossBundle:
        batch, views = self.next_batch()
        lam = lambda_at(self.gate.schedule, step)
        mask_active = self.gate.learned and step >= self.gate.warmup

        if self.gate.mode == "adversarial" and self.gate.learned:
            if mask_active:
                attack = self._loss(batch, views, lam)
                self._check(attack, step)
                backward(ops.neg(self._weighted(attack, lam)))
                adam_step(self.mask_params, self.mask_opt)
                self._clear_all()
            bundle = self._loss(batch, views, lam)
            self._check(bundle, step)
            backward(bundle.task)
            self._step_encoder()
            self._clear_all()
        else:
            bundle = self._loss(batch, views, lam)
            self._check(bundle, step)
            backward(self._weighted(bundle, lam))
            self._step_encoder()
            if mask_active:
                adam_step(self.mask_params, self.mask_opt)
            self._clear_all()

        if self.reverse_encoder is not None:
            mask_net = self.models.mask_net if self.gate.location == "input" else self.models.feature_mask_net
            reverse = self._loss(batch, views, lam, gate=self.reverse_gate, encoder=self.reverse_encoder,
                                 heads=self.reverse_heads, mask_net=reversed_mask(mask_net))
            self._check(reverse, step)
            backward(reverse.task)
            adam_step_all(self.reverse_opts)

        if self.cfg.objective == "td" and (step + 1) % self.cfg.target_sync == 0:
            self.models.sync_target()
        return bundle

    def evaluate(self, step: int) -> Optional[MaskReport]:
        """Mask report for learned input gates, plus BC accuracy when ``eval_probe`` is set."""
        if self.eval_dataset is None:
            return None
        report = accuracy = None
        if self.gate.location == "input" and self.gate.learned:
            report = eval_masks(self.models.mask_net, self.eval_dataset)
        if self.cfg.eval_probe:
            mask_net = self.models.mask_net if self.gate.location == "input" else self.models.feature_mask_net
            accuracy = bc_probe(self.models.encoder, self.dataset, self.eval_dataset, self.probe_cfg, self.rng.probe,
                                mask_net=mask_net, gate_cfg=self.gate).accuracy
        if report is None and accuracy is None:
            return None
        self.runlog.add_eval(step, report, probe_accuracy=accuracy)
        return report

    def train(self) -> TrainResult:
        cfg = self.cfg
        logger.info("train_started | objective=%s | mode=%s | location=%s | steps=%d | batch=%d | warmup=%d",
                    cfg.objective, self.gate.mode, self.gate.location, cfg.steps, cfg.batch_size, self.gate.warmup)
        report = None
        bar = tqdm(range(cfg.steps), desc=f"train/{cfg.objective}", disable=None if cfg.progress else True,
                   leave=False)
        for step in bar:
            try:
                bundle = self.train_step(step)
            except NumericalAbort as exc:
                if exc.last_good_step is None:
                    raise NumericalAbort(str(exc), last_good_step=step - 1) from exc
                raise
            last = step == cfg.steps - 1
            if step % cfg.log_interval == 0 or last:
                values = bundle.values()
                self.runlog.add_step(step, lambda_at(self.gate.schedule, step), values["task"], values["penalty"],
                                     values["total"], bundle.diagnostics["mean_gate"])
                logger.debug("train_step | step=%d | task=%.5f | penalty=%.5f | mean_gate=%.4f",
                             step, values["task"], values["penalty"], bundle.diagnostics["mean_gate"])
            if (step + 1) % cfg.eval_interval == 0 or last:
                report = self.evaluate(step)

        final = self.runlog.final
        logger.info("train_finished | steps=%d | task=%.5f | mean_gate=%.4f",
                    cfg.steps, final.get("task", float("nan")), final.get("mean_gate", float("nan")))
        return TrainResult(models=self.models, runlog=self.runlog, reverse_encoder=self.reverse_encoder,
                           reverse_heads=self.reverse_heads, final_mask_report=report)


def train(train_cfg: TrainConfig, gate_cfg: GateConfig, net_cfg: NetConfig, dataset: Dataset, seed: int = 0,
          eval_dataset: Optional[Dataset] = None, config_hash: str = "",
          probe_cfg: Optional[ProbeConfig] = None) -> TrainResult:
    return Trainer(train_cfg, gate_cfg, net_cfg, dataset, seed, eval_dataset, config_hash, probe_cfg).train()


def reverse_mask_train(train_cfg: TrainConfig, gate_cfg: GateConfig, net_cfg: NetConfig, dataset: Dataset,
                       seed: int = 0, eval_dataset: Optional[Dataset] = None, config_hash: str = "",
                       probe_cfg: Optional[ProbeConfig] = None) -> TrainResult:
    """Adversarial training plus a second encoder fed the complement of the gates."""
    return train(replace(train_cfg, reverse_mask=True), gate_cfg, net_cfg, dataset, seed, eval_dataset, config_hash,
                 probe_cfg)
