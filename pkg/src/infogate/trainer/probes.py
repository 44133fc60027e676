"""Probes over frozen representations and mask-quality statistics."""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np

from ..diffcore import ops
from ..diffcore.optim import AdamState, adam_step
from ..diffcore.params import ParamSet
from ..diffcore.tensor import Tensor, backward, no_grad
from ..errors import ValidationError
from ..gating.gates import GateConfig, gated_embedding
from ..nets.networks import Encoder, MaskNet
from ..objectives.losses import cross_entropy
from ..worldgen.dataset import Dataset
from ..worldgen.env import ACTIONS, EnvConfig, env_reset, env_step, render

logger = logging.getLogger(__name__)

SELECTIVITY_CAP = 1e6


@dataclass
class ProbeConfig:
    steps: int = 2000
    lr: float = 1e-3
    batch_size: int = 128
    hidden: int = 128
    gated: bool = False
    rollout_episodes: int = 0

    def validate(self) -> None:
        if self.steps < 1 or self.batch_size < 1 or self.hidden < 1:
            raise ValidationError("probe steps, batch_size and hidden must be >= 1")
        if self.lr <= 0:
            raise ValidationError(f"probe lr must be positive, got {self.lr}")


@dataclass
class ProbeResult:
    accuracy: float
    train_accuracy: float
    head: ParamSet


@dataclass
class MaskReport:
    mean_gate: float
    relevant_gate: float
    background_gate: float
    selectivity: float
    iou: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class RolloutReport:
    mean_return: float
    success_rate: float
    episodes: int


def _probe_logits(head: ParamSet, features: Tensor) -> Tensor:
    hidden = ops.relu(ops.affine(features, head["fc0.w"], head["fc0.b"]))
    return ops.affine(hidden, head["fc1.w"], head["fc1.b"])


def fit_probe(train_x: np.ndarray, train_y: np.ndarray, eval_x: np.ndarray, eval_y: np.ndarray,
              cfg: ProbeConfig, rng: np.random.Generator, n_actions: int = len(ACTIONS)) -> ProbeResult:
    """Train a two-layer classifier on fixed features and score held-out rows."""
    cfg.validate()
    if len(train_x) == 0 or len(eval_x) == 0:
        raise ValidationError("Probe needs non-empty training and evaluation sets")
    width = train_x.shape[1]
    bound_in, bound_hidden = np.sqrt(1.0 / width), np.sqrt(1.0 / cfg.hidden)
    head = ParamSet({
        "fc0.w": rng.uniform(-bound_in, bound_in, (width, cfg.hidden)),
        "fc0.b": rng.uniform(-bound_in, bound_in, cfg.hidden),
        "fc1.w": rng.uniform(-bound_hidden, bound_hidden, (cfg.hidden, n_actions)),
        "fc1.b": rng.uniform(-bound_hidden, bound_hidden, n_actions),
    })
    state = AdamState.for_params(head, lr=cfg.lr)
    for _ in range(cfg.steps):
        idx = rng.integers(0, len(train_x), size=cfg.batch_size)
        loss = cross_entropy(_probe_logits(head, Tensor(train_x[idx])), train_y[idx])
        backward(loss)
        adam_step(head, state)

    def accuracy(x, y) -> float:
        with no_grad():
            return float((_probe_logits(head, Tensor(x)).data.argmax(axis=1) == y).mean())

    result = ProbeResult(accuracy=accuracy(eval_x, eval_y), train_accuracy=accuracy(train_x, train_y), head=head)
    logger.info("probe_fitted | accuracy=%.4f | train_accuracy=%.4f", result.accuracy, result.train_accuracy)
    return result


def encode_dataset(encoder: Encoder, obs: np.ndarray, batch_size: int = 256, mask_net=None,
                   gate_cfg: Optional[GateConfig] = None, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Frozen features for every observation, optionally through the gate."""
    chunks = []
    with no_grad():
        for start in range(0, len(obs), batch_size):
            x = Tensor(obs[start:start + batch_size])
            if gate_cfg is None:
                chunks.append(encoder(x).data)
            else:
                chunks.append(gated_embedding(encoder, mask_net, x, gate_cfg, rng).z.data)
    return np.concatenate(chunks) if chunks else np.zeros((0, encoder.cfg.d_z), dtype=np.float32)


def bc_probe(encoder: Encoder, expert_dataset: Dataset, eval_dataset: Dataset, cfg: ProbeConfig,
             rng: np.random.Generator, mask_net=None, gate_cfg: Optional[GateConfig] = None) -> ProbeResult:
    """Behaviour-cloning accuracy of a head trained over the frozen encoder.

    Features come from raw observations unless ``cfg.gated`` is set and the
    run did not mix ungated inputs; with mixed inputs the mask network is never
    called here.
    """
    if len(expert_dataset) == 0 or len(eval_dataset) == 0:
        raise ValidationError("bc_probe needs non-empty expert and evaluation datasets")
    use_gate = cfg.gated and gate_cfg is not None and gate_cfg.enabled and not gate_cfg.mix_unmasked
    gate = gate_cfg if use_gate else None
    train_x = encode_dataset(encoder, expert_dataset.obs, mask_net=mask_net, gate_cfg=gate, rng=rng)
    eval_x = encode_dataset(encoder, eval_dataset.obs, mask_net=mask_net, gate_cfg=gate, rng=rng)
    return fit_probe(train_x, np.asarray(expert_dataset.expert_action), eval_x,
                     np.asarray(eval_dataset.expert_action), cfg, rng, n_actions=encoder.cfg.n_actions)


def policy_rollout(encoder: Encoder, head: ParamSet, env_cfg: EnvConfig, episodes: int, seed: int) -> RolloutReport:
    """Act greedily with the probe head in noise-free observations."""
    if episodes < 1:
        raise ValidationError(f"episodes must be >= 1, got {episodes}")
    returns, reached = [], 0
    for episode in range(episodes):
        state = env_reset(env_cfg, np.random.SeedSequence([seed, episode]))
        total = 0.0
        for _ in range(env_cfg.episode_length - 1):
            obs, _ = render(state, eval_mode=True)
            with no_grad():
                logits = _probe_logits(head, encoder(Tensor(obs[None])))
            state = env_step(state, int(logits.data[0].argmax()))
            total += state.reward
        returns.append(total)
        reached += int(state.agent == state.goal)
    report = RolloutReport(mean_return=float(np.mean(returns)), success_rate=reached / episodes, episodes=episodes)
    logger.info("rollout | episodes=%d | mean_return=%.4f | success_rate=%.3f",
                episodes, report.mean_return, report.success_rate)
    return report


def mask_report(gates: np.ndarray, relevance: np.ndarray, threshold: float = 0.5) -> MaskReport:
    """Statistics of gates (N,H,W) against relevance maps (N,H,W)."""
    gates = np.asarray(gates, dtype=np.float64)
    relevance = np.asarray(relevance, dtype=bool)
    if gates.shape != relevance.shape:
        raise ValidationError(f"gates {gates.shape} and relevance {relevance.shape} differ")
    relevant = float(gates[relevance].mean()) if relevance.any() else 0.0
    background = float(gates[~relevance].mean()) if (~relevance).any() else 0.0
    if background > 0:
        selectivity = min(relevant / background, SELECTIVITY_CAP)
    else:
        selectivity = SELECTIVITY_CAP if relevant > 0 else 0.0

    kept = gates >= threshold
    axes = tuple(range(1, gates.ndim))
    intersection = (kept & relevance).sum(axis=axes)
    union = (kept | relevance).sum(axis=axes)
    iou = np.where(union > 0, intersection / np.maximum(union, 1), 1.0)
    return MaskReport(mean_gate=float(gates.mean()), relevant_gate=relevant, background_gate=background,
                      selectivity=float(selectivity), iou=float(iou.mean()))


def mask_gates(mask_net: MaskNet, obs: np.ndarray, batch_size: int = 64) -> np.ndarray:
    chunks = []
    with no_grad():
        for start in range(0, len(obs), batch_size):
            chunks.append(mask_net(Tensor(obs[start:start + batch_size])).data[:, 0])
    return np.concatenate(chunks)


def eval_masks(mask_net: MaskNet, dataset: Dataset, threshold: float = 0.5, batch_size: int = 64) -> MaskReport:
    if len(dataset) == 0:
        raise ValidationError("eval_masks needs a non-empty dataset")
    report = mask_report(mask_gates(mask_net, dataset.obs, batch_size), dataset.relevance, threshold)
    logger.info("mask_eval | mean_gate=%.4f | selectivity=%.3f | iou=%.4f",
                report.mean_gate, report.selectivity, report.iou)
    return report
