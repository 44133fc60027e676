"""Gated training objectives.

Each loss gates its observations, computes the task term, adds the ungated
task term when mixed inputs are on, and returns a LossBundle whose total is
``task + lam * penalty``. An ungated pipeline reports the penalty of an
all-open gate (1 per observation) so its totals line up with forced-open runs.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..diffcore import ops
from ..diffcore.tensor import Tensor, no_grad
from ..errors import NumericalAbort, ValidationError
from ..gating.gates import GateConfig, GatedView, gated_embedding
from ..nets.networks import Encoder, Heads, Models
from ..worldgen.dataset import Batch

logger = logging.getLogger(__name__)

OBJECTIVES = ("inverse", "forward", "td", "bc", "simsiam", "contrastive")


@dataclass
class LossBundle:
    task: Tensor
    penalty: Tensor
    total: Tensor
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def values(self) -> Dict[str, float]:
        return {"task": self.task.item(), "penalty": self.penalty.item(), "total": self.total.item()}


def infonce(pos_score: Tensor, neg_scores: Tensor) -> Tensor:
    """Mean of ``-log(e^pos / (e^pos + sum e^neg))`` over the batch.

    Raises:
        ValidationError: If there are no negatives or the shapes disagree
        NumericalAbort: If any score is not finite
    """
    if neg_scores.ndim != 2 or neg_scores.shape[1] < 1 or pos_score.shape != (neg_scores.shape[0],):
        raise ValidationError(f"infonce needs pos (B,) and neg (B,N>=1), got {pos_score.shape} and {neg_scores.shape}")
    if not (np.isfinite(pos_score.data).all() and np.isfinite(neg_scores.data).all()):
        raise NumericalAbort("infonce received non-finite scores")
    batch = pos_score.shape[0]
    logits = ops.concat([ops.reshape(pos_score, (batch, 1)), neg_scores], axis=1)
    return ops.mean(ops.sub(ops.logsumexp(logits, axis=1), pos_score))


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (logits.shape[0],):
        raise ValidationError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValidationError(f"Action id out of range [0, {logits.shape[1]})")
    picked = ops.reshape(ops.gather_cols(logits, labels[:, None]), (logits.shape[0],))
    return ops.mean(ops.sub(ops.logsumexp(logits, axis=1), picked))


def negative_cosine(p: Tensor, z: Tensor) -> Tensor:
    """``-<p/|p|, z/|z|>`` averaged over rows, with ``z`` detached."""
    aligned = ops.mul(ops.l2_normalize(p), ops.l2_normalize(ops.stop_gradient(z)))
    return ops.neg(ops.mean(ops.sum(aligned, axis=1)))


def td_target(reward, gamma: float, q_next) -> np.ndarray:
    return np.asarray(reward) + gamma * np.asarray(q_next)


def td_residual_loss(q_taken: Tensor, target: np.ndarray) -> Tensor:
    residual = ops.sub(q_taken, Tensor(np.broadcast_to(target, q_taken.shape)))
    return ops.mean(ops.mul(residual, residual))


@dataclass
class QNet:
    encoder: Encoder
    heads: Heads

    def __call__(self, x: Tensor) -> Tensor:
        return self.heads.q_values(self.encoder(x))


def _mixing(cfg: GateConfig) -> bool:
    return cfg.enabled and cfg.mix_unmasked and not cfg.force_open


def _penalty(views: Sequence[GatedView]) -> Tensor:
    terms = [v.penalty if v.mask is not None else Tensor(np.float32(1.0)) for v in views]
    out = terms[0]
    for term in terms[1:]:
        out = ops.add(out, term)
    return out


def _bundle(task: Tensor, views: Sequence[GatedView], lam: float, diagnostics: Dict[str, float]) -> LossBundle:
    penalty = _penalty(views)
    total = ops.add(task, ops.scale(penalty, lam))
    diagnostics["mean_gate"] = float(np.mean([v.mean_gate for v in views]))
    return LossBundle(task=task, penalty=penalty, total=total, diagnostics=diagnostics)


def _with_plain(task: Tensor, plain: Optional[Tensor], diagnostics: Dict[str, float]) -> Tensor:
    diagnostics["task_gated"] = task.item()
    if plain is None:
        return task
    diagnostics["task_plain"] = plain.item()
    return ops.add(task, plain)


def _inverse_task(heads: Heads, z_t: Tensor, z_k: Tensor, actions: np.ndarray) -> Tuple[Tensor, Tensor, Tensor]:
    n_actions = heads.cfg.n_actions
    scores = heads.all_energies(z_t, z_k)
    others = np.array([[b for b in range(n_actions) if b != a] for a in actions], dtype=np.int64)
    pos = ops.reshape(ops.gather_cols(scores, actions[:, None]), (len(actions),))
    neg = ops.gather_cols(scores, others)
    return infonce(pos, neg), pos, neg


def inverse_dynamics_loss(encoder: Encoder, mask_net, heads: Heads, batch: Batch, gate_cfg: GateConfig,
                          rng: np.random.Generator, lam: float = 0.0) -> LossBundle:
    """Contrast the taken action against every other action given (x_t, x_{t+k})."""
    if heads.cfg.n_actions < 2:
        raise ValidationError("inverse dynamics needs at least 2 actions")
    actions = np.asarray(batch.action, dtype=np.int64)
    mix = _mixing(gate_cfg)
    view_t = gated_embedding(encoder, mask_net, Tensor(batch.obs), gate_cfg, rng, want_plain=mix)
    view_k = gated_embedding(encoder, mask_net, Tensor(batch.obs_k), gate_cfg, rng, want_plain=mix)

    task, pos, neg = _inverse_task(heads, view_t.z, view_k.z, actions)
    diagnostics = {"pos_score_mean": float(pos.data.mean()), "neg_score_mean": float(neg.data.mean())}
    plain = _inverse_task(heads, view_t.z_plain, view_k.z_plain, actions)[0] if mix else None
    return _bundle(_with_plain(task, plain, diagnostics), [view_t, view_k], lam, diagnostics)


def _forward_task(heads: Heads, z_t: Tensor, z_k: Tensor, actions: np.ndarray) -> Tuple[Tensor, Tensor, Tensor]:
    batch = z_t.shape[0]
    predicted = heads.project(z_t, actions)
    scores = ops.scale(ops.matmul(predicted, ops.transpose(z_k)), 1.0 / np.sqrt(heads.cfg.d_z))
    rows = np.arange(batch)
    others = np.array([[j for j in range(batch) if j != i] for i in range(batch)], dtype=np.int64)
    pos = ops.reshape(ops.gather_cols(scores, rows[:, None]), (batch,))
    neg = ops.gather_cols(scores, others)
    return infonce(pos, neg), pos, neg


def forward_dynamics_loss(encoder: Encoder, mask_net, heads: Heads, batch: Batch, gate_cfg: GateConfig,
                          rng: np.random.Generator, lam: float = 0.0) -> LossBundle:
    """Match g(z_t, a_t) to its own future embedding against the rest of the batch."""
    if len(batch) < 2:
        raise ValidationError("forward dynamics needs a batch of at least 2 for in-batch negatives")
    actions = np.asarray(batch.action, dtype=np.int64)
    mix = _mixing(gate_cfg)
    view_t = gated_embedding(encoder, mask_net, Tensor(batch.obs), gate_cfg, rng, want_plain=mix)
    view_k = gated_embedding(encoder, mask_net, Tensor(batch.obs_k), gate_cfg, rng, want_plain=mix)

    task, pos, neg = _forward_task(heads, view_t.z, view_k.z, actions)
    diagnostics = {"pos_score_mean": float(pos.data.mean()), "neg_score_mean": float(neg.data.mean())}
    plain = _forward_task(heads, view_t.z_plain, view_k.z_plain, actions)[0] if mix else None
    return _bundle(_with_plain(task, plain, diagnostics), [view_t, view_k], lam, diagnostics)


def td_gated_loss(qnet: QNet, target_qnet: QNet, mask_net, batch: Batch, gamma: float, gate_cfg: GateConfig,
                  rng: np.random.Generator, lam: float = 0.0) -> LossBundle:
    """Squared TD error with only x_t gated; the target acts greedily on ungated x_{t+1}."""
    if not 0.0 <= gamma < 1.0:
        raise ValidationError(f"gamma must be in [0, 1), got {gamma}")
    actions = np.asarray(batch.action, dtype=np.int64)
    rows = np.arange(len(actions))
    with no_grad():
        q_next = target_qnet(Tensor(batch.obs_next)).data
    target = td_target(batch.reward, gamma, q_next[rows, q_next.argmax(axis=1)])

    mix = _mixing(gate_cfg)
    view = gated_embedding(qnet.encoder, mask_net, Tensor(batch.obs), gate_cfg, rng, want_plain=mix)

    def residual(z: Tensor) -> Tensor:
        q_taken = ops.reshape(ops.gather_cols(qnet.heads.q_values(z), actions[:, None]), (len(actions),))
        return td_residual_loss(q_taken, target)

    diagnostics = {"target_mean": float(target.mean())}
    plain = residual(view.z_plain) if mix else None
    return _bundle(_with_plain(residual(view.z), plain, diagnostics), [view], lam, diagnostics)


def bc_gated_loss(encoder: Encoder, mask_net, heads: Heads, batch: Batch, gate_cfg: GateConfig,
                  rng: np.random.Generator, lam: float = 0.0) -> LossBundle:
    labels = np.asarray(batch.expert_action, dtype=np.int64)
    mix = _mixing(gate_cfg)
    view = gated_embedding(encoder, mask_net, Tensor(batch.obs), gate_cfg, rng, want_plain=mix)
    logits = heads.policy_logits(view.z)
    diagnostics = {"accuracy": float((logits.data.argmax(axis=1) == labels).mean())}
    plain = cross_entropy(heads.policy_logits(view.z_plain), labels) if mix else None
    return _bundle(_with_plain(cross_entropy(logits, labels), plain, diagnostics), [view], lam, diagnostics)


def _simsiam_pair(heads: Heads, z1: Tensor, z2: Tensor) -> Tensor:
    first = negative_cosine(heads.predict(z1), z2)
    second = negative_cosine(heads.predict(z2), z1)
    return ops.scale(ops.add(first, second), 0.5)


def simsiam_gated_loss(encoder: Encoder, mask_net, heads: Heads, view1: np.ndarray, view2: np.ndarray,
                       gate_cfg: GateConfig, rng: np.random.Generator, lam: float = 0.0) -> LossBundle:
    """Symmetric SimSiam on gated views plus the same loss on the ungated views."""
    g1 = gated_embedding(encoder, mask_net, Tensor(view1), gate_cfg, rng, want_plain=True)
    g2 = gated_embedding(encoder, mask_net, Tensor(view2), gate_cfg, rng, want_plain=True)
    diagnostics: Dict[str, float] = {}
    if not gate_cfg.enabled:
        task = _with_plain(_simsiam_pair(heads, g1.z, g2.z), None, diagnostics)
    else:
        task = _with_plain(_simsiam_pair(heads, g1.z, g2.z), _simsiam_pair(heads, g1.z_plain, g2.z_plain),
                           diagnostics)
    return _bundle(task, [g1, g2], lam, diagnostics)


def _view_contrast(z1: Tensor, z2: Tensor, d_z: int) -> Tensor:
    batch = z1.shape[0]
    scores = ops.scale(ops.matmul(z1, ops.transpose(z2)), 1.0 / np.sqrt(d_z))
    others = np.array([[j for j in range(batch) if j != i] for i in range(batch)], dtype=np.int64)
    pos = ops.reshape(ops.gather_cols(scores, np.arange(batch)[:, None]), (batch,))
    return infonce(pos, ops.gather_cols(scores, others))


def contrastive_loss(encoder: Encoder, mask_net, heads: Heads, view1: np.ndarray, view2: np.ndarray,
                     gate_cfg: GateConfig, rng: np.random.Generator, lam: float = 0.0) -> LossBundle:
    """InfoNCE between two crops of the same observation, in-batch negatives."""
    if view1.shape[0] < 2:
        raise ValidationError("contrastive loss needs a batch of at least 2")
    mix = _mixing(gate_cfg)
    g1 = gated_embedding(encoder, mask_net, Tensor(view1), gate_cfg, rng, want_plain=mix)
    g2 = gated_embedding(encoder, mask_net, Tensor(view2), gate_cfg, rng, want_plain=mix)
    d_z = heads.cfg.d_z
    diagnostics: Dict[str, float] = {}
    plain = _view_contrast(g1.z_plain, g2.z_plain, d_z) if mix else None
    return _bundle(_with_plain(_view_contrast(g1.z, g2.z, d_z), plain, diagnostics), [g1, g2], lam, diagnostics)


def objective_loss(objective: str, models: Models, batch: Batch, gate_cfg: GateConfig, rng: np.random.Generator,
                   lam: float = 0.0, gamma: float = 0.99, views: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                   encoder: Optional[Encoder] = None, heads: Optional[Heads] = None, mask_net=None) -> LossBundle:
    """Dispatch on the objective name.

    ``encoder``/``heads``/``mask_net`` override the ones in ``models``; the
    reverse-mask encoder uses this to share the loss code.
    """
    encoder = encoder or models.encoder
    heads = heads or models.heads
    if mask_net is None:
        mask_net = models.mask_net if gate_cfg.location == "input" else models.feature_mask_net

    if objective == "inverse":
        return inverse_dynamics_loss(encoder, mask_net, heads, batch, gate_cfg, rng, lam)
    if objective == "forward":
        return forward_dynamics_loss(encoder, mask_net, heads, batch, gate_cfg, rng, lam)
    if objective == "bc":
        return bc_gated_loss(encoder, mask_net, heads, batch, gate_cfg, rng, lam)
    if objective == "td":
        if models.target_encoder is None or models.target_heads is None:
            raise ValidationError("TD objective needs a synced target network")
        return td_gated_loss(QNet(encoder, heads), QNet(models.target_encoder, models.target_heads),
                             mask_net, batch, gamma, gate_cfg, rng, lam)
    if objective in ("simsiam", "contrastive"):
        if views is None:
            raise ValidationError(f"{objective} needs two augmented views")
        loss = simsiam_gated_loss if objective == "simsiam" else contrastive_loss
        return loss(encoder, mask_net, heads, views[0], views[1], gate_cfg, rng, lam)
    raise ValidationError(f"Unknown objective '{objective}' (expected one of {', '.join(OBJECTIVES)})")
