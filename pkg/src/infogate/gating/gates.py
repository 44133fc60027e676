"""Noise gates: convex blends of a signal with Gaussian noise.

A gate value of 1 passes the signal through unchanged and 0 replaces it with
noise. Noise is drawn fresh for every gated evaluation and is never part of
the differentiable graph.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from ..diffcore import ops
from ..diffcore.tensor import Tensor, no_grad
from ..errors import ShapeError, ValidationError

LOCATIONS = ("input", "feature")
MODES = ("cooperative", "adversarial")
SCHEDULES = ("constant", "linear_ramp")


@dataclass
class NoiseSpec:
    mean: float = 0.5
    std: float = 0.25

    def validate(self) -> None:
        if self.std <= 0:
            raise ValidationError(f"Noise std must be positive, got {self.std}")


@dataclass
class LambdaSchedule:
    kind: str = "constant"
    start: float = 0.1
    end: float = 0.1
    ramp_steps: int = 1

    def validate(self) -> None:
        if self.kind not in SCHEDULES:
            raise ValidationError(f"Unknown lambda schedule '{self.kind}' (expected constant or linear_ramp)")
        if self.start < 0 or self.end < 0:
            raise ValidationError(f"Lambda values must be >= 0 (got {self.start}, {self.end})")
        if self.kind == "linear_ramp" and self.ramp_steps < 1:
            raise ValidationError(f"ramp_steps must be >= 1, got {self.ramp_steps}")


@dataclass
class GateConfig:
    """Where and how gates are applied.

    ``enabled=False`` is the ungated baseline. ``force_open`` holds every gate
    at 1 without calling the mask network and drops the ungated mixing term,
    so a forced-open run with a zero weight matches the baseline.
    ``random_keep_prob`` switches to the Bernoulli random-mask baseline.
    """

    location: str = "input"
    mode: str = "cooperative"
    schedule: LambdaSchedule = field(default_factory=LambdaSchedule)
    warmup: int = 500
    mix_unmasked: bool = True
    shuffle_prob: float = 0.0
    random_keep_prob: Optional[float] = None
    input_noise: NoiseSpec = field(default_factory=NoiseSpec)
    feature_noise: NoiseSpec = field(default_factory=lambda: NoiseSpec(mean=0.0, std=1.0))
    enabled: bool = True
    force_open: bool = False

    def validate(self) -> None:
        if self.location not in LOCATIONS:
            raise ValidationError(f"Unknown gate location '{self.location}' (expected input or feature)")
        if self.mode not in MODES:
            raise ValidationError(f"Unknown gate mode '{self.mode}' (expected cooperative or adversarial)")
        if not 0.0 <= self.shuffle_prob <= 1.0:
            raise ValidationError(f"shuffle_prob must be in [0, 1], got {self.shuffle_prob}")
        if self.warmup < 0:
            raise ValidationError(f"warmup must be >= 0, got {self.warmup}")
        if self.random_keep_prob is not None and not 0.0 <= self.random_keep_prob <= 1.0:
            raise ValidationError(f"random_keep_prob must be in [0, 1], got {self.random_keep_prob}")
        self.schedule.validate()
        self.input_noise.validate()
        self.feature_noise.validate()

    @property
    def learned(self) -> bool:
        """True when a mask network produces the gates and should be trained."""
        return self.enabled and not self.force_open and self.random_keep_prob is None


def sample_noise(spec: NoiseSpec, shape: Tuple[int, ...], rng: np.random.Generator) -> Tensor:
    return Tensor(rng.normal(spec.mean, spec.std, size=shape))


def gate_input(x: Tensor, mask: Tensor, noise: Tensor) -> Tensor:
    """``mask * x + (1 - mask) * noise`` with a B,1,H,W mask over B,C,H,W input."""
    if x.ndim != 4 or mask.shape != (x.shape[0], 1) + tuple(x.shape[2:]):
        raise ShapeError("gate_input", x.shape, mask.shape)
    return ops.convex_mix(x, mask, noise)


def gate_feature(z: Tensor, mask: Tensor, noise: Tensor) -> Tensor:
    if z.ndim != 2 or mask.shape != z.shape:
        raise ShapeError("gate_feature", z.shape, mask.shape)
    return ops.convex_mix(z, mask, noise)


def sparsity_penalty(mask: Tensor) -> Tensor:
    """Mean absolute gate value, so the weight does not depend on resolution."""
    return ops.abs_mean(mask)


def lambda_at(schedule: LambdaSchedule, step: int) -> float:
    if step < 0:
        raise ValidationError(f"step must be >= 0, got {step}")
    if schedule.kind == "constant":
        return schedule.start
    fraction = min(step / schedule.ramp_steps, 1.0)
    return schedule.start + (schedule.end - schedule.start) * fraction


def shuffle_masks(masks: Tensor, rng: np.random.Generator, prob: float) -> Tensor:
    """With probability ``prob`` permute masks across the batch.

    A batch of one is returned unchanged.
    """
    if prob <= 0 or masks.shape[0] < 2:
        return masks
    if rng.random() >= prob:
        return masks
    return ops.take_rows(masks, rng.permutation(masks.shape[0]))


def random_mask(shape: Tuple[int, ...], keep_prob: float, rng: np.random.Generator) -> Tensor:
    if not 0.0 <= keep_prob <= 1.0:
        raise ValidationError(f"keep_prob must be in [0, 1], got {keep_prob}")
    return Tensor(rng.random(shape) < keep_prob)


def reversed_mask(mask_net: Callable[[Tensor], Tensor]) -> Callable[[Tensor], Tensor]:
    """Complement of a mask network's gates, held constant."""

    def complement(x: Tensor) -> Tensor:
        with no_grad():
            gates = mask_net(x)
        return Tensor(1 - gates.data)

    return complement


@dataclass
class GatedView:
    """Embedding of one observation batch after gating, with its gates."""

    z: Tensor
    mask: Optional[Tensor]
    z_plain: Optional[Tensor] = None

    @property
    def penalty(self) -> Optional[Tensor]:
        return None if self.mask is None else sparsity_penalty(self.mask)

    @property
    def mean_gate(self) -> float:
        return 1.0 if self.mask is None else float(self.mask.data.mean())


def gated_embedding(encoder, mask_net, x: Tensor, cfg: GateConfig, rng: np.random.Generator,
                    want_plain: bool = False) -> GatedView:
    """Encode ``x`` through the configured gate.

    ``mask_net`` is the input mask network, the feature mask head, or any
    callable returning gates of the right shape. ``want_plain`` also returns the
    ungated embedding for the mixed-input term.
    """
    if not cfg.enabled:
        z = encoder(x)
        return GatedView(z=z, mask=None, z_plain=z if want_plain else None)

    if cfg.location == "input":
        shape = (x.shape[0], 1) + tuple(x.shape[2:])
        mask = _gates(mask_net, x, shape, cfg, rng)
        noise = sample_noise(cfg.input_noise, x.shape, rng)
        z = encoder(gate_input(x, mask, noise))
        return GatedView(z=z, mask=mask, z_plain=encoder(x) if want_plain else None)

    z_plain = encoder(x)
    mask = _gates(mask_net, x, z_plain.shape, cfg, rng)
    noise = sample_noise(cfg.feature_noise, z_plain.shape, rng)
    return GatedView(z=gate_feature(z_plain, mask, noise), mask=mask, z_plain=z_plain if want_plain else None)


def _gates(mask_net, x: Tensor, shape, cfg: GateConfig, rng: np.random.Generator) -> Tensor:
    if cfg.force_open:
        return Tensor(np.ones(shape))
    if cfg.random_keep_prob is not None:
        return random_mask(shape, cfg.random_keep_prob, rng)
    if mask_net is None:
        raise ValidationError("Gating is enabled but no mask network was given")
    mask = mask_net(x)
    if mask.shape != tuple(shape):
        raise ShapeError("mask", mask.shape, shape)
    return shuffle_masks(mask, rng, cfg.shuffle_prob)
