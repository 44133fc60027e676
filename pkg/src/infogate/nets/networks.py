"""Mask network, encoder and prediction heads.

Every network is a thin object around a ParamSet; calling it runs the forward
pass and records the graph. Weights are drawn uniform in +-sqrt(1/fan_in).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..diffcore import ops
from ..diffcore.params import ParamSet
from ..diffcore.tensor import Tensor
from ..errors import ShapeError, ValidationError

logger = logging.getLogger(__name__)


@dataclass
class NetConfig:
    obs_shape: Tuple[int, int, int] = (3, 32, 32)
    mask_channels: Tuple[int, int] = (16, 32)
    bottleneck: int = 128
    encoder_channels: Tuple[int, int, int] = (16, 32, 32)
    d_z: int = 64
    hidden: int = 128
    n_actions: int = 5
    gn_groups: int = 4
    mask_bias: float = 3.0


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _add_conv(params: ParamSet, name: str, c_in: int, c_out: int, rng, size: int = 3) -> None:
    fan_in = c_in * size * size
    params.add(f"{name}.w", _uniform(rng, (c_out, c_in, size, size), fan_in))
    params.add(f"{name}.b", _uniform(rng, (c_out,), fan_in))


def _add_affine(params: ParamSet, name: str, n_in: int, n_out: int, rng) -> None:
    params.add(f"{name}.w", _uniform(rng, (n_in, n_out), n_in))
    params.add(f"{name}.b", _uniform(rng, (n_out,), n_in))


def _add_norm(params: ParamSet, name: str, width: int) -> None:
    params.add(f"{name}.gamma", np.ones(width))
    params.add(f"{name}.beta", np.zeros(width))


def _check_input(cfg: NetConfig, x: Tensor, who: str) -> None:
    if x.ndim != 4 or tuple(x.shape[1:]) != tuple(cfg.obs_shape):
        raise ShapeError(who, x.shape, (None,) + tuple(cfg.obs_shape))


class MaskNet:
    """Scaled UNet producing a single-channel gate map in (0, 1)."""

    def __init__(self, cfg: NetConfig, params: ParamSet):
        self.cfg = cfg
        self.params = params

    @classmethod
    def build(cls, cfg: NetConfig, rng: np.random.Generator) -> "MaskNet":
        channels, height, width = cfg.obs_shape
        if height % 4 or width % 4:
            raise ValidationError(f"Mask net needs extents divisible by 4, got {height}x{width}")
        c1, c2 = cfg.mask_channels
        for c in (c1, c2):
            if c % cfg.gn_groups:
                raise ValidationError(f"gn_groups={cfg.gn_groups} does not divide mask width {c}")
        flat = c2 * (height // 4) * (width // 4)

        params = ParamSet()
        _add_conv(params, "down0", channels, c1, rng)
        _add_norm(params, "down0.gn", c1)
        _add_conv(params, "down1", c1, c2, rng)
        _add_norm(params, "down1.gn", c2)
        _add_affine(params, "bottleneck0", flat, cfg.bottleneck, rng)
        _add_affine(params, "bottleneck1", cfg.bottleneck, flat, rng)
        _add_conv(params, "up0", 2 * c2, c2, rng)
        _add_norm(params, "up0.gn", c2)
        _add_conv(params, "up1", c2 + c1, c1, rng)
        _add_norm(params, "up1.gn", c1)
        _add_conv(params, "final", c1 + channels, 1, rng)
        params["final.b"].data[:] = cfg.mask_bias
        return cls(cfg, params)

    def _stage(self, x: Tensor, name: str, stride: int) -> Tensor:
        p = self.params
        out = ops.conv2d(x, p[f"{name}.w"], p[f"{name}.b"], stride=stride, pad=1)
        out = ops.group_norm(out, self.cfg.gn_groups, p[f"{name}.gn.gamma"], p[f"{name}.gn.beta"])
        return ops.relu(out)

    def __call__(self, x: Tensor) -> Tensor:
        _check_input(self.cfg, x, "mask_forward")
        p = self.params
        batch = x.shape[0]
        _, height, width = self.cfg.obs_shape
        c2 = self.cfg.mask_channels[1]

        d1 = self._stage(x, "down0", stride=2)
        d2 = self._stage(d1, "down1", stride=2)
        b = ops.reshape(d2, (batch, -1))
        b = ops.relu(ops.affine(b, p["bottleneck0.w"], p["bottleneck0.b"]))
        b = ops.relu(ops.affine(b, p["bottleneck1.w"], p["bottleneck1.b"]))
        b = ops.reshape(b, (batch, c2, height // 4, width // 4))

        u1 = self._stage(ops.nearest_upsample(ops.concat([b, d2], axis=1), 2), "up0", stride=1)
        u2 = self._stage(ops.nearest_upsample(ops.concat([u1, d1], axis=1), 2), "up1", stride=1)
        logits = ops.conv2d(ops.concat([u2, x], axis=1), p["final.w"], p["final.b"], stride=1, pad=1)
        return ops.sigmoid(logits)


class Encoder:
    """Three stride-2 convolutions, a fully connected layer and a final stage.

    The final stage is LayerNorm for an embedding encoder and a sigmoid gate
    for the feature-space mask head. Inputs are standardized with per-channel
    statistics stored as ``stats.*`` entries.
    """

    def __init__(self, cfg: NetConfig, params: ParamSet, gate_head: bool = False):
        self.cfg = cfg
        self.params = params
        self.gate_head = gate_head

    @classmethod
    def build(cls, cfg: NetConfig, rng: np.random.Generator, gate_head: bool = False) -> "Encoder":
        channels, height, width = cfg.obs_shape
        if height % 8 or width % 8:
            raise ValidationError(f"Encoder needs extents divisible by 8, got {height}x{width}")
        c1, c2, c3 = cfg.encoder_channels
        params = ParamSet()
        params.add("stats.mean", np.zeros(channels))
        params.add("stats.std", np.ones(channels))
        _add_conv(params, "conv0", channels, c1, rng)
        _add_conv(params, "conv1", c1, c2, rng)
        _add_conv(params, "conv2", c2, c3, rng)
        _add_affine(params, "fc", c3 * (height // 8) * (width // 8), cfg.d_z, rng)
        if gate_head:
            params["fc.b"].data[:] = cfg.mask_bias
        else:
            _add_norm(params, "ln", cfg.d_z)
        return cls(cfg, params, gate_head=gate_head)

    def set_input_stats(self, mean, std) -> None:
        self.params["stats.mean"].data = np.asarray(mean, dtype=np.float32).copy()
        self.params["stats.std"].data = np.maximum(np.asarray(std, dtype=np.float32), 1e-6)

    def clone(self) -> "Encoder":
        return Encoder(self.cfg, self.params.copy(), gate_head=self.gate_head)

    def __call__(self, x: Tensor) -> Tensor:
        _check_input(self.cfg, x, "encode")
        p = self.params
        out = ops.standardize_channels(x, p["stats.mean"].data, p["stats.std"].data)
        for name in ("conv0", "conv1", "conv2"):
            out = ops.relu(ops.conv2d(out, p[f"{name}.w"], p[f"{name}.b"], stride=2, pad=1))
        out = ops.affine(ops.reshape(out, (x.shape[0], -1)), p["fc.w"], p["fc.b"])
        if self.gate_head:
            return ops.sigmoid(out)
        return ops.layer_norm(out, p["ln.gamma"], p["ln.beta"])


class Heads:
    """Energy head, SimSiam predictor, Q head, forward projection and policy."""

    def __init__(self, cfg: NetConfig, params: ParamSet):
        self.cfg = cfg
        self.params = params

    @classmethod
    def build(cls, cfg: NetConfig, rng: np.random.Generator) -> "Heads":
        d_z, hidden, n_actions = cfg.d_z, cfg.hidden, cfg.n_actions
        if n_actions < 2:
            raise ValidationError(f"Need at least 2 actions, got {n_actions}")
        params = ParamSet()
        _add_affine(params, "psi0", 2 * d_z + n_actions, hidden, rng)
        _add_affine(params, "psi1", hidden, 1, rng)
        _add_affine(params, "pred0", d_z, hidden, rng)
        _add_affine(params, "pred1", hidden, d_z, rng)
        _add_affine(params, "q0", d_z, hidden, rng)
        _add_affine(params, "q1", hidden, n_actions, rng)
        _add_affine(params, "proj", d_z + n_actions, d_z, rng)
        _add_affine(params, "pi0", d_z, hidden, rng)
        _add_affine(params, "pi1", hidden, n_actions, rng)
        return cls(cfg, params)

    def clone(self) -> "Heads":
        return Heads(self.cfg, self.params.copy())

    def _mlp(self, x: Tensor, first: str, second: str) -> Tensor:
        p = self.params
        hidden = ops.relu(ops.affine(x, p[f"{first}.w"], p[f"{first}.b"]))
        return ops.affine(hidden, p[f"{second}.w"], p[f"{second}.b"])

    def energy(self, z_t: Tensor, z_k: Tensor, actions: np.ndarray) -> Tensor:
        actions = np.asarray(actions)
        if z_t.shape != z_k.shape or actions.shape != (z_t.shape[0],):
            raise ShapeError("score_energy", z_t.shape, z_k.shape, actions.shape)
        joint = ops.concat([z_t, z_k, ops.one_hot(actions, self.cfg.n_actions)], axis=1)
        return ops.reshape(self._mlp(joint, "psi0", "psi1"), (z_t.shape[0],))

    def all_energies(self, z_t: Tensor, z_k: Tensor) -> Tensor:
        """Energy of every action per row, B x A."""
        batch = z_t.shape[0]
        columns = [ops.reshape(self.energy(z_t, z_k, np.full(batch, a)), (batch, 1))
                   for a in range(self.cfg.n_actions)]
        return ops.concat(columns, axis=1)

    def predict(self, z: Tensor) -> Tensor:
        return self._mlp(z, "pred0", "pred1")

    def q_values(self, z: Tensor) -> Tensor:
        return self._mlp(z, "q0", "q1")

    def policy_logits(self, z: Tensor) -> Tensor:
        return self._mlp(z, "pi0", "pi1")

    def project(self, z: Tensor, actions: np.ndarray) -> Tensor:
        p = self.params
        joint = ops.concat([z, ops.one_hot(actions, self.cfg.n_actions)], axis=1)
        return ops.affine(joint, p["proj.w"], p["proj.b"])


def build_mask_net(cfg: NetConfig, rng: np.random.Generator) -> MaskNet:
    return MaskNet.build(cfg, rng)


def build_feature_mask_net(cfg: NetConfig, rng: np.random.Generator) -> Encoder:
    return Encoder.build(cfg, rng, gate_head=True)


def build_encoder(cfg: NetConfig, rng: np.random.Generator) -> Encoder:
    return Encoder.build(cfg, rng)


def build_heads(cfg: NetConfig, rng: np.random.Generator) -> Heads:
    return Heads.build(cfg, rng)


def mask_forward(net: MaskNet, x: Tensor) -> Tensor:
    return net(x)


def encode(encoder: Encoder, x: Tensor) -> Tensor:
    return encoder(x)


def score_energy(heads: Heads, z_t: Tensor, z_k: Tensor, actions: np.ndarray) -> Tensor:
    return heads.energy(z_t, z_k, actions)


@dataclass
class Models:
    """Everything a training run optimizes, plus the frozen TD target."""

    encoder: Encoder
    heads: Heads
    mask_net: Optional[MaskNet] = None
    feature_mask_net: Optional[Encoder] = None
    target_encoder: Optional[Encoder] = None
    target_heads: Optional[Heads] = None

    @classmethod
    def build(cls, cfg: NetConfig, rng: np.random.Generator) -> "Models":
        # Build order is fixed so gated and ungated runs share initial weights.
        mask_net = build_mask_net(cfg, rng)
        feature_mask_net = build_feature_mask_net(cfg, rng)
        encoder = build_encoder(cfg, rng)
        heads = build_heads(cfg, rng)
        logger.info("models_built | mask_params=%d | encoder_params=%d | head_params=%d",
                    mask_net.params.numel(), encoder.params.numel(), heads.params.numel())
        return cls(encoder=encoder, heads=heads, mask_net=mask_net, feature_mask_net=feature_mask_net)

    @classmethod
    def from_state(cls, cfg: NetConfig, grouped) -> "Models":
        """Rebuild from ``load_param_sets`` output; missing networks stay None."""
        models = cls.build(cfg, np.random.default_rng(0))
        if "encoder" not in grouped or "heads" not in grouped:
            raise ValidationError("Parameter file lacks 'encoder' or 'heads' entries")
        models.encoder.params.load_state(grouped["encoder"])
        models.heads.params.load_state(grouped["heads"])
        if "mask" in grouped:
            models.mask_net.params.load_state(grouped["mask"])
        else:
            models.mask_net = None
        if "feature_mask" in grouped:
            models.feature_mask_net.params.load_state(grouped["feature_mask"])
        else:
            models.feature_mask_net = None
        return models

    def set_input_stats(self, mean, std) -> None:
        for net in (self.encoder, self.feature_mask_net, self.target_encoder):
            if net is not None:
                net.set_input_stats(mean, std)

    def sync_target(self) -> None:
        self.target_encoder = self.encoder.clone()
        self.target_heads = self.heads.clone()

    def param_sets(self):
        sets = {"encoder": self.encoder.params, "heads": self.heads.params}
        if self.mask_net is not None:
            sets["mask"] = self.mask_net.params
        if self.feature_mask_net is not None:
            sets["feature_mask"] = self.feature_mask_net.params
        return sets
