import numpy as np
import pytest

from infogate.diffcore import ops
from infogate.diffcore.tensor import Tensor, backward
from infogate.errors import ShapeError, ValidationError
from infogate.gating.gates import (GateConfig, LambdaSchedule, NoiseSpec, gate_feature, gate_input, gated_embedding,
                                   lambda_at, random_mask, reversed_mask, sample_noise, shuffle_masks,
                                   sparsity_penalty)
from infogate.nets.networks import Encoder, MaskNet


def refuse(_):
    raise AssertionError("mask network must not be called")


@pytest.fixture
def obs(rng):
    return Tensor(rng.random((4, 3, 16, 16)))


class TestGates:
    def test_open_gate_passes_signal(self, obs, rng):
        noise = sample_noise(NoiseSpec(), obs.shape, rng)
        assert np.array_equal(gate_input(obs, Tensor(np.ones((4, 1, 16, 16))), noise).data, obs.data)

    def test_closed_gate_gives_noise(self, obs, rng):
        noise = sample_noise(NoiseSpec(), obs.shape, rng)
        assert np.array_equal(gate_input(obs, Tensor(np.zeros((4, 1, 16, 16))), noise).data, noise.data)

    def test_input_mask_must_be_single_channel(self, obs, rng):
        with pytest.raises(ShapeError):
            gate_input(obs, Tensor(np.ones((4, 2, 16, 16))), Tensor(np.zeros(obs.shape)))

    def test_feature_mask_must_match(self):
        with pytest.raises(ShapeError):
            gate_feature(Tensor(np.zeros((2, 4))), Tensor(np.ones((2, 3))), Tensor(np.zeros((2, 4))))

    def test_noise_statistics(self):
        noise = sample_noise(NoiseSpec(mean=0.5, std=0.25), (200, 200), np.random.default_rng(1)).data
        assert noise.mean() == pytest.approx(0.5, abs=0.01)
        assert noise.std() == pytest.approx(0.25, abs=0.01)

    def test_penalty_is_mean_absolute_gate(self):
        assert sparsity_penalty(Tensor([1.0, 0.0, 0.5, 0.5])).item() == pytest.approx(0.5)
        assert sparsity_penalty(Tensor(np.ones((2, 1, 4, 4)))).item() == pytest.approx(1.0)


class TestSchedule:
    def test_constant(self):
        assert lambda_at(LambdaSchedule(start=0.3, end=9.0), 10_000) == pytest.approx(0.3)

    def test_linear_ramp(self):
        schedule = LambdaSchedule(kind="linear_ramp", start=0.1, end=3.0, ramp_steps=2000)
        assert lambda_at(schedule, 0) == pytest.approx(0.1)
        assert lambda_at(schedule, 1000) == pytest.approx(1.55)
        assert lambda_at(schedule, 5000) == pytest.approx(3.0)

    def test_negative_step(self):
        with pytest.raises(ValidationError):
            lambda_at(LambdaSchedule(), -1)

    @pytest.mark.parametrize("schedule", [LambdaSchedule(kind="cosine"), LambdaSchedule(start=-1.0),
                                          LambdaSchedule(kind="linear_ramp", ramp_steps=0)])
    def test_invalid_schedule(self, schedule):
        with pytest.raises(ValidationError):
            schedule.validate()


class TestMaskVariants:
    def test_shuffle_permutes_rows(self, rng):
        masks = Tensor(np.arange(6, dtype=float).reshape(6, 1))
        shuffled = shuffle_masks(masks, rng, prob=1.0)
        assert sorted(shuffled.data.ravel()) == list(range(6))

    def test_shuffle_leaves_single_row(self, rng):
        masks = Tensor(np.ones((1, 1, 4, 4)))
        assert shuffle_masks(masks, rng, prob=1.0) is masks

    def test_random_mask_extremes(self, rng):
        assert (random_mask((2, 1, 4, 4), 0.0, rng).data == 0).all()
        assert (random_mask((2, 1, 4, 4), 1.0, rng).data == 1).all()
        with pytest.raises(ValidationError):
            random_mask((2, 1, 4, 4), 1.5, rng)

    def test_reversed_mask_is_complement_without_graph(self, net_cfg, obs, rng):
        net = MaskNet.build(net_cfg, rng)
        complement = reversed_mask(net)(obs)
        assert np.allclose(complement.data, 1 - net(obs).data)
        assert not complement.requires_grad


class TestGatedEmbedding:
    def test_disabled_gate_is_plain_encoder(self, net_cfg, obs, rng):
        encoder = Encoder.build(net_cfg, rng)
        view = gated_embedding(encoder, refuse, obs, GateConfig(enabled=False), rng)
        assert view.mask is None and view.penalty is None and view.mean_gate == 1.0
        assert np.array_equal(view.z.data, encoder(obs).data)

    def test_forced_open_gate_matches_ungated(self, net_cfg, obs, rng):
        encoder = Encoder.build(net_cfg, rng)
        view = gated_embedding(encoder, refuse, obs, GateConfig(force_open=True), rng)
        assert np.array_equal(view.z.data, encoder(obs).data)
        assert view.penalty.item() == pytest.approx(1.0)

    def test_random_baseline_skips_network(self, net_cfg, obs, rng):
        encoder = Encoder.build(net_cfg, rng)
        view = gated_embedding(encoder, refuse, obs, GateConfig(random_keep_prob=0.5), rng)
        assert set(np.unique(view.mask.data)) <= {0.0, 1.0}

    def test_learned_gate_trains_mask_net(self, net_cfg, obs, rng):
        encoder, net = Encoder.build(net_cfg, rng), MaskNet.build(net_cfg, rng)
        view = gated_embedding(encoder, net, obs, GateConfig(), rng, want_plain=True)
        assert view.mask.shape == (4, 1, 16, 16)
        assert view.z_plain is not None
        backward(ops.add(ops.mean(ops.mul(view.z, view.z)), view.penalty))
        assert np.abs(net.params["final.w"].grad).sum() > 0

    def test_feature_gate(self, net_cfg, obs, rng):
        encoder = Encoder.build(net_cfg, rng)
        head = Encoder.build(net_cfg, rng, gate_head=True)
        view = gated_embedding(encoder, head, obs, GateConfig(location="feature"), rng, want_plain=True)
        assert view.mask.shape == (4, net_cfg.d_z)
        assert view.z.shape == view.z_plain.shape

    def test_learned_gate_needs_network(self, net_cfg, obs, rng):
        with pytest.raises(ValidationError, match="no mask network"):
            gated_embedding(Encoder.build(net_cfg, rng), None, obs, GateConfig(), rng)


class TestGateConfig:
    def test_learned_flag(self):
        assert GateConfig().learned
        assert not GateConfig(force_open=True).learned
        assert not GateConfig(random_keep_prob=0.3).learned
        assert not GateConfig(enabled=False).learned

    @pytest.mark.parametrize("overrides", [{"location": "latent"}, {"mode": "selfish"}, {"shuffle_prob": 2.0},
                                           {"warmup": -1}, {"input_noise": NoiseSpec(std=0.0)}])
    def test_invalid(self, overrides):
        with pytest.raises(ValidationError):
            GateConfig(**overrides).validate()
