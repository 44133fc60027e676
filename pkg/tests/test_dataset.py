import struct

import numpy as np
import pytest

from infogate.errors import BadMagicError, DatasetFormatError, TruncatedFileError, ValidationError, VersionMismatchError
from infogate.worldgen.dataset import augment_crop, decode_dataset, generate_dataset, load_dataset, save_dataset
from infogate.worldgen.env import EnvConfig


class TestGenerate:
    def test_record_count(self):
        dataset = generate_dataset(EnvConfig(height=16, width=16, episode_length=20), episodes=3, horizon_cap=5)
        assert len(dataset) == 45
        assert dataset.meta["records"] == 45

    def test_horizons_within_cap(self, dataset):
        assert len(dataset) == 27
        assert dataset.k.min() >= 1 and dataset.k.max() <= 3

    def test_next_frame_links_consecutive_records(self, dataset):
        first = dataset.records[dataset.episode == 0]
        assert np.array_equal(first["obs_next"][:-1], first["obs"][1:])

    def test_future_frame_matches_horizon(self, dataset):
        first = dataset.records[dataset.episode == 1]
        for i, row in enumerate(first):
            if i + row["k"] < len(first):
                assert np.array_equal(row["obs_k"], first["obs"][i + row["k"]])

    def test_same_seed_same_bytes(self, env_cfg, dataset):
        again = generate_dataset(env_cfg, episodes=3, horizon_cap=3, seed=0)
        assert again.to_bytes() == dataset.to_bytes()

    def test_different_seed_differs(self, env_cfg, dataset):
        other = generate_dataset(env_cfg, episodes=3, horizon_cap=3, seed=1)
        assert not np.array_equal(other.obs, dataset.obs)

    @pytest.mark.slow
    def test_worker_count_does_not_change_output(self, env_cfg, dataset):
        pooled = generate_dataset(env_cfg, episodes=3, horizon_cap=3, seed=0, workers=2)
        assert pooled.to_bytes() == dataset.to_bytes()

    def test_expert_policy_follows_expert(self, env_cfg):
        dataset = generate_dataset(env_cfg, episodes=2, horizon_cap=3, policy="expert")
        assert np.array_equal(dataset.action, dataset.expert_action)

    def test_mixed_policy_alternates(self, env_cfg):
        dataset = generate_dataset(env_cfg, episodes=2, horizon_cap=3, policy="mixed", epsilon=1.0)
        even = dataset.records[dataset.episode == 0]
        assert np.array_equal(even["action"], even["expert_action"])

    def test_eval_frames_have_clean_background(self, eval_dataset):
        relevance = eval_dataset.relevance
        assert relevance.shape == (len(eval_dataset), 16, 16)
        assert (eval_dataset.obs.transpose(1, 0, 2, 3)[:, ~relevance] == 0).all()

    def test_relevance_covers_agent(self, dataset):
        sizes = dataset.relevance.sum(axis=(1, 2))
        assert sizes.min() >= 9 and sizes.max() <= 25

    def test_stats_per_channel(self, dataset):
        mean, std = dataset.stats
        assert mean.shape == (3,) and std.shape == (3,)
        assert (std > 0).all()

    @pytest.mark.parametrize("kwargs", [{"horizon_cap": 0}, {"horizon_cap": 12}, {"policy": "greedy"},
                                        {"epsilon": 1.5}, {"episodes": 0}])
    def test_invalid_arguments(self, env_cfg, kwargs):
        args = {"episodes": 1, "horizon_cap": 3, **kwargs}
        with pytest.raises(ValidationError):
            generate_dataset(env_cfg, **args)


class TestSampling:
    def test_batch_fields_line_up(self, dataset, rng):
        batch = dataset.sample(rng, 8)
        assert len(batch) == 8
        assert batch.obs.shape == (8, 3, 16, 16)
        assert batch.relevance.shape == (8, 16, 16)

    def test_seeded_sampling_repeats(self, dataset):
        a = dataset.sample(np.random.default_rng(4), 6)
        b = dataset.sample(np.random.default_rng(4), 6)
        assert np.array_equal(a.action, b.action) and np.array_equal(a.obs_k, b.obs_k)


class TestContainer:
    def test_save_and_load(self, dataset, tmp_path):
        path = save_dataset(dataset, tmp_path / "data" / "train.igds")
        loaded = load_dataset(path)
        assert loaded.to_bytes() == dataset.to_bytes()
        assert np.array_equal(loaded.relevance, dataset.relevance)

    def test_bad_magic(self, dataset):
        with pytest.raises(BadMagicError):
            decode_dataset(b"NOPE" + dataset.to_bytes()[4:])

    def test_version_mismatch(self, dataset):
        payload = bytearray(dataset.to_bytes())
        payload[4:8] = struct.pack("<I", 2)
        with pytest.raises(VersionMismatchError):
            decode_dataset(bytes(payload))

    def test_truncated_records(self, dataset):
        with pytest.raises(TruncatedFileError):
            decode_dataset(dataset.to_bytes()[:-10])

    def test_trailing_bytes(self, dataset):
        with pytest.raises(DatasetFormatError, match="trailing"):
            decode_dataset(dataset.to_bytes() + b"\0")

    def test_short_header(self):
        with pytest.raises(TruncatedFileError):
            decode_dataset(b"IG")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError, match="not found"):
            load_dataset(tmp_path / "none.igds")


class TestAugmentCrop:
    def test_centre_offset_is_identity(self, rng):
        obs = rng.random((2, 3, 8, 8)).astype(np.float32)
        assert np.array_equal(augment_crop(obs, pad=2, offset=(2, 2)), obs)

    def test_origin_offset_shifts_content(self, rng):
        obs = rng.random((3, 8, 8)).astype(np.float32)
        out = augment_crop(obs, pad=2, offset=(0, 0))
        assert np.array_equal(out[:, 2:, 2:], obs[:, :-2, :-2])
        assert (out[:, :2, :] == 0).all()

    def test_relevance_follows_window(self, rng):
        obs = rng.random((3, 8, 8)).astype(np.float32)
        relevance = np.zeros((8, 8), dtype=bool)
        relevance[3, 3] = True
        _, moved = augment_crop(obs, pad=2, offset=(0, 4), relevance=relevance)
        assert moved[5, 1] and moved.sum() == 1

    def test_needs_rng_or_offset(self, rng):
        with pytest.raises(ValidationError):
            augment_crop(rng.random((3, 8, 8)), pad=2)

    def test_offset_out_of_range(self, rng):
        with pytest.raises(ValidationError):
            augment_crop(rng.random((3, 8, 8)), pad=2, offset=(5, 0))
