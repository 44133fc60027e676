"""Offline dataset generation, the IGDS container and crop augmentation."""

import json
import logging
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from ..errors import BadMagicError, DatasetFormatError, TruncatedFileError, ValidationError, VersionMismatchError
from .env import ACTIONS, EnvConfig, env_reset, env_step, expert_action, render

logger = logging.getLogger(__name__)

IGDS_MAGIC = b"IGDS"
IGDS_VERSION = 1
POLICIES = ("random", "eps_expert", "expert", "mixed")


def record_dtype(cfg: EnvConfig) -> np.dtype:
    frame = (cfg.channels, cfg.height, cfg.width)
    packed = (cfg.height * cfg.width + 7) // 8
    return np.dtype([
        ("obs", "<f4", frame),
        ("action", "<i4"),
        ("obs_next", "<f4", frame),
        ("obs_k", "<f4", frame),
        ("k", "<i4"),
        ("reward", "<f4"),
        ("expert_action", "<i4"),
        ("episode", "<i4"),
        ("t", "<i4"),
        ("relevance", "u1", (packed,)),
    ])


def _layout(dtype: np.dtype) -> List[List[Any]]:
    return [[name, dtype.fields[name][0].base.str, list(dtype.fields[name][0].shape)] for name in dtype.names]


@dataclass
class Batch:
    obs: np.ndarray
    action: np.ndarray
    obs_next: np.ndarray
    obs_k: np.ndarray
    k: np.ndarray
    reward: np.ndarray
    expert_action: np.ndarray
    relevance: np.ndarray

    def __len__(self) -> int:
        return self.obs.shape[0]


class Dataset:
    """Fixed-width transition records plus JSON metadata."""

    def __init__(self, records: np.ndarray, meta: Dict[str, Any]):
        self.records = records
        self.meta = meta
        self._relevance: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def env_config(self) -> EnvConfig:
        return EnvConfig(**self.meta["env"])

    @property
    def obs_shape(self) -> Tuple[int, int, int]:
        return tuple(self.records.dtype.fields["obs"][0].shape)

    @property
    def stats(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.meta["stats"]["mean"]), np.asarray(self.meta["stats"]["std"])

    def __getattr__(self, name):
        records = self.__dict__.get("records")
        if records is not None and name in records.dtype.names and name != "relevance":
            return records[name]
        raise AttributeError(name)

    @property
    def relevance(self) -> np.ndarray:
        if self._relevance is None:
            cfg = self.env_config
            bits = np.unpackbits(self.records["relevance"], axis=1, count=cfg.height * cfg.width)
            self._relevance = bits.reshape(len(self), cfg.height, cfg.width).astype(bool)
        return self._relevance

    def batch(self, indices: np.ndarray) -> Batch:
        chosen = self.records[indices]
        return Batch(
            obs=chosen["obs"], action=chosen["action"], obs_next=chosen["obs_next"], obs_k=chosen["obs_k"],
            k=chosen["k"], reward=chosen["reward"], expert_action=chosen["expert_action"],
            relevance=self.relevance[indices],
        )

    def sample(self, rng: np.random.Generator, size: int) -> Batch:
        if len(self) == 0:
            raise ValidationError("Cannot sample from an empty dataset")
        return self.batch(rng.integers(0, len(self), size=size))

    def to_bytes(self) -> bytes:
        meta = json.dumps(self.meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
        header = IGDS_MAGIC + struct.pack("<II", IGDS_VERSION, len(meta))
        return header + meta + self.records.tobytes()

    def save(self, path: Union[str, Path]) -> Path:
        return save_dataset(self, path)


def _behaviour(policy: str, episode: int) -> str:
    if policy == "mixed":
        return "expert" if episode % 2 == 0 else "eps_expert"
    return policy


def _episode_records(args) -> np.ndarray:
    cfg, episode, seed, horizon_cap, policy, epsilon, eval_mode = args
    env_seed, policy_seed, k_seed = np.random.SeedSequence([seed, episode]).spawn(3)
    policy_rng = np.random.default_rng(policy_seed)
    k_rng = np.random.default_rng(k_seed)
    behaviour = _behaviour(policy, episode)

    state = env_reset(cfg, env_seed)
    frames, relevance, experts, actions, rewards = [], [], [], [], []
    for t in range(cfg.episode_length):
        obs, rel = render(state, eval_mode)
        frames.append(obs)
        relevance.append(rel)
        experts.append(expert_action(state))
        if t == cfg.episode_length - 1:
            break
        if behaviour == "random" or (behaviour == "eps_expert" and policy_rng.random() < epsilon):
            action = int(policy_rng.integers(0, len(ACTIONS)))
        else:
            action = experts[-1]
        state = env_step(state, action)
        actions.append(action)
        rewards.append(state.reward)

    count = cfg.episode_length - horizon_cap
    ks = k_rng.integers(1, horizon_cap + 1, size=count)
    steps = np.arange(count)
    out = np.zeros(count, dtype=record_dtype(cfg))
    frames = np.stack(frames)
    out["obs"] = frames[steps]
    out["action"] = np.asarray(actions[:count])
    out["obs_next"] = frames[steps + 1]
    out["obs_k"] = frames[steps + ks]
    out["k"] = ks
    out["reward"] = np.asarray(rewards[:count])
    out["expert_action"] = np.asarray(experts[:count])
    out["episode"] = episode
    out["t"] = steps
    out["relevance"] = np.packbits(np.stack(relevance[:count]).reshape(count, -1), axis=1)
    return out


def generate_dataset(
    cfg: EnvConfig,
    episodes: int,
    horizon_cap: int = 5,
    policy: str = "eps_expert",
    seed: int = 0,
    epsilon: float = 0.5,
    eval_mode: bool = False,
    workers: int = 1,
    config_hash: str = "",
) -> Dataset:
    """Roll out ``episodes`` episodes and keep one record per eligible step.

    Episode ``e`` draws from ``SeedSequence([seed, e])`` and results are joined
    in episode order, so worker count never changes the output.

    Raises:
        ValidationError: If the horizon cap, policy or counts are invalid
    """
    cfg.validate()
    if episodes < 1:
        raise ValidationError(f"episodes must be >= 1, got {episodes}")
    if not 1 <= horizon_cap < cfg.episode_length:
        raise ValidationError(
            f"horizon cap K={horizon_cap} must satisfy 1 <= K < episode length T={cfg.episode_length}")
    if policy not in POLICIES:
        raise ValidationError(f"Unknown behaviour policy '{policy}' (expected one of {', '.join(POLICIES)})")
    if not 0.0 <= epsilon <= 1.0:
        raise ValidationError(f"epsilon must be in [0, 1], got {epsilon}")

    jobs = [(cfg, e, seed, horizon_cap, policy, epsilon, eval_mode) for e in range(episodes)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_episode_records, jobs))
    else:
        chunks = [_episode_records(job) for job in jobs]
    records = np.concatenate(chunks)

    frames = records["obs"].astype(np.float64)
    mean = frames.mean(axis=(0, 2, 3))
    std = frames.std(axis=(0, 2, 3))
    meta = {
        "env": asdict(cfg),
        "episodes": episodes,
        "records": int(len(records)),
        "horizon_cap": horizon_cap,
        "policy": policy,
        "epsilon": epsilon,
        "seed": seed,
        "eval_mode": eval_mode,
        "stats": {"mean": [float(v) for v in mean], "std": [float(v) for v in std]},
        "record_layout": _layout(records.dtype),
        "config_hash": config_hash,
    }
    logger.info("dataset_generated | episodes=%d | records=%d | level=%s | policy=%s | eval_mode=%s",
                episodes, len(records), cfg.level, policy, eval_mode)
    return Dataset(records, meta)


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dataset.to_bytes())
    logger.info("dataset_saved | path=%s | records=%d", path, len(dataset))
    return path


def decode_dataset(payload: bytes) -> Dataset:
    if len(payload) < 4:
        raise TruncatedFileError(f"IGDS file is {len(payload)} bytes, too short for a header")
    if payload[:4] != IGDS_MAGIC:
        raise BadMagicError(f"Bad magic {payload[:4]!r}, expected {IGDS_MAGIC!r}")
    if len(payload) < 12:
        raise TruncatedFileError("IGDS header truncated")
    version, meta_len = struct.unpack("<II", payload[4:12])
    if version != IGDS_VERSION:
        raise VersionMismatchError(f"IGDS version {version} not supported (expected {IGDS_VERSION})")
    if len(payload) < 12 + meta_len:
        raise TruncatedFileError(f"IGDS metadata truncated ({len(payload) - 12} of {meta_len} bytes)")
    try:
        meta = json.loads(payload[12:12 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"IGDS metadata is not valid JSON: {exc}") from exc

    dtype = record_dtype(EnvConfig(**meta["env"]))
    if _layout(dtype) != meta.get("record_layout"):
        raise DatasetFormatError("IGDS record layout does not match this version's layout")
    body = payload[12 + meta_len:]
    expected = meta["records"] * dtype.itemsize
    if len(body) < expected:
        raise TruncatedFileError(f"IGDS records truncated ({len(body)} of {expected} bytes)")
    if len(body) > expected:
        raise DatasetFormatError(f"IGDS file has {len(body) - expected} trailing bytes")
    records = np.frombuffer(body, dtype=dtype, count=meta["records"]).copy()
    return Dataset(records, meta)


def load_dataset(path: Union[str, Path]) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Dataset file not found: {path}")
    dataset = decode_dataset(path.read_bytes())
    logger.info("dataset_loaded | path=%s | records=%d", path, len(dataset))
    return dataset


def augment_crop(
    obs: np.ndarray,
    pad: int = 4,
    rng: Optional[np.random.Generator] = None,
    offset: Optional[Tuple[int, int]] = None,
    relevance: Optional[np.ndarray] = None,
):
    """Zero-pad by ``pad`` and crop back to the original extent.

    ``obs`` is C,H,W or B,C,H,W. With ``offset`` every image uses that
    (row, col) window origin; otherwise each image draws its own from ``rng``.
    Offset (pad, pad) is the identity. ``relevance`` (H,W or B,H,W) gets the
    same window and is returned alongside when given.
    """
    single = obs.ndim == 3
    images = obs[None] if single else obs
    maps = None
    if relevance is not None:
        maps = relevance[None] if relevance.ndim == 2 else relevance
    batch, _, height, width = images.shape
    if offset is not None:
        offsets = np.tile(np.asarray(offset, dtype=np.int64), (batch, 1))
    else:
        if rng is None:
            raise ValidationError("augment_crop needs either rng or offset")
        offsets = rng.integers(0, 2 * pad + 1, size=(batch, 2))
    if offsets.min() < 0 or offsets.max() > 2 * pad:
        raise ValidationError(f"Crop offset must lie in [0, {2 * pad}]")

    padded = np.pad(images, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.empty_like(images)
    out_maps = None if maps is None else np.empty_like(maps)
    padded_maps = None if maps is None else np.pad(maps, ((0, 0), (pad, pad), (pad, pad)))
    for b, (row, col) in enumerate(offsets):
        out[b] = padded[b, :, row:row + height, col:col + width]
        if maps is not None:
            out_maps[b] = padded_maps[b, row:row + height, col:col + width]

    if single:
        out = out[0]
        out_maps = None if out_maps is None else out_maps[0]
    return out if maps is None else (out, out_maps)
