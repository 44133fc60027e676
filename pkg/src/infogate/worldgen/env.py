"""DistractorDot: a pixel control task with exact ground-truth relevance.

Positions are (x, y) = (column, row) of the centre of the agent's 3x3
footprint. The distractor background draws from its own generator, so the
background sequence never depends on the actions taken.
"""

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from ..errors import ValidationError

ACTIONS = ("up", "down", "left", "right", "stay")
UP, DOWN, LEFT, RIGHT, STAY = range(5)
_MOVES = {UP: (0, -1), DOWN: (0, 1), LEFT: (-1, 0), RIGHT: (1, 0), STAY: (0, 0)}

LEVELS = ("none", "easy", "medium", "hard")
AGENT_COLOR = (1.0, 0.2, 0.2)


@dataclass
class EnvConfig:
    height: int = 32
    width: int = 32
    channels: int = 3
    step_size: int = 2
    level: str = "medium"
    amplitude: float = 0.3
    decoy_step: int = 2
    episode_length: int = 40
    goal: Optional[Tuple[int, int]] = None

    def validate(self) -> None:
        if self.level not in LEVELS:
            raise ValidationError(f"Unknown distractor level '{self.level}' (expected one of {', '.join(LEVELS)})")
        if self.height < 5 or self.width < 5:
            raise ValidationError(f"Grid {self.height}x{self.width} too small for a 3x3 footprint")
        if self.channels != 3:
            raise ValidationError(f"Only 3 channels are supported, got {self.channels}")
        if not 0.0 <= self.amplitude <= 1.0:
            raise ValidationError(f"Distractor amplitude must be in [0, 1], got {self.amplitude}")
        if self.step_size < 1 or self.decoy_step < 1:
            raise ValidationError("step_size and decoy_step must be >= 1")
        if self.episode_length < 2:
            raise ValidationError(f"episode_length must be >= 2, got {self.episode_length}")
        gx, gy = self.goal_position
        if not (1 <= gx <= self.width - 2 and 1 <= gy <= self.height - 2):
            raise ValidationError(f"Goal {self.goal_position} must keep the footprint inside the grid")

    @property
    def goal_position(self) -> Tuple[int, int]:
        if self.goal is not None:
            return tuple(self.goal)
        return (self.width // 2 - 1, self.height // 2 - 1)

    @property
    def n_actions(self) -> int:
        return len(ACTIONS)


@dataclass
class EnvState:
    cfg: EnvConfig
    agent: Tuple[int, int]
    goal: Tuple[int, int]
    rng: np.random.Generator = field(repr=False)
    texture: Optional[np.ndarray] = field(default=None, repr=False)
    decoy: Optional[Tuple[int, int]] = None
    t: int = 0
    reward: float = 0.0


def _clamp(value: int, low: int, high: int) -> int:
    return int(min(max(value, low), high))


def reward_for(cfg: EnvConfig, agent: Tuple[int, int], goal: Tuple[int, int]) -> float:
    chebyshev = max(abs(agent[0] - goal[0]), abs(agent[1] - goal[1]))
    return -chebyshev / max(cfg.height, cfg.width)


def _fresh_texture(cfg: EnvConfig, rng: np.random.Generator) -> np.ndarray:
    return (rng.random((cfg.channels, cfg.height, cfg.width)) * cfg.amplitude).astype(np.float32)


def env_reset(cfg: EnvConfig, seed) -> EnvState:
    """Start an episode; ``seed`` is anything ``np.random.default_rng`` accepts."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    goal = cfg.goal_position
    # Starts share the goal's parity so the expert can land on it exactly.
    xs = np.arange(1 + (goal[0] - 1) % 2, cfg.width - 1, 2)
    ys = np.arange(1 + (goal[1] - 1) % 2, cfg.height - 1, 2)
    agent = (int(rng.choice(xs)), int(rng.choice(ys)))

    texture = _fresh_texture(cfg, rng) if cfg.level != "none" else None
    decoy = None
    if cfg.level == "hard":
        decoy = (int(rng.integers(1, cfg.width - 1)), int(rng.integers(1, cfg.height - 1)))
    return EnvState(cfg=cfg, agent=agent, goal=goal, rng=rng, texture=texture, decoy=decoy,
                    reward=reward_for(cfg, agent, goal))


def env_step(state: EnvState, action: int) -> EnvState:
    """Move the agent and advance the background.

    Positions clamp to ``[1, W-2]`` x ``[1, H-2]``. On an even-sized grid the far
    border is even while starts share the odd goal parity, so a move clamped
    there leaves the agent one cell off the goal lattice; the expert then stops
    at Chebyshev distance 1 and labels ``stay``.
    """
    cfg = state.cfg
    if action not in _MOVES:
        raise ValidationError(f"Invalid action {action} (expected 0..{len(ACTIONS) - 1})")
    dx, dy = _MOVES[int(action)]
    agent = (_clamp(state.agent[0] + dx * cfg.step_size, 1, cfg.width - 2),
             _clamp(state.agent[1] + dy * cfg.step_size, 1, cfg.height - 2))

    texture, decoy = state.texture, state.decoy
    if cfg.level in ("medium", "hard"):
        texture = _fresh_texture(cfg, state.rng)
    if cfg.level == "hard":
        ddx, ddy = _MOVES[int(state.rng.integers(0, 4))]
        decoy = (_clamp(decoy[0] + ddx * cfg.decoy_step, 1, cfg.width - 2),
                 _clamp(decoy[1] + ddy * cfg.decoy_step, 1, cfg.height - 2))
    return replace(state, agent=agent, texture=texture, decoy=decoy, t=state.t + 1,
                   reward=reward_for(cfg, agent, state.goal))


def footprint(position: Tuple[int, int], radius: int, height: int, width: int) -> Tuple[slice, slice]:
    x, y = position
    return (slice(max(y - radius, 0), min(y + radius + 1, height)),
            slice(max(x - radius, 0), min(x + radius + 1, width)))


def render(state: EnvState, eval_mode: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Observation (C,H,W) in [0,1] and relevance map (H,W) of the agent dilated by one."""
    cfg = state.cfg
    if eval_mode or state.texture is None:
        obs = np.zeros((cfg.channels, cfg.height, cfg.width), dtype=np.float32)
    else:
        obs = state.texture.copy()
    color = np.asarray(AGENT_COLOR, dtype=np.float32)[:, None, None]
    if state.decoy is not None and not eval_mode:
        rows, cols = footprint(state.decoy, 1, cfg.height, cfg.width)
        obs[:, rows, cols] = color
    rows, cols = footprint(state.agent, 1, cfg.height, cfg.width)
    obs[:, rows, cols] = color

    relevance = np.zeros((cfg.height, cfg.width), dtype=bool)
    rows, cols = footprint(state.agent, 2, cfg.height, cfg.width)
    relevance[rows, cols] = True
    return obs, relevance


def expert_action(state: EnvState) -> int:
    """Greedy move that shrinks the Manhattan distance, horizontal axis first.

    ``stay`` when no single step gets closer, including one cell off the goal.
    """
    (x, y), (gx, gy) = state.agent, state.goal
    step = state.cfg.step_size
    dx, dy = gx - x, gy - y
    if dx and abs(dx - np.sign(dx) * step) < abs(dx):
        return RIGHT if dx > 0 else LEFT
    if dy and abs(dy - np.sign(dy) * step) < abs(dy):
        return DOWN if dy > 0 else UP
    return STAY
