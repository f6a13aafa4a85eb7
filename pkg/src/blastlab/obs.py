"""Board -> tensor encoding for the policy network.

A board becomes an (H, W, m) float tensor with m = color_count + 4:
one occupancy channel per color, then

    blocker_hp   hp of the non-clickable blocker sitting on the cell
                 (rock hp, grass 1, container shared hp), 0 elsewhere
    goal_value   where a piece matching an unmet goal sits: the remaining
                 needed count for color goals, the piece hp for blockers
    teleporter   1.0 on teleporter entries and exits
    container    1.0 on container cells

Hp and remaining counts are raw values, not one-hot. The mask marks legal
taps and rides along with the tensor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import _kernels as K
from .engine import Board, GoalKind, Level, valid_actions
from .errors import BadPermutation, DimensionMismatch

EXTRA_CHANNELS = ("blocker_hp", "goal_value", "teleporter", "container")


def channel_legend(color_count: int) -> tuple[str, ...]:
    return tuple(f"color{i}" for i in range(color_count)) + EXTRA_CHANNELS


def channel_count(color_count: int) -> int:
    return color_count + len(EXTRA_CHANNELS)


@dataclass(frozen=True)
class Observation:
    tensor: np.ndarray  # float32 (H, W, m)
    mask: np.ndarray    # bool (H, W)
    channel_legend: tuple[str, ...]

    @property
    def color_count(self) -> int:
        return len(self.channel_legend) - len(EXTRA_CHANNELS)


def encode(board: Board, level: Level,
           progress: Mapping[GoalKind, int] | None = None) -> Observation:
    """Encode a board (and goal progress) into the agent's view.

    Pure: touches neither the board nor the level. progress defaults to
    nothing collected, i.e. goal_value shows the full requirements.
    """
    if (board.height, board.width) != (level.height, level.width):
        raise DimensionMismatch(
            f"board {board.height}x{board.width} vs level {level.height}x{level.width}")
    progress = progress or {}
    c_count = level.color_count
    h, w = board.height, board.width
    tensor = np.zeros((h, w, channel_count(c_count)), np.float32)

    kind = board.kind
    is_color = kind == K.K_COLOR
    rr, cc = np.nonzero(is_color)
    tensor[rr, cc, board.color[rr, cc]] = 1.0

    is_blocker = (kind == K.K_ROCK) | (kind == K.K_GRASS) | (kind == K.K_CONTAINER)
    tensor[..., c_count][is_blocker] = board.hp[is_blocker]

    goal_ch = tensor[..., c_count + 1]
    for goal, need in level.goals.items():
        remaining = need - progress.get(goal, 0)
        if remaining <= 0:
            continue
        if goal is GoalKind.COLLECT_COLOR:
            goal_ch[is_color] = remaining
        elif goal is GoalKind.CLEAR_ROCK:
            sel = kind == K.K_ROCK
            goal_ch[sel] = board.hp[sel]
        elif goal is GoalKind.CLEAR_GRASS:
            goal_ch[kind == K.K_GRASS] = 1.0
        elif goal is GoalKind.CLEAR_CONTAINER:
            sel = kind == K.K_CONTAINER
            goal_ch[sel] = board.hp[sel]

    is_tele = (kind == K.K_TELE_IN) | (kind == K.K_TELE_OUT)
    tensor[..., c_count + 2][is_tele] = 1.0
    tensor[..., c_count + 3][kind == K.K_CONTAINER] = 1.0

    return Observation(tensor, valid_actions(board), channel_legend(c_count))


def shuffle_colors(obs: Observation, perm: Sequence[int]) -> Observation:
    """Reorder the color channels: output channel j takes input channel perm[j].

    Non-color channels and the mask are untouched. perm must be a bijection
    on range(color_count).
    """
    c_count = obs.color_count
    perm = list(perm)
    if sorted(perm) != list(range(c_count)):
        raise BadPermutation(f"{perm} is not a permutation of 0..{c_count - 1}")
    tensor = obs.tensor.copy()
    tensor[..., :c_count] = obs.tensor[..., perm]
    return Observation(tensor, obs.mask, obs.channel_legend)
