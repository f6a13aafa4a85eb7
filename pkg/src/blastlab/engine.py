"""Click-to-blast board simulation.

A move taps a cluster (>= 2 same-color, 4-connected pieces): the cluster is
removed, adjacent blockers take one hit for the move, grass may spread,
gravity pulls color pieces and rocks down (through teleporters), and random
colors refill from the top. Everything is deterministic given the board's
RNG state, so identical (level, seed, action sequence) replays bit-for-bit.

Boards are values: `apply_move` returns a fresh board and leaves its input
untouched. The mutable work happens on int arrays inside `_kernels`.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterable, Mapping

import numpy as np

from . import _kernels as K
from .errors import InvalidAction, Unresolvable, ValidationError


class PieceKind(IntEnum):
    EMPTY = K.K_EMPTY
    COLOR = K.K_COLOR
    ROCK = K.K_ROCK
    GRASS = K.K_GRASS
    CONTAINER = K.K_CONTAINER
    TELEPORT_ENTRY = K.K_TELE_IN
    TELEPORT_EXIT = K.K_TELE_OUT


@dataclass(frozen=True)
class Piece:
    """One board cell. Payload fields apply only to the matching kind."""

    kind: PieceKind
    color: int = -1        # COLOR: index in 0..C-1
    hp: int = 0            # ROCK: >= 1; GRASS: 1; CONTAINER: shared hp
    container_id: int = -1
    pair_id: int = -1      # teleporters: entries/exits pair up by id


EMPTY = Piece(PieceKind.EMPTY)


def color_piece(color: int) -> Piece:
    return Piece(PieceKind.COLOR, color=color)


def rock(hp: int = 1) -> Piece:
    return Piece(PieceKind.ROCK, hp=hp)


def grass() -> Piece:
    return Piece(PieceKind.GRASS, hp=1)


def container_cell(container_id: int, hp: int = 10) -> Piece:
    return Piece(PieceKind.CONTAINER, hp=hp, container_id=container_id)


def teleporter_entry(pair_id: int) -> Piece:
    return Piece(PieceKind.TELEPORT_ENTRY, pair_id=pair_id)


def teleporter_exit(pair_id: int) -> Piece:
    return Piece(PieceKind.TELEPORT_EXIT, pair_id=pair_id)


class GoalKind(str, Enum):
    COLLECT_COLOR = "collect-color"
    CLEAR_ROCK = "clear-rock"
    CLEAR_GRASS = "clear-grass"
    CLEAR_CONTAINER = "clear-container"


# order matches the goals vector returned by the move kernel
_GOAL_ORDER = (GoalKind.COLLECT_COLOR, GoalKind.CLEAR_ROCK,
               GoalKind.CLEAR_GRASS, GoalKind.CLEAR_CONTAINER)

DEFAULT_WIDTH = 9
DEFAULT_HEIGHT = 13


@dataclass(frozen=True)
class Level:
    """Static level definition: starting layout plus win conditions."""

    level_id: str
    width: int
    height: int
    layout: tuple[tuple[Piece, ...], ...]  # [row][col], row 0 at the top
    move_limit: int
    goals: Mapping[GoalKind, int]
    color_count: int
    refill_weights: tuple[float, ...]

    def goal_total(self) -> int:
        return sum(self.goals.values())


def uniform_refill_weights(color_count: int) -> tuple[float, ...]:
    return tuple([1.0 / color_count] * color_count)


def validate_level(level: Level) -> None:
    """Check structural invariants; raises ValidationError on the first hit."""
    if level.move_limit < 1:
        raise ValidationError("move_limit must be >= 1")
    if not (2 <= level.color_count <= 6):
        raise ValidationError("color_count must be in 2..6")
    if len(level.layout) != level.height or any(len(row) != level.width for row in level.layout):
        raise ValidationError("layout does not match width x height")
    if len(level.refill_weights) != level.color_count:
        raise ValidationError("refill_weights length must equal color_count")
    if any(w < 0 for w in level.refill_weights):
        raise ValidationError("refill_weights must be non-negative")
    if abs(sum(level.refill_weights) - 1.0) > 1e-9:
        raise ValidationError("refill_weights must sum to 1 within 1e-9")

    counts = {kind: 0 for kind in PieceKind}
    container_cells: dict[int, list[tuple[int, int]]] = {}
    container_hp: dict[int, set[int]] = {}
    tele: dict[int, list[PieceKind]] = {}
    for r, row in enumerate(level.layout):
        for c, piece in enumerate(row):
            counts[piece.kind] += 1
            if piece.kind is PieceKind.COLOR:
                if not (0 <= piece.color < level.color_count):
                    raise ValidationError(f"color index {piece.color} out of range at ({r},{c})")
            elif piece.kind is PieceKind.ROCK:
                if piece.hp < 1:
                    raise ValidationError(f"rock hp must be >= 1 at ({r},{c})")
            elif piece.kind is PieceKind.CONTAINER:
                if piece.hp < 1:
                    raise ValidationError(f"container hp must be >= 1 at ({r},{c})")
                container_cells.setdefault(piece.container_id, []).append((r, c))
                container_hp.setdefault(piece.container_id, set()).add(piece.hp)
            elif piece.kind in (PieceKind.TELEPORT_ENTRY, PieceKind.TELEPORT_EXIT):
                tele.setdefault(piece.pair_id, []).append(piece.kind)

    for cid, cells in container_cells.items():
        if len(cells) != 4:
            raise ValidationError(f"container {cid} must cover exactly 4 cells")
        rows = sorted({r for r, _ in cells})
        cols = sorted({c for _, c in cells})
        if len(rows) != 2 or len(cols) != 2 or rows[1] != rows[0] + 1 or cols[1] != cols[0] + 1:
            raise ValidationError(f"container {cid} must form an axis-aligned 2x2 block")
        if len(container_hp[cid]) != 1:
            raise ValidationError(f"container {cid} cells must share one hp value")
    for pid, kinds in tele.items():
        if sorted(k.value for k in kinds) != [K.K_TELE_IN, K.K_TELE_OUT]:
            raise ValidationError(f"teleporter pair {pid} needs exactly one entry and one exit")

    for goal, need in level.goals.items():
        if need < 1:
            raise ValidationError(f"goal {goal.value} requires a positive count")
        if goal is GoalKind.COLLECT_COLOR:
            if counts[PieceKind.COLOR] < 2:
                raise ValidationError("collect-color goal needs at least one clickable pair")
        elif goal is GoalKind.CLEAR_ROCK and counts[PieceKind.ROCK] < need:
            raise ValidationError("clear-rock goal exceeds rocks in layout")
        elif goal is GoalKind.CLEAR_GRASS and counts[PieceKind.GRASS] < 1:
            raise ValidationError("clear-grass goal needs grass in the layout")
        elif goal is GoalKind.CLEAR_CONTAINER and len(container_cells) < need:
            raise ValidationError("clear-container goal exceeds containers in layout")
    if not level.goals:
        raise ValidationError("level needs at least one goal")


@dataclass
class Board:
    """Live board state; see _kernels for the array encoding."""

    width: int
    height: int
    kind: np.ndarray
    color: np.ndarray
    hp: np.ndarray
    aux: np.ndarray
    refill_cdf: np.ndarray
    rng_state: np.ndarray  # uint64[1], splitmix64

    @classmethod
    def from_level(cls, level: Level, seed: int) -> "Board":
        h, w = level.height, level.width
        kind = np.zeros((h, w), np.int8)
        color = np.full((h, w), -1, np.int8)
        hp = np.zeros((h, w), np.int16)
        aux = np.full((h, w), -1, np.int16)
        for r in range(h):
            for c in range(w):
                p = level.layout[r][c]
                kind[r, c] = int(p.kind)
                if p.kind is PieceKind.COLOR:
                    color[r, c] = p.color
                elif p.kind in (PieceKind.ROCK, PieceKind.GRASS, PieceKind.CONTAINER):
                    hp[r, c] = p.hp
                if p.kind is PieceKind.CONTAINER:
                    aux[r, c] = p.container_id
                elif p.kind in (PieceKind.TELEPORT_ENTRY, PieceKind.TELEPORT_EXIT):
                    aux[r, c] = p.pair_id
        cdf = np.cumsum(np.asarray(level.refill_weights, np.float64))
        cdf[-1] = 1.0
        state = np.random.SeedSequence(seed).generate_state(1, np.uint64)
        return cls(w, h, kind, color, hp, aux, cdf, state)

    def copy(self) -> "Board":
        return Board(self.width, self.height, self.kind.copy(), self.color.copy(),
                     self.hp.copy(), self.aux.copy(), self.refill_cdf,
                     self.rng_state.copy())

    def piece_at(self, row: int, col: int) -> Piece:
        k = PieceKind(int(self.kind[row, col]))
        if k is PieceKind.COLOR:
            return color_piece(int(self.color[row, col]))
        if k is PieceKind.ROCK:
            return rock(int(self.hp[row, col]))
        if k is PieceKind.GRASS:
            return grass()
        if k is PieceKind.CONTAINER:
            return container_cell(int(self.aux[row, col]), int(self.hp[row, col]))
        if k is PieceKind.TELEPORT_ENTRY:
            return teleporter_entry(int(self.aux[row, col]))
        if k is PieceKind.TELEPORT_EXIT:
            return teleporter_exit(int(self.aux[row, col]))
        return EMPTY

    @property
    def container_hp(self) -> dict[int, int]:
        out: dict[int, int] = {}
        mask = self.kind == K.K_CONTAINER
        for cid, h in zip(self.aux[mask].tolist(), self.hp[mask].tolist()):
            out[cid] = h
        return out

    def same_cells(self, other: "Board") -> bool:
        return (np.array_equal(self.kind, other.kind)
                and np.array_equal(self.color, other.color)
                and np.array_equal(self.hp, other.hp)
                and np.array_equal(self.aux, other.aux))


class _Workspace:
    """Per-board-shape scratch buffers handed to the move kernel."""

    def __init__(self, h: int, w: int):
        n = h * w
        self.removed = np.empty((n, 6), np.int16)  # r, c, kind, color, hp, aux
        self.dmg = np.empty((n, 3), np.int16)      # r, c, kind
        self.dmg_cont = np.empty(K.MAX_CONTAINERS, np.int16)
        self.hops = np.empty((4 * n, 4), np.int16)
        self.refilled = np.empty((n, 3), np.int16)
        self.goals = np.zeros(4, np.int64)
        self.counts = np.zeros(8, np.int64)
        self.in_cluster = np.zeros((h, w), np.int8)
        self.hit = np.zeros((h, w), np.int8)
        self.tag = np.zeros((h, w), np.int8)
        self.stack = np.empty(n, np.int32)
        self.queue = np.empty(n, np.int32)
        self.cand = np.empty(n, np.int32)
        self.exit_r = np.empty(K.MAX_TELE_PAIRS, np.int64)
        self.exit_c = np.empty(K.MAX_TELE_PAIRS, np.int64)


_ws_local = threading.local()


def _workspace(h: int, w: int) -> _Workspace:
    cache = getattr(_ws_local, "cache", None)
    if cache is None:
        cache = _ws_local.cache = {}
    ws = cache.get((h, w))
    if ws is None:
        ws = cache[(h, w)] = _Workspace(h, w)
    return ws


@dataclass(frozen=True)
class BlockerHit:
    """One hp decrement; target is a cell for rocks/grass, an id for containers."""

    target: tuple[int, int] | int
    delta: int


class MoveOutcome:
    """Everything a single move did, for reward shaping and cross-checks.

    removed_cells reports pieces as they stood before the move (a destroyed
    rock shows its pre-hit hp). A color piece overwritten by spreading grass
    is not a removal; it only shows up via grass_spread. The detailed lists
    are materialized lazily from compact arrays so the hot path (which only
    reads goals_collected) stays cheap.
    """

    __slots__ = ("goals_collected", "_removed", "_dmg", "_dmg_cont",
                 "_hops", "_refilled", "_spread")

    def __init__(self, goals_collected, removed, dmg, dmg_cont, hops,
                 refilled, spread):
        self.goals_collected: dict[GoalKind, int] = goals_collected
        self._removed = removed
        self._dmg = dmg
        self._dmg_cont = dmg_cont
        self._hops = hops
        self._refilled = refilled
        self._spread = spread

    @property
    def removed_cells(self) -> tuple[tuple[tuple[int, int], Piece], ...]:
        out = []
        for r, c, k, col, hp, aux in self._removed.tolist():
            kind = PieceKind(k)
            if kind is PieceKind.COLOR:
                piece = color_piece(col)
            elif kind is PieceKind.ROCK:
                piece = rock(hp)
            elif kind is PieceKind.GRASS:
                piece = grass()
            else:
                piece = container_cell(aux, hp)
            out.append(((r, c), piece))
        return tuple(out)

    @property
    def blocker_damage(self) -> tuple[BlockerHit, ...]:
        out = [BlockerHit((r, c), -1) for r, c, _ in self._dmg.tolist()]
        out.extend(BlockerHit(cid, -1) for cid in self._dmg_cont.tolist())
        return tuple(out)

    @property
    def grass_spread(self) -> tuple[tuple[int, int], ...]:
        if self._spread is None:
            return ()
        return (self._spread,)

    @property
    def teleported(self) -> tuple[tuple[tuple[int, int], tuple[int, int]], ...]:
        return tuple(((fr, fc), (tr, tc)) for fr, fc, tr, tc in self._hops.tolist())

    @property
    def refilled(self) -> tuple[tuple[tuple[int, int], int], ...]:
        return tuple(((r, c), col) for r, c, col in self._refilled.tolist())


def find_clusters(board: Board) -> list[list[tuple[int, int]]]:
    """All maximal 4-connected same-color clusters, singletons included.

    Cluster and cell order follow a row-major scan, so output is stable.
    """
    labels = np.empty((board.height, board.width), np.int32)
    sizes = np.empty(board.height * board.width, np.int32)
    n = K.label_clusters(board.kind, board.color, labels, sizes)
    clusters: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for r in range(board.height):
        for c in range(board.width):
            lab = labels[r, c]
            if lab >= 0:
                clusters[lab].append((r, c))
    return clusters


def valid_actions(board: Board) -> np.ndarray:
    """Boolean (height, width) mask of legal taps: color cells in clusters >= 2."""
    out = np.empty((board.height, board.width), np.bool_)
    K.valid_mask(board.kind, board.color, out)
    return out


def apply_move(board: Board, pos: tuple[int, int]) -> tuple[Board, MoveOutcome]:
    """Tap the cluster at pos; returns the successor board and what happened."""
    row, col = pos
    nxt = board.copy()
    ws = _workspace(board.height, board.width)
    status = K.apply_move(
        nxt.kind, nxt.color, nxt.hp, nxt.aux, nxt.rng_state, nxt.refill_cdf,
        int(row), int(col),
        ws.removed, ws.dmg, ws.dmg_cont, ws.hops, ws.refilled, ws.goals,
        ws.counts, ws.in_cluster, ws.hit, ws.tag, ws.stack, ws.queue,
        ws.cand, ws.exit_r, ws.exit_c)
    if status != 0:
        raise InvalidAction(f"cell ({row},{col}) is not a legal tap")

    counts = ws.counts
    goal_counts = ws.goals
    goals: dict[GoalKind, int] = {}
    for i, g in enumerate(_GOAL_ORDER):
        if goal_counts[i] > 0:
            goals[g] = int(goal_counts[i])
    spread = None
    if counts[5] >= 0:
        spread = (int(counts[5]), int(counts[6]))
    outcome = MoveOutcome(
        goals,
        ws.removed[:counts[0]].copy(),
        ws.dmg[:counts[1]].copy(),
        ws.dmg_cont[:counts[2]].copy(),
        ws.hops[:counts[3]].copy(),
        ws.refilled[:counts[4]].copy(),
        spread,
    )
    return nxt, outcome


def settle_gravity(board: Board) -> Board:
    """The gravity sub-step on its own (used by tests and the generator)."""
    nxt = board.copy()
    ws = _workspace(board.height, board.width)
    K.gravity_only(nxt.kind, nxt.color, nxt.hp, nxt.aux, ws.tag,
                   ws.exit_r, ws.exit_c, ws.hops)
    return nxt


def is_won(progress: Mapping[GoalKind, int], goals: Mapping[GoalKind, int]) -> bool:
    """True iff every goal's progress meets its requirement."""
    return all(progress.get(goal, 0) >= need for goal, need in goals.items())


def add_progress(progress: Mapping[GoalKind, int],
                 collected: Mapping[GoalKind, int]) -> dict[GoalKind, int]:
    out = dict(progress)
    for goal, n in collected.items():
        out[goal] = out.get(goal, 0) + n
    return out


def shuffle_dead_board(board: Board, max_tries: int = 1000) -> Board:
    """Re-deal the colors on a dead board until some tap is legal.

    The color multiset is preserved; non-color pieces stay put. Raises
    Unresolvable when no permutation can produce a pair (fewer than two
    pieces of every color, or no two color cells adjacent) or when the
    retry budget runs out.
    """
    color_cells = board.kind == K.K_COLOR
    values = board.color[color_cells]
    counts = np.bincount(values[values >= 0])
    has_pairable_color = bool((counts >= 2).any())
    adjacent = bool((color_cells[:-1, :] & color_cells[1:, :]).any()
                    or (color_cells[:, :-1] & color_cells[:, 1:]).any())
    if not (has_pairable_color and adjacent):
        raise Unresolvable("no color permutation yields a legal tap")
    nxt = board.copy()
    tries = K.reshuffle_colors(nxt.kind, nxt.color, nxt.rng_state, max_tries)
    if tries < 0:
        raise Unresolvable(f"no legal tap found after {max_tries} reshuffles")
    return nxt


def board_seed(seed_material: Iterable[int] | int) -> int:
    """Stable uint64 board seed from an int or a tuple of ints."""
    if isinstance(seed_material, int):
        seed_material = (seed_material,)
    return int(np.random.SeedSequence(tuple(seed_material)).generate_state(1, np.uint64)[0])
