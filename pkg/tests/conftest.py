"""Shared fixtures and board-building helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from blastlab.engine import (
    Board,
    GoalKind,
    Level,
    Piece,
    PieceKind,
    color_piece,
    container_cell,
    grass,
    rock,
    teleporter_entry,
    teleporter_exit,
    uniform_refill_weights,
)

COLOR_CHARS = "RBYPOW"


def parse_rows(rows: list[str], container_hp: int = 2) -> tuple[tuple[Piece, ...], ...]:
    """Build a layout from ASCII art.

    '.' empty, letters from RBYPOW are colors 0..5, digits 1-9 rocks with
    that hp, 'g' grass, 'v'/'^' a teleporter pair (single pair, id 0),
    'C'/'D' container cells (ids 0/1, hp from container_hp).
    """
    layout = []
    for row in rows:
        cells = []
        for ch in row:
            if ch == ".":
                cells.append(Piece(PieceKind.EMPTY))
            elif ch in COLOR_CHARS:
                cells.append(color_piece(COLOR_CHARS.index(ch)))
            elif ch.isdigit():
                cells.append(rock(int(ch)))
            elif ch == "g":
                cells.append(grass())
            elif ch == "v":
                cells.append(teleporter_entry(0))
            elif ch == "^":
                cells.append(teleporter_exit(0))
            elif ch == "C":
                cells.append(container_cell(0, container_hp))
            elif ch == "D":
                cells.append(container_cell(1, container_hp))
            else:
                raise ValueError(f"unknown test char {ch!r}")
        layout.append(tuple(cells))
    return tuple(layout)


def make_level(rows: list[str], goals: dict[GoalKind, int] | None = None,
               move_limit: int = 10, color_count: int = 4,
               container_hp: int = 2, level_id: str = "test") -> Level:
    layout = parse_rows(rows, container_hp=container_hp)
    return Level(
        level_id=level_id,
        width=len(rows[0]),
        height=len(rows),
        layout=layout,
        move_limit=move_limit,
        goals=goals or {GoalKind.COLLECT_COLOR: 4},
        color_count=color_count,
        refill_weights=uniform_refill_weights(color_count),
    )


def make_board(rows: list[str], seed: int = 1, color_count: int = 4,
               container_hp: int = 2) -> Board:
    return Board.from_level(
        make_level(rows, color_count=color_count, container_hp=container_hp), seed)


def flood_clusters_oracle(board: Board) -> list[set[tuple[int, int]]]:
    """Independent set-based flood fill used to check the engine's clustering."""
    h, w = board.height, board.width
    seen: set[tuple[int, int]] = set()
    clusters = []
    for r in range(h):
        for c in range(w):
            if int(board.kind[r, c]) != int(PieceKind.COLOR) or (r, c) in seen:
                continue
            col = int(board.color[r, c])
            comp = set()
            frontier = [(r, c)]
            seen.add((r, c))
            while frontier:
                rr, cc = frontier.pop()
                comp.add((rr, cc))
                for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    nr, nc = rr + dr, cc + dc
                    if (0 <= nr < h and 0 <= nc < w and (nr, nc) not in seen
                            and int(board.kind[nr, nc]) == int(PieceKind.COLOR)
                            and int(board.color[nr, nc]) == col):
                        seen.add((nr, nc))
                        frontier.append((nr, nc))
            clusters.append(comp)
    return clusters


@pytest.fixture(scope="session")
def warm_kernels():
    """Compile the numba kernels once so timed tests see steady-state cost."""
    import blastlab.engine as engine

    board = make_board(["RRB", "BRB", "BBB"])
    engine.valid_actions(board)
    engine.find_clusters(board)
    engine.apply_move(board, (0, 0))
    dead = make_board(["RB", "BR"])
    try:
        engine.shuffle_dead_board(dead)
    except Exception:
        pass
    engine.settle_gravity(board)
    return True


def total_piece_cells(board: Board) -> int:
    return int((board.kind != int(PieceKind.EMPTY)).sum())


def color_multiset(board: Board) -> dict[int, int]:
    vals, counts = np.unique(
        board.color[board.kind == int(PieceKind.COLOR)], return_counts=True)
    return {int(v): int(n) for v, n in zip(vals, counts)}
