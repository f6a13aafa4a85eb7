"""Numba kernels for the board simulation hot path.

All kernels operate on plain numpy arrays (no Python objects cross the
boundary) so a full move resolves in a few microseconds. Randomness comes
from a splitmix64 state carried as a 1-element uint64 array: passing a
numpy Generator into a jitted function costs ~10us per call in boxing
alone, which would dominate the per-move budget. Scratch buffers are
allocated once per board shape on the Python side and reused; allocating
them inside the kernel costs more than the actual move resolution.

Board cell encoding (shared with engine.py):
    kind  int8   one of the K_* codes below
    color int8   color index for K_COLOR cells, -1 elsewhere
    hp    int16  rock hp; grass carries 1; container cells mirror the
                 shared container hp; 0 elsewhere
    aux   int16  container id for K_CONTAINER, teleporter pair id for
                 K_TELE_IN / K_TELE_OUT, -1 elsewhere

Row 0 is the top of the board; gravity moves pieces toward higher rows.
Color pieces and rocks fall; grass, containers and teleporters are anchored.
"""

from __future__ import annotations

import numpy as np
from numba import njit

K_EMPTY = 0
K_COLOR = 1
K_ROCK = 2
K_GRASS = 3
K_CONTAINER = 4
K_TELE_IN = 5
K_TELE_OUT = 6

MAX_CONTAINERS = 64
MAX_TELE_PAIRS = 64

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_DOUBLE_SCALE = 1.0 / 9007199254740992.0  # 2**-53


@njit(inline="always", cache=True)
def _next_u64(state):
    state[0] = state[0] + _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX_A
    z = (z ^ (z >> np.uint64(27))) * _MIX_B
    return z ^ (z >> np.uint64(31))


@njit(inline="always", cache=True)
def _rand01(state):
    return (_next_u64(state) >> np.uint64(11)) * _DOUBLE_SCALE


@njit(inline="always", cache=True)
def _randbelow(state, n):
    # multiply-shift on the top 32 bits; bias is O(n / 2**32)
    x = _next_u64(state) >> np.uint64(32)
    return int((x * np.uint64(n)) >> np.uint64(32))


@njit(inline="always", cache=True)
def _draw_color(state, refill_cdf):
    u = _rand01(state)
    for i in range(refill_cdf.size):
        if u < refill_cdf[i]:
            return i
    return refill_cdf.size - 1


@njit(cache=True)
def has_valid_move(kind, color):
    """True iff some color piece has a same-color 4-neighbor."""
    h, w = kind.shape
    for r in range(h):
        for c in range(w):
            if kind[r, c] != K_COLOR:
                continue
            if c + 1 < w and kind[r, c + 1] == K_COLOR and color[r, c + 1] == color[r, c]:
                return True
            if r + 1 < h and kind[r + 1, c] == K_COLOR and color[r + 1, c] == color[r, c]:
                return True
    return False


@njit(cache=True)
def valid_mask(kind, color, out):
    """out[r, c] = True iff the cell is a color piece in a cluster of size >= 2."""
    h, w = kind.shape
    for r in range(h):
        for c in range(w):
            ok = False
            if kind[r, c] == K_COLOR:
                col = color[r, c]
                if r > 0 and kind[r - 1, c] == K_COLOR and color[r - 1, c] == col:
                    ok = True
                elif r + 1 < h and kind[r + 1, c] == K_COLOR and color[r + 1, c] == col:
                    ok = True
                elif c > 0 and kind[r, c - 1] == K_COLOR and color[r, c - 1] == col:
                    ok = True
                elif c + 1 < w and kind[r, c + 1] == K_COLOR and color[r, c + 1] == col:
                    ok = True
            out[r, c] = ok


@njit(cache=True)
def label_clusters(kind, color, labels, sizes):
    """Label maximal 4-connected same-color clusters.

    labels is filled with the cluster index per color cell (-1 elsewhere),
    sizes[k] with the size of cluster k. Returns the number of clusters.
    Scan order (row-major) makes labels deterministic.
    """
    h, w = kind.shape
    labels[:, :] = -1
    stack = np.empty(h * w, np.int32)
    n = 0
    for r0 in range(h):
        for c0 in range(w):
            if kind[r0, c0] != K_COLOR or labels[r0, c0] >= 0:
                continue
            col = color[r0, c0]
            labels[r0, c0] = n
            stack[0] = r0 * w + c0
            top = 1
            size = 0
            while top > 0:
                top -= 1
                f = stack[top]
                r = f // w
                c = f % w
                size += 1
                if r > 0 and kind[r - 1, c] == K_COLOR and color[r - 1, c] == col and labels[r - 1, c] < 0:
                    labels[r - 1, c] = n
                    stack[top] = f - w
                    top += 1
                if r + 1 < h and kind[r + 1, c] == K_COLOR and color[r + 1, c] == col and labels[r + 1, c] < 0:
                    labels[r + 1, c] = n
                    stack[top] = f + w
                    top += 1
                if c > 0 and kind[r, c - 1] == K_COLOR and color[r, c - 1] == col and labels[r, c - 1] < 0:
                    labels[r, c - 1] = n
                    stack[top] = f - 1
                    top += 1
                if c + 1 < w and kind[r, c + 1] == K_COLOR and color[r, c + 1] == col and labels[r, c + 1] < 0:
                    labels[r, c + 1] = n
                    stack[top] = f + 1
                    top += 1
            sizes[n] = size
            n += 1
    return n


@njit(cache=True)
def _settle(kind, color, hp, aux, tag):
    """One straight-down settling sweep; complete for anchored shelves."""
    h, w = kind.shape
    for c in range(w):
        write = h - 1
        for r in range(h - 1, -1, -1):
            k = kind[r, c]
            if k == K_COLOR or k == K_ROCK:
                if write != r:
                    kind[write, c] = k
                    color[write, c] = color[r, c]
                    hp[write, c] = hp[r, c]
                    aux[write, c] = aux[r, c]
                    tag[write, c] = tag[r, c]
                    kind[r, c] = K_EMPTY
                    color[r, c] = -1
                    hp[r, c] = 0
                    aux[r, c] = -1
                    tag[r, c] = 0
                write -= 1
            elif k != K_EMPTY:
                write = r - 1


@njit(cache=True)
def _teleport_pass(kind, color, hp, aux, tag, exit_r, exit_c, hops, n_hops):
    """Hop each piece resting on a teleporter entry to below its exit.

    A hop lands at the bottom of the empty run under the exit; if the cell
    right under the exit is occupied the piece waits above the entry.
    Returns (hopped_any, new_hop_count).
    """
    h, w = kind.shape
    hopped = False
    for r in range(h):
        for c in range(w):
            if kind[r, c] != K_TELE_IN or r == 0:
                continue
            k_above = kind[r - 1, c]
            if k_above != K_COLOR and k_above != K_ROCK:
                continue
            pid = aux[r, c]
            er = exit_r[pid]
            ec = exit_c[pid]
            if er < 0 or er + 1 >= h or kind[er + 1, ec] != K_EMPTY:
                continue
            rr = er + 1
            while rr + 1 < h and kind[rr + 1, ec] == K_EMPTY:
                rr += 1
            kind[rr, ec] = k_above
            color[rr, ec] = color[r - 1, c]
            hp[rr, ec] = hp[r - 1, c]
            aux[rr, ec] = aux[r - 1, c]
            tag[rr, ec] = tag[r - 1, c]
            kind[r - 1, c] = K_EMPTY
            color[r - 1, c] = -1
            hp[r - 1, c] = 0
            aux[r - 1, c] = -1
            tag[r - 1, c] = 0
            if n_hops < hops.shape[0]:
                hops[n_hops, 0] = r - 1
                hops[n_hops, 1] = c
                hops[n_hops, 2] = rr
                hops[n_hops, 3] = ec
                n_hops += 1
            hopped = True
    return hopped, n_hops


@njit(cache=True)
def _gravity(kind, color, hp, aux, tag, n_pairs, exit_r, exit_c, hops, n_hops):
    """Settle to a fixpoint, routing pieces through teleporters."""
    h, w = kind.shape
    _settle(kind, color, hp, aux, tag)
    if n_pairs == 0:
        return n_hops
    guard = 0
    while guard < 4 * h * w + 8:
        guard += 1
        hopped, n_hops = _teleport_pass(kind, color, hp, aux, tag,
                                        exit_r, exit_c, hops, n_hops)
        if not hopped:
            break
        _settle(kind, color, hp, aux, tag)
    return n_hops


@njit(cache=True)
def _find_exits(kind, aux, exit_r, exit_c):
    """Fill the pair-id -> exit cell table; returns the number of pairs."""
    h, w = kind.shape
    exit_r[:] = -1
    exit_c[:] = -1
    n_pairs = 0
    for r in range(h):
        for c in range(w):
            if kind[r, c] == K_TELE_OUT:
                exit_r[aux[r, c]] = r
                exit_c[aux[r, c]] = c
                n_pairs += 1
    return n_pairs


@njit(cache=True)
def gravity_only(kind, color, hp, aux, tag, exit_r, exit_c, hops):
    """Standalone gravity pass; returns the number of teleport hops."""
    tag[:, :] = 0
    n_pairs = _find_exits(kind, aux, exit_r, exit_c)
    return _gravity(kind, color, hp, aux, tag, n_pairs, exit_r, exit_c, hops, 0)


@njit(cache=True)
def apply_move(kind, color, hp, aux, rng_state, refill_cdf, row, col,
               removed, dmg, dmg_cont, hops, refilled, goals, counts,
               in_cluster, hit, tag, stack, queue, cand, exit_r, exit_c):
    """Resolve one tap at (row, col), mutating the board arrays in place.

    Resolution order: cluster removal, blocker damage (one hp per move per
    rock/container adjacent to the removed cluster; adjacent grass clears),
    grass spread when no grass was cleared, gravity with teleport routing,
    then iterative top-run refill.

    Outcome is written into the scratch buffers; counts holds
    [n_removed, n_dmg, n_dmg_cont, n_hops, n_refill, spread_r, spread_c].
    Returns 0 on success, 1 if the tap was not a legal action (board
    untouched in that case).
    """
    h, w = kind.shape
    goals[:] = 0
    counts[:] = 0
    counts[5] = -1
    counts[6] = -1

    if row < 0 or row >= h or col < 0 or col >= w or kind[row, col] != K_COLOR:
        return 1

    # flood fill the tapped cluster
    in_cluster[:, :] = 0
    tap_color = color[row, col]
    in_cluster[row, col] = 1
    stack[0] = row * w + col
    top = 1
    n_cl = 0
    while top > 0:
        top -= 1
        f = stack[top]
        queue[n_cl] = f
        n_cl += 1
        r = f // w
        c = f % w
        if r > 0 and kind[r - 1, c] == K_COLOR and color[r - 1, c] == tap_color and in_cluster[r - 1, c] == 0:
            in_cluster[r - 1, c] = 1
            stack[top] = f - w
            top += 1
        if r + 1 < h and kind[r + 1, c] == K_COLOR and color[r + 1, c] == tap_color and in_cluster[r + 1, c] == 0:
            in_cluster[r + 1, c] = 1
            stack[top] = f + w
            top += 1
        if c > 0 and kind[r, c - 1] == K_COLOR and color[r, c - 1] == tap_color and in_cluster[r, c - 1] == 0:
            in_cluster[r, c - 1] = 1
            stack[top] = f - 1
            top += 1
        if c + 1 < w and kind[r, c + 1] == K_COLOR and color[r, c + 1] == tap_color and in_cluster[r, c + 1] == 0:
            in_cluster[r, c + 1] = 1
            stack[top] = f + 1
            top += 1
    if n_cl < 2:
        return 1

    # remove the cluster
    n_removed = 0
    for i in range(n_cl):
        f = queue[i]
        r = f // w
        c = f % w
        removed[n_removed, 0] = r
        removed[n_removed, 1] = c
        removed[n_removed, 2] = K_COLOR
        removed[n_removed, 3] = tap_color
        removed[n_removed, 4] = 0
        removed[n_removed, 5] = -1
        n_removed += 1
        kind[r, c] = K_EMPTY
        color[r, c] = -1
        hp[r, c] = 0
        aux[r, c] = -1
    goals[0] += n_cl

    # blocker damage: one hp per move per rock / per container, adjacent grass clears
    hit[:, :] = 0
    n_dmg = 0
    n_dmg_cont = 0
    grass_adjacent = False
    for i in range(n_cl):
        f = queue[i]
        r = f // w
        c = f % w
        for d in range(4):
            if d == 0:
                nr, nc = r - 1, c
            elif d == 1:
                nr, nc = r + 1, c
            elif d == 2:
                nr, nc = r, c - 1
            else:
                nr, nc = r, c + 1
            if nr < 0 or nr >= h or nc < 0 or nc >= w:
                continue
            k = kind[nr, nc]
            if k == K_ROCK and hit[nr, nc] == 0:
                hit[nr, nc] = 1
                pre = hp[nr, nc]
                dmg[n_dmg, 0] = nr
                dmg[n_dmg, 1] = nc
                dmg[n_dmg, 2] = K_ROCK
                n_dmg += 1
                hp[nr, nc] = pre - 1
                if pre - 1 <= 0:
                    removed[n_removed, 0] = nr
                    removed[n_removed, 1] = nc
                    removed[n_removed, 2] = K_ROCK
                    removed[n_removed, 3] = -1
                    removed[n_removed, 4] = pre
                    removed[n_removed, 5] = -1
                    n_removed += 1
                    kind[nr, nc] = K_EMPTY
                    hp[nr, nc] = 0
                    goals[1] += 1
            elif k == K_GRASS and hit[nr, nc] == 0:
                hit[nr, nc] = 1
                dmg[n_dmg, 0] = nr
                dmg[n_dmg, 1] = nc
                dmg[n_dmg, 2] = K_GRASS
                n_dmg += 1
                removed[n_removed, 0] = nr
                removed[n_removed, 1] = nc
                removed[n_removed, 2] = K_GRASS
                removed[n_removed, 3] = -1
                removed[n_removed, 4] = 1
                removed[n_removed, 5] = -1
                n_removed += 1
                kind[nr, nc] = K_EMPTY
                hp[nr, nc] = 0
                goals[2] += 1
                grass_adjacent = True
            elif k == K_CONTAINER:
                cid = aux[nr, nc]
                already = False
                for j in range(n_dmg_cont):
                    if dmg_cont[j] == cid:
                        already = True
                        break
                if not already:
                    dmg_cont[n_dmg_cont] = cid
                    n_dmg_cont += 1
                    destroyed = False
                    for rr in range(h):
                        for cc in range(w):
                            if kind[rr, cc] == K_CONTAINER and aux[rr, cc] == cid:
                                pre = hp[rr, cc]
                                hp[rr, cc] = pre - 1
                                if pre - 1 <= 0:
                                    destroyed = True
                                    removed[n_removed, 0] = rr
                                    removed[n_removed, 1] = cc
                                    removed[n_removed, 2] = K_CONTAINER
                                    removed[n_removed, 3] = -1
                                    removed[n_removed, 4] = pre
                                    removed[n_removed, 5] = cid
                                    n_removed += 1
                                    kind[rr, cc] = K_EMPTY
                                    hp[rr, cc] = 0
                                    aux[rr, cc] = -1
                    if destroyed:
                        goals[3] += 1

    # grass spread: only when the tap cleared no grass and grass remains
    if not grass_adjacent:
        has_grass = False
        for r in range(h):
            for c in range(w):
                if kind[r, c] == K_GRASS:
                    has_grass = True
                    break
            if has_grass:
                break
        if has_grass:
            n_cand = 0
            for r in range(h):
                for c in range(w):
                    k = kind[r, c]
                    if k != K_EMPTY and k != K_COLOR:
                        continue
                    near = False
                    if r > 0 and kind[r - 1, c] == K_GRASS:
                        near = True
                    elif r + 1 < h and kind[r + 1, c] == K_GRASS:
                        near = True
                    elif c > 0 and kind[r, c - 1] == K_GRASS:
                        near = True
                    elif c + 1 < w and kind[r, c + 1] == K_GRASS:
                        near = True
                    if near:
                        cand[n_cand] = r * w + c
                        n_cand += 1
            if n_cand > 0:
                f = cand[_randbelow(rng_state, n_cand)]
                r = f // w
                c = f % w
                kind[r, c] = K_GRASS
                color[r, c] = -1
                hp[r, c] = 1
                aux[r, c] = -1
                counts[5] = r
                counts[6] = c

    # gravity, then iterative refill of each column's top empty run
    tag[:, :] = 0
    n_pairs = _find_exits(kind, aux, exit_r, exit_c)
    n_hops = _gravity(kind, color, hp, aux, tag, n_pairs, exit_r, exit_c, hops, 0)
    rounds = 0
    while rounds < h * w + 4:
        rounds += 1
        spawned = False
        for c in range(w):
            r = 0
            while r < h and kind[r, c] == K_EMPTY:
                kind[r, c] = K_COLOR
                color[r, c] = _draw_color(rng_state, refill_cdf)
                hp[r, c] = 0
                aux[r, c] = -1
                tag[r, c] = 1
                spawned = True
                r += 1
        if not spawned:
            break
        n_hops = _gravity(kind, color, hp, aux, tag, n_pairs, exit_r, exit_c, hops, n_hops)

    n_refill = 0
    for r in range(h):
        for c in range(w):
            if tag[r, c] == 1:
                refilled[n_refill, 0] = r
                refilled[n_refill, 1] = c
                refilled[n_refill, 2] = color[r, c]
                n_refill += 1

    counts[0] = n_removed
    counts[1] = n_dmg
    counts[2] = n_dmg_cont
    counts[3] = n_hops
    counts[4] = n_refill
    return 0


@njit(cache=True)
def reshuffle_colors(kind, color, rng_state, max_tries):
    """Permute the colors sitting on color cells until a legal tap exists.

    Preserves the color multiset. Returns the number of tries used, or -1
    if max_tries permutations all left the board dead.
    """
    h, w = kind.shape
    cells = np.empty(h * w, np.int32)
    n = 0
    for r in range(h):
        for c in range(w):
            if kind[r, c] == K_COLOR:
                cells[n] = r * w + c
                n += 1
    if n < 2:
        return -1
    for attempt in range(max_tries):
        for i in range(n - 1, 0, -1):
            j = _randbelow(rng_state, i + 1)
            fi = cells[i]
            fj = cells[j]
            tmp = color[fi // w, fi % w]
            color[fi // w, fi % w] = color[fj // w, fj % w]
            color[fj // w, fj % w] = tmp
        if has_valid_move(kind, color):
            return attempt + 1
    return -1
