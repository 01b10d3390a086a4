"""Snakes, rhombic tilings, braid moves and flips.

Observation ``j`` (in the renumbering where the a-coefficients increase) is
represented by the lattice vector ``xi_j = (j - T // 2, 1)``.  A sweep sector
with line order ``pi`` (far to near) yields the snake ``V_k = sum_{m >= k}
xi_{pi_m}``, ``k = 1..T+1``.  Vertex ``V_k`` is the lattice image of the set
``{pi_k, ..., pi_T}``; the cell it stands for is the complement of that set
(lines ``pi_1..pi_{k-1}`` lie above it).  Everything here is integer
arithmetic, so comparisons are exact.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .arrangement import FormalWord, SweepResult, sigma_order, sweep, transform_coordinates
from .core import NormalizedPrices, TimeSeriesRecord
from .errors import (
    ConsistencyError, MalformedSnakeError, NotComparableError, NotFlippableError,
    PreconditionError, ValidationError,
)

Position = tuple[int, int]

BFS_MAX_LENGTH = 10


def xi(j: int, T: int) -> Position:
    return (j - T // 2, 1)


def position_of(members: Iterable[int], T: int) -> Position:
    x = h = 0
    for j in members:
        dx, dh = xi(j, T)
        x += dx
        h += dh
    return (x, h)


@dataclass(frozen=True)
class TilingVertex:
    """Lattice vertex; ``spectrum`` is the cell it stands for (bit t = 1 iff t is not in the summed set)."""

    position: Position
    spectrum: tuple[int, ...]

    @classmethod
    def of_set(cls, members: Iterable[int], T: int) -> "TilingVertex":
        s = frozenset(members)
        return cls(position_of(s, T), tuple(0 if t in s else 1 for t in range(1, T + 1)))


@dataclass(frozen=True)
class Snake:
    vertices: tuple[Position, ...]
    permutation: tuple[int, ...]

    @property
    def T(self) -> int:
        return len(self.permutation)


def _check_permutation(perm: Sequence[int]) -> tuple[int, ...]:
    perm = tuple(int(v) for v in perm)
    if sorted(perm) != list(range(1, len(perm) + 1)):
        raise ValidationError(f"{perm} is not a permutation of 1..{len(perm)}")
    return perm


def snake_of_permutation(perm: Sequence[int], T: int | None = None) -> Snake:
    """Chain ``V_k = xi_{perm(k)} + ... + xi_{perm(T)}``, ``V_{T+1} = 0``."""
    perm = _check_permutation(perm)
    T = len(perm) if T is None else T
    if T != len(perm):
        raise ValidationError("permutation length differs from T")
    verts = [(0, 0)]
    for j in reversed(perm):
        dx, dh = xi(j, T)
        verts.append((verts[-1][0] + dx, verts[-1][1] + dh))
    return Snake(tuple(reversed(verts)), perm)


def output_order(y: Sequence[float]) -> tuple[tuple[int, ...], bool]:
    """Observations by decreasing output; ties go to the smaller index, flagged."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or not np.all(np.isfinite(y)):
        raise ValidationError("outputs must be a finite vector")
    order = sorted(range(len(y)), key=lambda t: (-y[t], t))
    tie = len(np.unique(y)) < len(y)
    return tuple(t + 1 for t in order), bool(tie)


@dataclass(frozen=True)
class Rhombus:
    """Tile for the crossing of lines ``pair`` on top of the set ``base``."""

    letter: int
    pair: tuple[int, int]
    base: frozenset
    vertices: tuple[Position, Position, Position, Position]


def _rhombus(letter: int, pair, base, T: int) -> Rhombus:
    i, j = sorted(pair)
    b = frozenset(base)
    verts = (position_of(b, T), position_of(b | {i}, T), position_of(b | {j}, T), position_of(b | {i, j}, T))
    return Rhombus(letter, (i, j), b, verts)


@dataclass(frozen=True)
class RhombicTiling:
    T: int
    snakes: tuple[Snake, ...]
    rhombi: tuple[Rhombus, ...]
    word: FormalWord

    @property
    def lower(self) -> Snake:
        return self.snakes[0]

    @property
    def upper(self) -> Snake:
        return self.snakes[-1]

    @property
    def sigma(self) -> tuple[int, ...]:
        return self.snakes[-1].permutation

    def vertex_sets(self) -> frozenset:
        out = set()
        for sn in self.snakes:
            p = sn.permutation
            out.update(frozenset(p[k:]) for k in range(self.T + 1))
        return frozenset(out)

    def vertices(self) -> tuple[TilingVertex, ...]:
        sets = sorted(self.vertex_sets(), key=lambda s: (len(s), sorted(s)))
        return tuple(TilingVertex.of_set(s, self.T) for s in sets)


def tiling_from_word(word: FormalWord, T: int) -> RhombicTiling:
    perm = list(range(1, T + 1))
    snakes = [snake_of_permutation(perm, T)]
    rhombi = []
    for t in word:
        if not 1 <= t < T:
            raise ValidationError(f"letter {t} out of range for T={T}")
        a, b = perm[t - 1], perm[t]
        rhombi.append(_rhombus(t, (a, b), perm[t + 1:], T))
        perm[t - 1], perm[t] = b, a
        snakes.append(snake_of_permutation(perm, T))
    return RhombicTiling(T, tuple(snakes), tuple(rhombi), word)


def build_tiling(result: SweepResult, T: int | None = None) -> RhombicTiling:
    """Tiling whose snakes are the sector orders of a sweep.

    The family must be numbered by increasing a-coefficient (see
    :meth:`LineFamily.renumbered`), so that the first sector order is the
    identity.
    """
    T = result.T if T is None else T
    if T != result.T:
        raise ValidationError("T differs from the number of lines")
    if result.permutations[0] != tuple(range(1, T + 1)):
        raise PreconditionError("renumber the family by increasing a before building the tiling")
    tiling = tiling_from_word(result.word, T)
    if tuple(sn.permutation for sn in tiling.snakes) != result.permutations:
        raise ConsistencyError("sweep permutations disagree with the word")
    return tiling


@dataclass(frozen=True)
class SeriesTiling:
    tiling: RhombicTiling
    order: tuple[int, ...]  # new index -> original observation (both 1-based)
    sigma: tuple[int, ...]

    def to_new(self, perm: Sequence[int]) -> tuple[int, ...]:
        inv = {old: new for new, old in enumerate(self.order, start=1)}
        return tuple(inv[t] for t in perm)


def tiling_for_series(series: Sequence[TimeSeriesRecord], rho: float) -> SeriesTiling:
    family, order = transform_coordinates(rho, NormalizedPrices.from_series(series)).renumbered()
    tiling = build_tiling(sweep(family))
    sigma = sigma_order(family)
    if sigma != tiling.sigma:
        raise ConsistencyError(f"final sector order {tiling.sigma} differs from sigma {sigma}")
    return SeriesTiling(tiling, tuple(int(o) + 1 for o in order), sigma)


def snake_in_tiling(tiling: RhombicTiling, snake: Snake) -> bool:
    return any(sn.vertices == snake.vertices for sn in tiling.snakes)


def _heights_ok(snake: Snake, T: int) -> bool:
    return [v[1] for v in snake.vertices] == list(range(T, -1, -1))


def snake_in_region(tiling: RhombicTiling, snake: Snake) -> bool:
    """Is every vertex between the two boundary snakes at its height?"""
    T = tiling.T
    if len(snake.vertices) != T + 1 or not _heights_ok(snake, T):
        raise MalformedSnakeError(f"snake heights must run {T}, {T - 1}, ..., 0")
    lo, hi = tiling.upper.vertices, tiling.lower.vertices
    return all(l[0] <= v[0] <= u[0] for v, l, u in zip(snake.vertices, lo, hi))


def apply_braid_move(word: FormalWord, position: int, kind: str) -> FormalWord:
    """Rewrite two (commute) or three (braid3) letters starting at ``position`` (0-based)."""
    w = list(word.letters)
    if kind == "commute":
        if not 0 <= position < len(w) - 1:
            raise PreconditionError("commute needs two letters at the position")
        a, b = w[position:position + 2]
        if abs(a - b) < 2:
            raise PreconditionError(f"s{a} and s{b} do not commute")
        w[position:position + 2] = [b, a]
    elif kind == "braid3":
        if not 0 <= position < len(w) - 2:
            raise PreconditionError("braid3 needs three letters at the position")
        a, b, c = w[position:position + 3]
        if a != c or abs(a - b) != 1:
            raise PreconditionError(f"s{a}s{b}s{c} is not of the form s_t s_t+1 s_t")
        w[position:position + 3] = [b, a, b]
    else:
        raise ValidationError(f"unknown move kind {kind!r}")
    return FormalWord(tuple(w))


def _moves(w: tuple[int, ...]):
    for i in range(len(w) - 1):
        if abs(w[i] - w[i + 1]) >= 2:
            yield i, "commute", w[:i] + (w[i + 1], w[i]) + w[i + 2:]
    for i in range(len(w) - 2):
        a, b, c = w[i:i + 3]
        if a == c and abs(a - b) == 1:
            yield i, "braid3", w[:i] + (b, a, b) + w[i + 3:]


@dataclass(frozen=True)
class Connection:
    connected: bool
    moves: tuple[tuple[int, str], ...] | None

    def __iter__(self):
        return iter((self.connected, self.moves))


def words_connected(w1: FormalWord, w2: FormalWord, sigma: Sequence[int] | None = None) -> Connection:
    """Sequence of braid moves turning ``w1`` into ``w2`` (breadth-first, so shortest)."""
    T = max([*w1.letters, *w2.letters, 1]) + 1
    if sigma is not None:
        T = max(T, len(sigma))
    p1, p2 = w1.permutation(T), w2.permutation(T)
    if p1 != p2:
        raise NotComparableError(f"words evaluate to different permutations {p1} and {p2}")
    if sigma is not None and tuple(sigma) + tuple(range(len(sigma) + 1, T + 1)) != p1:
        raise NotComparableError(f"words do not evaluate to {tuple(sigma)}")
    a, b = tuple(w1.letters), tuple(w2.letters)
    if a == b:
        return Connection(True, ())
    if len(a) != len(b) or len(a) > BFS_MAX_LENGTH:
        return Connection(True, None) if len(a) == len(b) else Connection(False, None)
    parent = {a: None}
    queue = deque([a])
    while queue:
        w = queue.popleft()
        for pos, kind, nxt in _moves(w):
            if nxt in parent:
                continue
            parent[nxt] = (w, pos, kind)
            if nxt == b:
                path = []
                cur = b
                while parent[cur] is not None:
                    prev, pos_, kind_ = parent[cur]
                    path.append((pos_, kind_))
                    cur = prev
                return Connection(True, tuple(reversed(path)))
            queue.append(nxt)
    return Connection(False, None)


@dataclass(frozen=True)
class Hexagon:
    """Three rhombi around an interior vertex; lines ``i < j < k`` on top of ``base``."""

    base: frozenset
    lines: tuple[int, int, int]
    interior: frozenset

    def position(self, T: int) -> Position:
        return position_of(self.interior, T)


def _hexagon_rhombi(base: frozenset, lines, interior_is_middle: bool):
    i, j, k = lines
    if interior_is_middle:
        return {(i, j): base, (j, k): base, (i, k): base | {j}}
    return {(i, j): base | {k}, (i, k): base, (j, k): base | {i}}


def hexagons(tiling: RhombicTiling) -> tuple[Hexagon, ...]:
    by_pair = {r.pair: r.base for r in tiling.rhombi}
    out = []
    pairs = sorted(by_pair)
    for i, j in pairs:
        for k in range(j + 1, tiling.T + 1):
            if (i, k) not in by_pair or (j, k) not in by_pair:
                continue
            base = by_pair[(i, j)]
            for middle in (True, False):
                R = base if middle else base - {k}
                if not middle and k not in base:
                    continue
                want = _hexagon_rhombi(R, (i, j, k), middle)
                if all(by_pair[p] == s for p, s in want.items()):
                    interior = R | {j} if middle else R | {i, k}
                    out.append(Hexagon(R, (i, j, k), interior))
    return tuple(sorted(out, key=lambda h: (h.lines, sorted(h.base))))


def _peel(T: int, rhombi: dict, rank: dict, group: frozenset) -> tuple[FormalWord, list]:
    """Recover a word by removing rhombi from the identity snake upward.

    Among available rhombi the one ranked earliest is taken.  Members of
    ``group`` are deferred as long as anything else is available; once one is
    taken the rest of the group follows immediately when possible.
    """
    remaining = dict(rhombi)
    perm = list(range(1, T + 1))
    letters, pairs = [], []
    pending = set()
    while remaining:
        avail = []
        for t in range(1, T):
            pair = tuple(sorted((perm[t - 1], perm[t])))
            if remaining.get(pair) == frozenset(perm[t + 1:]):
                avail.append((t, pair))
        if not avail:
            raise ConsistencyError("rhombus set does not form a tiling")
        forced = [c for c in avail if c[1] in pending]
        t, pair = min(forced or avail, key=lambda c: (c[1] in group, rank.get(c[1], len(rank))))
        if pair in group and not pending:
            pending = set(group) - {pair}
        pending.discard(pair)
        del remaining[pair]
        letters.append(t)
        pairs.append(pair)
        perm[t - 1], perm[t] = perm[t], perm[t - 1]
    return FormalWord(tuple(letters)), pairs


def flip(tiling: RhombicTiling, hexagon: Hexagon | Position) -> RhombicTiling:
    """Replace the three rhombi of a hexagon by the other three."""
    found = hexagons(tiling)
    if isinstance(hexagon, Hexagon):
        match = [h for h in found if h == hexagon]
    else:
        match = [h for h in found if h.position(tiling.T) == tuple(hexagon)]
    if not match:
        raise NotFlippableError(f"no flippable hexagon at {hexagon}")
    if len(match) > 1:
        raise NotFlippableError(f"several hexagons share the interior position {hexagon}; pass a Hexagon")
    hx = match[0]
    i, j, k = hx.lines
    middle = hx.interior == hx.base | {j}
    rhombi = {r.pair: r.base for r in tiling.rhombi}
    rank = {r.pair: n for n, r in enumerate(tiling.rhombi)}
    group = frozenset({(i, j), (i, k), (j, k)})
    word, pairs = _peel(tiling.T, rhombi, rank, group)
    rhombi.update(_hexagon_rhombi(hx.base, hx.lines, not middle))
    # with the hexagon read consecutively, the flip is a single braid3 move
    start = min(n for n, pr in enumerate(pairs) if pr in group)
    if set(pairs[start:start + 3]) == group:
        flipped = tiling_from_word(apply_braid_move(word, start, "braid3"), tiling.T)
        if {r.pair: r.base for r in flipped.rhombi} == rhombi:
            return flipped
    return tiling_from_word(_peel(tiling.T, rhombi, rank, group)[0], tiling.T)


def canonical_word(tiling: RhombicTiling, group: Iterable[tuple[int, int]] = ()) -> FormalWord:
    """Word read off the tiling with the rhombi of ``group`` kept consecutive."""
    rhombi = {r.pair: r.base for r in tiling.rhombi}
    rank = {r.pair: n for n, r in enumerate(tiling.rhombi)}
    return _peel(tiling.T, rhombi, rank, frozenset(group))[0]

