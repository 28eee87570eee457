"""Wired exhaustions of the built-in infinite models.

Level ``n`` of every model is a finite graph whose interior vertices carry
integer coordinates and whose last vertex is the wired boundary, the single
image of everything outside the truncation. Coordinates are tuples; for the
line a bare integer is accepted wherever a coordinate is expected.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InputError, NotInterior, UnknownModel
from .graph import Graph

Coord = tuple

MODELS = ("line", "cycle-calibration", "grid2d", "triangular", "comb")
VARIANTS = {
    "line": ("symmetric", "one-sided-right", "one-sided-left"),
    "cycle-calibration": ("symmetric",),
    "grid2d": ("box", "diamond"),
    "triangular": ("box",),
    "comb": ("symmetric",),
}
DEFAULT_TOOTH = 3


@dataclass(frozen=True)
class Level:
    """One wired truncation."""

    n: int
    graph: Graph
    boundary: int
    coords: tuple
    embed: dict = field(repr=False)
    anchor: int

    @property
    def interior_count(self) -> int:
        return self.graph.vertex_count - 1

    def vid(self, coord) -> int:
        key = _as_coord(coord)
        try:
            return self.embed[key]
        except KeyError:
            raise NotInterior(f"{key} is not interior at level {self.n}") from None

    def vids(self, coords: Iterable) -> list[int]:
        return [self.vid(c) for c in coords]

    def coord(self, v: int):
        return self.coords[v]

    @property
    def interior_mask(self) -> np.ndarray:
        m = np.ones(self.graph.vertex_count, dtype=bool)
        m[self.boundary] = False
        return m

    def interior_distances(self, source=None) -> np.ndarray:
        """Hop distance from ``source`` (default: anchor) avoiding the wired vertex."""
        src = self.anchor if source is None else source
        return self.graph.hop_distances(src, blocked=[self.boundary])


def _as_coord(c) -> Coord:
    if isinstance(c, (int, np.integer)):
        return (int(c),)
    return tuple(int(t) for t in c)


def _wired_level(n: int, interior: list[Coord], offsets: Sequence[Coord],
                 wire: Callable[[Coord], bool] = lambda c: True) -> Level:
    """Build a level from interior coordinates and lattice offsets.

    ``wire(c)`` decides whether an exterior neighbour ``c`` is glued to the
    boundary vertex (True) or dropped (a reflecting cut).
    """
    interior = sorted(interior)
    embed = {c: i for i, c in enumerate(interior)}
    wd = len(interior)
    rows = []
    for c, i in embed.items():
        for off in offsets:
            d = tuple(a + b for a, b in zip(c, off))
            j = embed.get(d)
            if j is None:
                if wire(d):
                    rows.append((i, wd, 1.0))
            elif i < j:
                rows.append((i, j, 1.0))
    g = Graph(wd + 1, np.array(rows, dtype=float))
    origin = tuple(0 for _ in interior[0])
    return Level(n, g, wd, tuple(interior) + (None,), embed, embed[origin])


def _line_level(n: int, variant: str) -> Level:
    offs = [(1,), (-1,)]
    if variant == "symmetric":
        return _wired_level(n, [(k,) for k in range(-n, n + 1)], offs)
    far = n * n
    if variant == "one-sided-right":
        return _wired_level(n, [(k,) for k in range(-far, n + 1)], offs, wire=lambda c: c[0] > n)
    if variant == "one-sided-left":
        return _wired_level(n, [(k,) for k in range(-n, far + 1)], offs, wire=lambda c: c[0] < -n)
    raise UnknownModel(f"line variant {variant!r}")


def _cycle_level(n: int) -> Level:
    # the cycle C_{2n+2} with the antipode of 0 playing the wired vertex
    m = 2 * n + 2
    labels = [(k,) for k in range(-n, n + 1)]
    embed = {c: i for i, c in enumerate(labels)}
    wd = len(labels)
    ring = [embed[(k,)] for k in range(0, n + 1)] + [wd] + [embed[(k,)] for k in range(-n, 0)]
    rows = [(ring[i], ring[(i + 1) % m], 1.0) for i in range(m)]
    g = Graph(wd + 1, np.array(rows, dtype=float))
    return Level(n, g, wd, tuple(labels) + (None,), embed, embed[(0,)])


_SQUARE = [(1, 0), (-1, 0), (0, 1), (0, -1)]
_TRI = _SQUARE + [(1, -1), (-1, 1)]


def _grid_level(n: int, variant: str) -> Level:
    if variant == "box":
        pts = [(i, j) for i in range(-n, n + 1) for j in range(-n, n + 1)]
    elif variant == "diamond":
        pts = [(i, j) for i in range(-n, n + 1) for j in range(-n, n + 1) if abs(i) + abs(j) <= n]
    else:
        raise UnknownModel(f"grid2d variant {variant!r}")
    return _wired_level(n, pts, _SQUARE)


def _triangular_level(n: int) -> Level:
    pts = [(i, j) for i in range(-n, n + 1) for j in range(-n, n + 1)]
    return _wired_level(n, pts, _TRI)


def _comb_level(n: int, tooth: int) -> Level:
    # spine Z x {0}; every spine vertex carries a vertical tooth of length `tooth`
    interior = sorted((i, j) for i in range(-n, n + 1) for j in range(0, tooth + 1))
    embed = {c: k for k, c in enumerate(interior)}
    wd = len(interior)
    rows = []
    for i in range(-n, n + 1):
        for j in range(tooth):
            rows.append((embed[(i, j)], embed[(i, j + 1)], 1.0))
        right = embed.get((i + 1, 0))
        rows.append((embed[(i, 0)], wd if right is None else right, 1.0))
    rows.append((embed[(-n, 0)], wd, 1.0))
    g = Graph(wd + 1, np.array(rows, dtype=float))
    return Level(n, g, wd, tuple(interior) + (None,), embed, embed[(0, 0)])


class Exhaustion:
    """Increasing wired truncations of one model, built lazily per level."""

    def __init__(self, model: str, levels: Sequence[int], variant: str | None = None,
                 builder: Callable[[int], Level] | None = None, tooth: int = DEFAULT_TOOTH):
        levels = [int(k) for k in levels]
        if not levels:
            raise InputError("at least one level is required")
        if any(b <= a for a, b in zip(levels, levels[1:])) or levels[0] < 1:
            raise InputError(f"levels must be positive and strictly increasing, got {levels}")
        if builder is None:
            if model not in MODELS:
                raise UnknownModel(f"unknown model {model!r}; choose from {', '.join(MODELS)}")
            variant = variant or VARIANTS[model][0]
            if variant not in VARIANTS[model]:
                raise UnknownModel(f"model {model!r} has no variant {variant!r}")
            builder = _builder(model, variant, tooth)
        self.model = model
        self.variant = variant or "custom"
        self.levels = tuple(levels)
        self._builder = builder
        self._cache: dict[int, Level] = {}
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"Exhaustion({self.model!r}, {list(self.levels)}, variant={self.variant!r})"

    @property
    def sequence_id(self) -> str:
        return f"{self.model}:{self.variant}"

    @property
    def anchor_coord(self):
        return self.level(self.levels[0]).coords[self.level(self.levels[0]).anchor]

    def level(self, n: int | None = None) -> Level:
        n = self.levels[-1] if n is None else int(n)
        with self._lock:
            lv = self._cache.get(n)
            if lv is None:
                lv = self._builder(n)
                self._cache[n] = lv
        return lv

    @property
    def top(self) -> Level:
        return self.level(self.levels[-1])

    def __iter__(self):
        return (self.level(k) for k in self.levels)

    def with_levels(self, levels: Sequence[int]) -> "Exhaustion":
        out = Exhaustion(self.model, levels, builder=self._builder)
        out.variant = self.variant
        out._cache = {k: v for k, v in self._cache.items() if k in set(levels)}
        return out

    def receding_distances(self) -> list[int]:
        """Hop distance from the anchor to the wired vertex at each level."""
        return [int(lv.graph.hop_distances(lv.anchor)[lv.boundary]) for lv in self]

    def goes_to_infinity(self) -> bool:
        """Best available evidence: distances nondecreasing and strictly growing overall."""
        d = self.receding_distances()
        return all(b >= a for a, b in zip(d, d[1:])) and d[-1] > d[0]

    def check_embeddings(self) -> bool:
        """Each level's interior coordinates reappear at the next level."""
        lvls = list(self)
        for a, b in zip(lvls, lvls[1:]):
            if not set(a.embed).issubset(b.embed):
                return False
        return True


def _builder(model: str, variant: str, tooth: int) -> Callable[[int], Level]:
    if model == "line":
        return lambda n: _line_level(n, variant)
    if model == "cycle-calibration":
        return _cycle_level
    if model == "grid2d":
        return lambda n: _grid_level(n, variant)
    if model == "triangular":
        return _triangular_level
    if model == "comb":
        return lambda n: _comb_level(n, tooth)
    raise UnknownModel(model)


def make_exhaustion(model: str, levels: Sequence[int], variant: str | None = None, **kw) -> Exhaustion:
    return Exhaustion(model, levels, variant=variant, **kw)


def custom_exhaustion(levels: Sequence[int], build: Callable[[int], tuple[Graph, int, dict, int]],
                      name: str = "custom") -> Exhaustion:
    """Exhaustion from a user callback ``n -> (graph, wired vertex, embed, anchor vid)``."""

    def builder(n: int) -> Level:
        g, wd, embed, anchor = build(n)
        coords = [None] * g.vertex_count
        for c, v in embed.items():
            coords[v] = _as_coord(c)
        return Level(n, g, wd, tuple(coords), {_as_coord(c): v for c, v in embed.items()}, anchor)

    return Exhaustion(name, levels, builder=builder)


def single_level(g: Graph, boundary: int, anchor: int = 0, n: int = 1) -> Exhaustion:
    """Wrap a finite graph with a designated wired vertex as a one-level exhaustion."""
    embed = {(v,): v for v in range(g.vertex_count) if v != boundary}

    def builder(_n: int) -> Level:
        coords = tuple((v,) if v != boundary else None for v in range(g.vertex_count))
        return Level(n, g, boundary, coords, embed, anchor)

    return Exhaustion("graph-file", [n], builder=builder)
