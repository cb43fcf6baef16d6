"""Planar lattice assemblies and their enumeration up to C4 rotation.

Module centers sit on even ``(row, col)`` coordinates.  The four interface
cells of a module are its N/E/S/W neighbours, so two adjacent modules share a
single interface cell.  Cell codes follow the matrix encoding::

    0  empty            1  available connector
    2  connected        3  blocked (adjacent, not connected)
    6  module center
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import MalformedConfig, NotAvailable, OccupiedCell, ResourceLimit

EMPTY, AVAILABLE, CONNECTED, BLOCKED, CENTER = 0, 1, 2, 3, 6

_STEPS = ((-1, 0), (0, 1), (1, 0), (0, -1))

Cell = tuple[int, int]


class LatticeConfig:
    """Immutable sparse grid encoding of an assembly."""

    __slots__ = ("_cells", "_hash", "_n")

    def __init__(self, cells: Mapping[Cell, int] | Iterable[tuple[int, int, int]]):
        if isinstance(cells, Mapping):
            grid = {(int(r), int(c)): int(v) for (r, c), v in cells.items() if v}
        else:
            grid = {(int(r), int(c)): int(v) for r, c, v in cells if v}
        self._cells = grid
        self._n = sum(1 for v in grid.values() if v == CENTER)
        self._hash = None

    @classmethod
    def single(cls) -> "LatticeConfig":
        return cls({(0, 0): CENTER, (-1, 0): 1, (1, 0): 1, (0, -1): 1, (0, 1): 1})

    @classmethod
    def from_centers(cls, centers: Iterable[Cell], links: Iterable[tuple[Cell, Cell]]) -> "LatticeConfig":
        """Build a config from module centers (even coords) and connected pairs.

        Adjacent pairs not listed in ``links`` are coded as blocked.
        """
        centers = [tuple(map(int, p)) for p in centers]
        occupied = set(centers)
        linked = set()
        for a, b in links:
            linked.add(((a[0] + b[0]) // 2, (a[1] + b[1]) // 2))
        cells: dict[Cell, int] = {}
        for r, c in centers:
            if r % 2 or c % 2:
                raise MalformedConfig(f"center {(r, c)} is not on even coordinates")
            cells[(r, c)] = CENTER
            for dr, dc in _STEPS:
                face = (r + dr, c + dc)
                if (r + 2 * dr, c + 2 * dc) in occupied:
                    cells[face] = CONNECTED if face in linked else BLOCKED
                else:
                    cells[face] = AVAILABLE
        return cls(cells)

    @property
    def n(self) -> int:
        return self._n

    @property
    def cells(self) -> dict[Cell, int]:
        return dict(self._cells)

    def code(self, cell: Cell) -> int:
        return self._cells.get(tuple(cell), EMPTY)

    def centers(self) -> list[Cell]:
        return sorted(p for p, v in self._cells.items() if v == CENTER)

    def connections(self) -> list[Cell]:
        return sorted(p for p, v in self._cells.items() if v == CONNECTED)

    def available(self) -> list[Cell]:
        return sorted(p for p, v in self._cells.items() if v == AVAILABLE)

    def links(self) -> list[tuple[Cell, Cell]]:
        """Connected center pairs, one per code-2 cell."""
        out = []
        for r, c in self.connections():
            if r % 2:
                out.append(((r - 1, c), (r + 1, c)))
            else:
                out.append(((r, c - 1), (r, c + 1)))
        return out

    def validate(self) -> None:
        """Raise :class:`MalformedConfig` unless every grid invariant holds."""
        centers = self.centers()
        occupied = set(centers)
        for (r, c), v in self._cells.items():
            if v not in (AVAILABLE, CONNECTED, BLOCKED, CENTER):
                raise MalformedConfig(f"unknown code {v} at {(r, c)}")
            if v == CENTER:
                if r % 2 or c % 2:
                    raise MalformedConfig(f"center {(r, c)} is not on even coordinates")
                continue
            if (r + c) % 2 == 0:
                raise MalformedConfig(f"interface cell {(r, c)} not between centers")
            if r % 2:
                a, b = (r - 1, c), (r + 1, c)
            else:
                a, b = (r, c - 1), (r, c + 1)
            both = a in occupied and b in occupied
            if not (a in occupied or b in occupied):
                raise MalformedConfig(f"orphan interface cell {(r, c)}")
            if both and v == AVAILABLE:
                raise MalformedConfig(f"dangling adjacency at {(r, c)}")
            if not both and v != AVAILABLE:
                raise MalformedConfig(f"code {v} at {(r, c)} faces an empty cell")
        for r, c in centers:
            for dr, dc in _STEPS:
                if (r + dr, c + dc) not in self._cells:
                    raise MalformedConfig(f"center {(r, c)} lacks an interface cell")
        # spanning tree check on code-2 cells
        links = self.links()
        if len(links) != len(centers) - 1:
            raise MalformedConfig(f"{len(links)} connections for {len(centers)} modules")
        parent = {p: p for p in centers}

        def find(p):
            while parent[p] != p:
                parent[p] = parent[parent[p]]
                p = parent[p]
            return p

        for a, b in links:
            ra, rb = find(a), find(b)
            if ra == rb:
                raise MalformedConfig("connections contain a cycle")
            parent[ra] = rb

    def rotate90(self, times: int = 1) -> "LatticeConfig":
        """Rotate the grid by ``times`` quarter turns."""
        cells = self._cells
        for _ in range(times % 4):
            cells = {(c, -r): v for (r, c), v in cells.items()}
        return LatticeConfig(cells)

    def normalized(self) -> "LatticeConfig":
        """Translate so that the top-left center bounding corner is (0, 0)."""
        r0, c0 = _center_origin(self._cells)
        return LatticeConfig({(r - r0, c - c0): v for (r, c), v in self._cells.items()})

    def sorted_cells(self) -> list[tuple[int, int, int]]:
        return [(r, c, v) for (r, c), v in sorted(self._cells.items())]

    def to_json(self) -> dict:
        return {"n": self.n, "cells": [list(t) for t in self.sorted_cells()]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "LatticeConfig":
        cfg = cls([tuple(t) for t in obj["cells"]])
        if "n" in obj and int(obj["n"]) != cfg.n:
            raise MalformedConfig(f"declared n={obj['n']} but grid holds {cfg.n} centers")
        return cfg

    def __eq__(self, other) -> bool:
        return isinstance(other, LatticeConfig) and self._cells == other._cells

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._cells.items()))
        return self._hash

    def __repr__(self) -> str:
        return f"LatticeConfig(n={self.n}, cells={len(self._cells)})"

    def render(self) -> str:
        """Dense text picture of the grid, one character per cell."""
        rows = [r for r, _ in self._cells]
        cols = [c for _, c in self._cells]
        lines = []
        for r in range(min(rows), max(rows) + 1):
            line = "".join(str(self._cells.get((r, c), 0)) if (r, c) in self._cells else "."
                           for c in range(min(cols), max(cols) + 1))
            lines.append(line)
        return "\n".join(lines)


def _center_origin(cells: Mapping[Cell, int]) -> Cell:
    r0 = min(r for (r, c), v in cells.items() if v == CENTER)
    c0 = min(c for (r, c), v in cells.items() if v == CENTER)
    return r0, c0


def _serialize(cells: Mapping[Cell, int]) -> bytes:
    # bounding box of all cells: centers +/- 1
    r0, c0 = _center_origin(cells)
    r0 -= 1
    c0 -= 1
    h = max(r for r, _ in cells) - r0 + 1
    w = max(c for _, c in cells) - c0 + 1
    buf = bytearray(4 + h * w)
    buf[0:4] = h.to_bytes(2, "big") + w.to_bytes(2, "big")
    for (r, c), v in cells.items():
        buf[4 + (r - r0) * w + (c - c0)] = v
    return bytes(buf)


def _rotations(cells: Mapping[Cell, int]) -> Iterator[dict[Cell, int]]:
    cur = dict(cells)
    yield cur
    for _ in range(3):
        cur = {(c, -r): v for (r, c), v in cur.items()}
        yield cur


def canonicalize(config: LatticeConfig) -> bytes:
    """C4-invariant key: the smallest row-major grid serialization over 4 rotations."""
    return min(_serialize(rot) for rot in _rotations(config._cells))


def canonical_form(config: LatticeConfig) -> tuple[bytes, LatticeConfig]:
    """Canonical key together with the normalized rotation that attains it."""
    best_key, best = None, None
    for rot in _rotations(config._cells):
        key = _serialize(rot)
        if best_key is None or key < best_key:
            best_key, best = key, rot
    return best_key, LatticeConfig(best).normalized()


def attach(parent: LatticeConfig, connector_cell: Cell) -> LatticeConfig:
    """Add one module across the available connector ``connector_cell``."""
    r, c = map(int, connector_cell)
    code = parent.code((r, c))
    if code in (CONNECTED, BLOCKED, CENTER):
        raise OccupiedCell(f"cell {(r, c)} already borders or holds a module")
    if code != AVAILABLE:
        raise NotAvailable(f"cell {(r, c)} has code {code}, expected {AVAILABLE}")
    cells = parent._cells
    if r % 2:
        ends = ((r - 1, c), (r + 1, c))
    else:
        ends = ((r, c - 1), (r, c + 1))
    if cells.get(ends[0]) == CENTER and cells.get(ends[1]) == CENTER:
        raise OccupiedCell(f"target center across {(r, c)} is occupied")
    target = ends[1] if cells.get(ends[0]) == CENTER else ends[0]
    return LatticeConfig(_attach_cells(cells, (r, c), target))


def _attach_cells(cells: Mapping[Cell, int], face: Cell, target: Cell) -> dict[Cell, int]:
    new = dict(cells)
    tr, tc = target
    new[target] = CENTER
    for dr, dc in _STEPS:
        f = (tr + dr, tc + dc)
        if f == face:
            new[f] = CONNECTED
        elif new.get((tr + 2 * dr, tc + 2 * dc)) == CENTER:
            new[f] = BLOCKED
        else:
            new[f] = AVAILABLE
    return new


def _children(cells: Mapping[Cell, int]) -> Iterator[dict[Cell, int]]:
    for (r, c), v in cells.items():
        if v != AVAILABLE:
            continue
        if r % 2:
            a, b = (r - 1, c), (r + 1, c)
        else:
            a, b = (r, c - 1), (r, c + 1)
        target = b if cells.get(a) == CENTER else a
        yield _attach_cells(cells, (r, c), target)


def grow(configs: Iterable[LatticeConfig], limit: int | None = None) -> list[LatticeConfig]:
    """All non-isomorphic one-module extensions, sorted by canonical key.

    Candidates are deduplicated as they are generated.  Each stored
    representative is the normalized rotation that attains its key.
    """
    seen: dict[bytes, dict[Cell, int]] = {}
    for cfg in configs:
        for child in _children(cfg._cells):
            best_key, best = None, None
            for rot in _rotations(child):
                key = _serialize(rot)
                if best_key is None or key < best_key:
                    best_key, best = key, rot
            if best_key not in seen:
                seen[best_key] = best
                if limit is not None and len(seen) > limit:
                    raise ResourceLimit(f"more than {limit} configurations at one level")
    return [LatticeConfig(seen[k]).normalized() for k in sorted(seen)]


def enumerate_exhaustive(n: int, limit: int = 250_000) -> list[LatticeConfig]:
    """Every non-isomorphic assembly of ``n`` modules, sorted by canonical key.

    ``limit`` caps the number of configurations held at any level and raises
    :class:`ResourceLimit` when exceeded (n=11 needs 168249).
    """
    return enumerate_levels(n, limit=limit)[n]


def enumerate_levels(n: int, limit: int = 250_000) -> dict[int, list[LatticeConfig]]:
    if n < 1:
        raise ValueError("n must be >= 1")
    levels = {1: [LatticeConfig.single()]}
    for k in range(2, n + 1):
        levels[k] = grow(levels[k - 1], limit=limit)
    return levels


def radius_of_gyration(config: LatticeConfig) -> float:
    """RMS distance of module centers from their mean, in grid units."""
    pts = np.asarray(config.centers(), dtype=float)
    return float(np.sqrt(np.mean(np.sum((pts - pts.mean(axis=0)) ** 2, axis=1))))


@dataclass(frozen=True)
class SamplingParams:
    """Per-level sample sizes and Gaussian widths.

    ``count`` and ``sigma`` may be scalars or mappings keyed by module count.
    A missing ``sigma`` falls back to half the spread of the radii of
    gyration at that level (never below 0.1).
    """

    count: int | Mapping[int, int] = 500
    sigma: float | Mapping[int, float] | None = None
    seed: int = 0

    def __post_init__(self):
        counts = self.count.values() if isinstance(self.count, Mapping) else [self.count]
        if any(int(v) < 1 for v in counts):
            raise ValueError("sample counts must be >= 1")
        if self.sigma is not None:
            sig = self.sigma.values() if isinstance(self.sigma, Mapping) else [self.sigma]
            if any(not float(s) > 0 for s in sig):
                raise ValueError("sigma must be positive")

    def count_for(self, n: int) -> int:
        if isinstance(self.count, Mapping):
            return int(self.count[n])
        return int(self.count)

    def sigma_for(self, n: int, gyration: np.ndarray) -> float:
        if isinstance(self.sigma, Mapping) and n in self.sigma:
            return float(self.sigma[n])
        if self.sigma is not None and not isinstance(self.sigma, Mapping):
            return float(self.sigma)
        return max(0.5 * float(np.std(gyration)), 0.1)


def gaussian_weights(gyration, sigma: float) -> np.ndarray:
    """Unnormalized weights favouring the most compact configurations."""
    g = np.asarray(gyration, dtype=float)
    return np.exp(-((g - g.min()) ** 2) / (2.0 * sigma**2))


def weighted_sample_without_replacement(weights, k: int, rng: np.random.Generator) -> list[int]:
    """Sequential draws with renormalization over the remaining items."""
    w = np.array(weights, dtype=float)
    remaining = np.ones(len(w), dtype=bool)
    picked = []
    for _ in range(k):
        p = np.where(remaining, w, 0.0)
        total = p.sum()
        if total <= 0.0 or not math.isfinite(total):
            # all surviving weights underflowed; fall back to uniform
            p = remaining.astype(float)
            total = p.sum()
        idx = int(np.searchsorted(np.cumsum(p / total), rng.random(), side="right"))
        idx = min(idx, len(w) - 1)
        while not remaining[idx]:
            idx -= 1
        picked.append(idx)
        remaining[idx] = False
    return picked


def sample_configs(
    configs: Iterable[LatticeConfig],
    params: SamplingParams,
    n: int | None = None,
    rng: np.random.Generator | None = None,
) -> list[LatticeConfig]:
    configs = list(configs)
    if not configs:
        raise ValueError("cannot sample from an empty set")
    n = configs[0].n if n is None else n
    k = params.count_for(n)
    if len(configs) <= k:
        return configs
    g = np.array([radius_of_gyration(c) for c in configs])
    w = gaussian_weights(g, params.sigma_for(n, g))
    if rng is None:
        rng = np.random.default_rng([params.seed, n])
    idx = weighted_sample_without_replacement(w, k, rng)
    return [configs[i] for i in sorted(idx)]


def enumerate_sampled(n: int, params: SamplingParams, limit: int | None = None) -> dict[int, list[LatticeConfig]]:
    """Grow level by level, keeping at most ``params.count_for(k)`` per level."""
    if n < 1:
        raise ValueError("n must be >= 1")
    levels = {1: [LatticeConfig.single()]}
    for k in range(2, n + 1):
        grown = grow(levels[k - 1], limit=limit)
        levels[k] = sample_configs(grown, params, n=k)
    return levels



def random_growth(n: int, rng: np.random.Generator) -> LatticeConfig:
    """One assembly grown by attaching at uniformly chosen free connectors."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cfg = LatticeConfig.single()
    for _ in range(n - 1):
        free = cfg.available()
        cfg = attach(cfg, free[int(rng.integers(len(free)))])
    return cfg
