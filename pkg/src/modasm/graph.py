"""Edge-labelled tree view (n, G, labels) of a lattice assembly.

Connector indices live in the module body frame: 1 = +y, 2 = +x, 3 = -y,
4 = -x.  Grid rows map to body +y and columns to body +x, so a connection
through connector 1 or 3 hinges about the body x-axis and 2 or 4 about y.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import MalformedConfig, OutOfRange
from .lattice import CENTER, CONNECTED, LatticeConfig

# connector -> (d_row, d_col) towards the neighbour, and body-frame unit vector
CONNECTOR_STEP = {1: (1, 0), 2: (0, 1), 3: (-1, 0), 4: (0, -1)}
CONNECTOR_DIR = {
    1: np.array([0.0, 1.0, 0.0]),
    2: np.array([1.0, 0.0, 0.0]),
    3: np.array([0.0, -1.0, 0.0]),
    4: np.array([-1.0, 0.0, 0.0]),
}
OPPOSITE = {1: 3, 2: 4, 3: 1, 4: 2}


@dataclass(frozen=True)
class Edge:
    parent: int
    child: int
    cp: int
    cc: int

    @property
    def hinge_axis(self) -> str:
        return "x" if {self.cp, self.cc} & {1, 3} else "y"


@dataclass(frozen=True)
class AssemblyGraph:
    n: int
    edges: tuple[Edge, ...]
    cells: tuple[tuple[int, int], ...] = field(default=(), compare=False)
    root: int = 0

    def __post_init__(self):
        if len(self.edges) != self.n - 1:
            raise MalformedConfig(f"{len(self.edges)} edges for {self.n} modules")
        seen = {self.root}
        for k, e in enumerate(self.edges):
            if e.child != k + 1:
                raise MalformedConfig(f"edge {k} must introduce module {k + 1}, got {e.child}")
            if e.cp not in CONNECTOR_DIR or e.cc not in CONNECTOR_DIR:
                raise MalformedConfig(f"connector index out of range in {e}")
            if e.parent not in seen or e.child in seen:
                raise MalformedConfig(f"edge {e} is not in breadth-first tree order")
            seen.add(e.child)

    @property
    def vertices(self) -> range:
        return range(self.n)

    def parents(self) -> list[int]:
        """Parent id per module (-1 for the root)."""
        par = [-1] * self.n
        for e in self.edges:
            par[e.child] = e.parent
        return par

    def to_json(self, alpha=None) -> dict:
        obj = {
            "n": self.n,
            "edges": [{"parent": e.parent, "child": e.child, "cp": e.cp, "cc": e.cc} for e in self.edges],
        }
        if self.cells:
            obj["cells"] = [list(p) for p in self.cells]
        if alpha is not None:
            obj["alpha"] = [float(a) for a in alpha]
        return obj

    @classmethod
    def from_json(cls, obj) -> "AssemblyGraph":
        edges = tuple(Edge(int(e["parent"]), int(e["child"]), int(e["cp"]), int(e["cc"])) for e in obj["edges"])
        cells = tuple(tuple(int(v) for v in p) for p in obj.get("cells", ()))
        return cls(int(obj["n"]), edges, cells)


def extract_graph(config: LatticeConfig) -> AssemblyGraph:
    """Breadth-first tree rooted at the top-left module.

    Children of a module are visited in connector order 1..4.
    """
    grid = config.cells
    centers = sorted(p for p, v in grid.items() if v == CENTER)
    if not centers:
        raise MalformedConfig("configuration has no modules")
    root = centers[0]  # smallest row, then smallest column
    ids = {root: 0}
    order = [root]
    edges = []
    queue = deque([root])
    while queue:
        cur = queue.popleft()
        r, c = cur
        for cp in (1, 2, 3, 4):
            dr, dc = CONNECTOR_STEP[cp]
            if grid.get((r + dr, c + dc)) != CONNECTED:
                continue
            nb = (r + 2 * dr, c + 2 * dc)
            if grid.get(nb) != CENTER:
                raise MalformedConfig(f"connection at {(r + dr, c + dc)} leads nowhere")
            if nb in ids:
                continue
            ids[nb] = len(order)
            order.append(nb)
            edges.append(Edge(ids[cur], ids[nb], cp, OPPOSITE[cp]))
            queue.append(nb)
    if len(order) != len(centers):
        raise MalformedConfig("connections do not span all modules")
    if sum(1 for v in grid.values() if v == CONNECTED) != len(centers) - 1:
        raise MalformedConfig("connections contain a cycle")
    return AssemblyGraph(len(order), tuple(edges), tuple(order))


def edge_angle_to_theta(alpha_i: float) -> float:
    """Relative frame angle of a connection from its hinge angle."""
    if not -math.pi / 2 - 1e-12 <= alpha_i <= math.pi / 2 + 1e-12:
        raise OutOfRange(f"hinge angle {alpha_i} outside [-pi/2, pi/2]")
    return math.pi + alpha_i


def connector_angles(alpha_i: float) -> tuple[float, float]:
    """Equal split of the relative angle between the two connectors."""
    theta = edge_angle_to_theta(alpha_i)
    return theta / 2, theta / 2


def check_alpha(graph: AssemblyGraph, alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=float)
    if a.shape != (graph.n + 1,):
        raise OutOfRange(f"expected {graph.n + 1} angles, got shape {a.shape}")
    if np.any(np.abs(a) > math.pi / 2 + 1e-12):
        raise OutOfRange("angles must lie in [-pi/2, pi/2]")
    return a
