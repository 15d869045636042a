"""Interaction topologies and coupling weights.

Edge convention: the ordered pair ``(i, j)`` carries weight ``L_ij`` and means
agent ``i`` receives from agent ``j``, i.e. ``j`` is an in-neighbor of ``i``.
Undirected graphs store both orientations. Self-loops are never stored; the
diagonal ``L_ii = -sum_j L_ij`` is derived where needed.

A weight is either a float or a callable ``k -> float``, so time-varying
weights cost no storage beyond the callable.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Union

import numpy as np

from .errors import ConfigurationError

Weight = Union[float, Callable[[int], float]]

DEFAULT_ETA = 1e-3


@dataclass(frozen=True)
class NeighborView:
    agent: int
    in_neighbors: tuple[int, ...]
    out_neighbors: tuple[int, ...]

    @property
    def degree(self) -> int:
        return len(self.in_neighbors)


@dataclass(frozen=True)
class WeightViolation:
    edge: tuple[int, int]
    k: int
    kind: str  # "range" or "symmetry"
    value: float
    detail: str = ""


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Immutable weighted graph on nodes ``0 .. m-1``.

    Build instances with :meth:`from_edges` or the topology helpers
    (:func:`circle`, :func:`path`, ...) rather than the raw constructor.
    """

    m: int
    weights: Mapping[tuple[int, int], Weight]
    directed: bool = False
    name: str = ""
    _static_matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.m < 1:
            raise ConfigurationError(f"graph needs at least one node, got m={self.m}")
        for (i, j) in self.weights:
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise ConfigurationError(f"edge ({i}, {j}) references a node outside 0..{self.m - 1}")
            if i == j:
                raise ConfigurationError(f"self-loop ({i}, {i}) is not allowed")
        if not self.directed:
            for (i, j) in self.weights:
                if (j, i) not in self.weights:
                    raise ConfigurationError(f"undirected graph is missing edge ({j}, {i})")
        object.__setattr__(self, "weights", MappingProxyType(dict(self.weights)))
        if not any(callable(w) for w in self.weights.values()):
            mat = np.zeros((self.m, self.m))
            for (i, j), w in self.weights.items():
                mat[i, j] = float(w)
            mat.flags.writeable = False
            object.__setattr__(self, "_static_matrix", mat)

    @classmethod
    def from_edges(
        cls,
        m: int,
        edges: Iterable[tuple[int, int]],
        weight: Weight | Mapping[tuple[int, int], Weight] = 0.5,
        directed: bool = False,
        name: str = "",
    ) -> "WeightedGraph":
        """Build a graph from an edge list.

        For undirected graphs each listed pair is mirrored. ``weight`` may be a
        single value (float or callable of ``k``) applied to every edge, or a
        mapping keyed by the listed edge.
        """
        table: dict[tuple[int, int], Weight] = {}
        for e in edges:
            i, j = int(e[0]), int(e[1])
            if isinstance(weight, Mapping):
                w = weight[(i, j)] if (i, j) in weight else weight[(j, i)]
            else:
                w = weight
            table[(i, j)] = w
            if not directed:
                table.setdefault((j, i), w)
        return cls(m=m, weights=table, directed=directed, name=name)

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        return frozenset(self.weights)

    @property
    def time_varying(self) -> bool:
        return self._static_matrix is None

    def weight(self, i: int, j: int, k: int = 0) -> float:
        w = self.weights.get((i, j))
        if w is None:
            return 0.0
        return float(w(k)) if callable(w) else float(w)

    def matrix(self, k: int = 0) -> np.ndarray:
        """Coupling matrix ``L[k]`` with zero diagonal (read-only when constant)."""
        if self._static_matrix is not None:
            return self._static_matrix
        mat = np.zeros((self.m, self.m))
        for (i, j), w in self.weights.items():
            mat[i, j] = float(w(k)) if callable(w) else float(w)
        return mat

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.m, self.m), dtype=bool)
        for (i, j) in self.weights:
            adj[i, j] = True
        return adj

    def in_neighbors(self, i: int) -> tuple[int, ...]:
        return tuple(sorted(j for (a, j) in self.weights if a == i))

    def out_neighbors(self, i: int) -> tuple[int, ...]:
        return tuple(sorted(a for (a, j) in self.weights if j == i))

    def view(self, i: int) -> NeighborView:
        return NeighborView(i, self.in_neighbors(i), self.out_neighbors(i))

    def undirected_pairs(self) -> list[tuple[int, int]]:
        """Sorted unordered pairs ``(i, j)``, ``i < j``, present in either direction."""
        return sorted({(min(i, j), max(i, j)) for (i, j) in self.weights})


def max_degree(g: WeightedGraph) -> int:
    """Largest neighbor-set size (in-degree for directed graphs)."""
    if not g.weights:
        return 0
    counts = np.zeros(g.m, dtype=int)
    for (i, _j) in g.weights:
        counts[i] += 1
    return int(counts.max())


def _reachable(m: int, succ: dict[int, list[int]], start: int) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in succ.get(u, ()):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def is_connected(g: WeightedGraph) -> bool:
    """Connectivity of the undirected skeleton, or strong connectivity if directed."""
    if g.m == 1:
        return True
    fwd: dict[int, list[int]] = {}
    bwd: dict[int, list[int]] = {}
    for (i, j) in g.weights:
        # information flows j -> i
        fwd.setdefault(j, []).append(i)
        bwd.setdefault(i, []).append(j)
    if not g.directed:
        return len(_reachable(g.m, fwd, 0)) == g.m
    return len(_reachable(g.m, fwd, 0)) == g.m and len(_reachable(g.m, bwd, 0)) == g.m


def validate_weights(g: WeightedGraph, eta: float = DEFAULT_ETA, horizon: int = 0) -> list[WeightViolation]:
    """Check ``eta <= L_ij[k] < 1`` and, for undirected graphs, symmetry.

    Every iteration ``0 <= k <= horizon`` is inspected. For undirected graphs a
    pair with equal weights in both directions is range-checked once, so one
    bad value produces one report entry.
    """
    if not 0 < eta < 1:
        raise ConfigurationError(f"eta must lie in (0, 1), got {eta}")
    report: list[WeightViolation] = []
    ks = range(horizon + 1) if g.time_varying else range(1)
    for k in ks:
        if g.directed:
            for (i, j) in sorted(g.weights):
                w = g.weight(i, j, k)
                if not (eta <= w < 1):
                    report.append(WeightViolation((i, j), k, "range", w, f"need {eta} <= w < 1"))
            continue
        for (i, j) in g.undirected_pairs():
            w_ij, w_ji = g.weight(i, j, k), g.weight(j, i, k)
            if w_ij != w_ji:
                report.append(WeightViolation((i, j), k, "symmetry", w_ij, f"L_{i}{j}={w_ij} but L_{j}{i}={w_ji}"))
                checks = [((i, j), w_ij), ((j, i), w_ji)]
            else:
                checks = [((i, j), w_ij)]
            for edge, w in checks:
                if not (eta <= w < 1):
                    report.append(WeightViolation(edge, k, "range", w, f"need {eta} <= w < 1"))
    return report


# -- topology helpers -------------------------------------------------------

def circle(m: int, weight: Weight = 0.5) -> WeightedGraph:
    """Ring where each agent talks to its two immediate neighbors."""
    edges = {(min(i, (i + 1) % m), max(i, (i + 1) % m)) for i in range(m) if m > 1}
    return WeightedGraph.from_edges(m, sorted(edges), weight, name=f"circle({m})")


def path(m: int, weight: Weight = 0.5) -> WeightedGraph:
    return WeightedGraph.from_edges(m, [(i, i + 1) for i in range(m - 1)], weight, name=f"path({m})")


def complete(m: int, weight: Weight = 0.5) -> WeightedGraph:
    edges = [(i, j) for i in range(m) for j in range(i + 1, m)]
    return WeightedGraph.from_edges(m, edges, weight, name=f"complete({m})")


def directed_cycle(m: int, weight: Weight = 0.5) -> WeightedGraph:
    # agent i+1 receives from agent i
    edges = [((i + 1) % m, i) for i in range(m)]
    return WeightedGraph.from_edges(m, edges, weight, directed=True, name=f"directed_cycle({m})")


def erdos_renyi(m: int, p: float, rng: np.random.Generator, weight: Weight = 0.5) -> WeightedGraph:
    edges = [(i, j) for i in range(m) for j in range(i + 1, m) if rng.random() < p]
    return WeightedGraph.from_edges(m, edges, weight, name=f"erdos_renyi({m},{p})")


# Best-effort reading of the five-agent interaction figure: a ring with one
# chord between agents 0 and 2.
FIG4_EDGES = ((0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2))


def fig4_five_agent(weight: Weight = 0.3) -> WeightedGraph:
    return WeightedGraph.from_edges(5, FIG4_EDGES, weight, name="fig4-five-agent")


GRAPH_PRESETS = {
    "circle": circle,
    "path": path,
    "complete": complete,
    "directed-cycle": directed_cycle,
    "fig4-five-agent": lambda m=5, weight=0.3: fig4_five_agent(weight),
}
