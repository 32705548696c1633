"""Weighted graphs, node-signal spaces and characteristic operators.

A graph carries nonnegative real edge weights ``W`` and strictly positive
node weights ``mu``.  Signals live in the weighted space with inner product
``<f, g> = sum_i conj(f_i) g_i mu_i``.  Operators are stored densely together
with the node weights of the space they act on, so that the weighted adjoint
``T* = M^{-1} T^H M`` is always available.

The Dirichlet energy of a signal is defined by its operator form
``E(u) = <u, Laplacian u>``.  Written as a double sum over ordered node
pairs this equals ``1/2 * sum_{g,h} W_gh |u(g) - u(h)|^2``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GraphError


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class OperatorKind(enum.Enum):
    """The characteristic operators a graph can be described by."""

    ADJACENCY = "adjacency"
    LAPLACIAN = "laplacian"
    NORMALIZED_LAPLACIAN = "normalized-laplacian"

    @classmethod
    def parse(cls, value: "str | OperatorKind") -> "OperatorKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for kind in cls:
            if kind.value == key:
                return kind
        raise GraphError(f"unknown operator kind {value!r}")


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Node- and edge-weighted graph with dense storage.

    Args:
        W: ``n x n`` nonnegative edge weights, ``W[i, j]`` is the weight of
            the edge ``i -> j``.  The diagonal must vanish.
        mu: ``n`` strictly positive node weights.
        directed: If false, ``W`` must be exactly symmetric.
    """

    W: np.ndarray
    mu: np.ndarray
    directed: bool = False

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise GraphError(f"edge weights must be square, got shape {W.shape}")
        if W.shape[0] != mu.shape[0]:
            raise GraphError(
                f"{W.shape[0]} nodes in W but {mu.shape[0]} node weights")
        if W.shape[0] == 0:
            raise GraphError("graph must have at least one node")
        if not np.all(np.isfinite(W)) or not np.all(np.isfinite(mu)):
            raise GraphError("weights must be finite")
        if np.any(mu <= 0):
            bad = int(np.flatnonzero(mu <= 0)[0])
            raise GraphError(f"node weight of node {bad} is not positive")
        if np.any(W < 0):
            i, j = np.argwhere(W < 0)[0]
            raise GraphError(f"negative edge weight on ({i}, {j})")
        if np.any(np.diag(W) != 0):
            i = int(np.flatnonzero(np.diag(W))[0])
            raise GraphError(f"self-loop on node {i}")
        if not self.directed and not np.array_equal(W, W.T):
            raise GraphError("undirected graph needs a symmetric weight matrix")
        object.__setattr__(self, "W", _frozen(W))
        object.__setattr__(self, "mu", _frozen(mu))
        object.__setattr__(self, "directed", bool(self.directed))

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def degree(self) -> np.ndarray:
        """Row sums of ``W`` (out-degrees for directed graphs)."""
        return self.W.sum(axis=1)

    def with_weights(self, W=None, mu=None) -> "WeightedGraph":
        """Copy of the graph with edge and/or node weights replaced."""
        return WeightedGraph(self.W if W is None else W,
                             self.mu if mu is None else mu, self.directed)


@dataclass(frozen=True, eq=False)
class Signal:
    """A complex node signal bound to the graph whose space it lives in."""

    values: np.ndarray
    graph: WeightedGraph

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).reshape(-1)
        if v.shape[0] != self.graph.n:
            raise GraphError(
                f"signal has {v.shape[0]} entries, graph has {self.graph.n} nodes")
        object.__setattr__(self, "values", _frozen(v))

    def norm(self) -> float:
        return float(np.sqrt(weighted_inner(self.values, self.values, self.graph.mu).real))


@dataclass(frozen=True, eq=False)
class DenseOperator:
    """Square complex matrix acting on a weighted signal space.

    Attributes:
        matrix: ``n x n`` complex matrix.
        weights: node weights of the underlying space.
    """

    matrix: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=complex)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise GraphError(f"operator must be square, got shape {A.shape}")
        w = np.ones(A.shape[0]) if self.weights is None else np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != A.shape[0]:
            raise GraphError("operator dimension does not match its weights")
        if np.any(w <= 0):
            raise GraphError("operator weights must be positive")
        object.__setattr__(self, "matrix", _frozen(A))
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def adjoint(self) -> "DenseOperator":
        """Weighted adjoint ``M^{-1} T^H M``."""
        w = self.weights
        return DenseOperator(self.matrix.conj().T * w[None, :] / w[:, None], w)

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(f, dtype=complex)

    def like(self, matrix: np.ndarray) -> "DenseOperator":
        """New operator on the same space."""
        return DenseOperator(matrix, self.weights)

    @classmethod
    def identity(cls, weights) -> "DenseOperator":
        w = np.asarray(weights, dtype=float).reshape(-1)
        return cls(np.eye(w.shape[0]), w)


def weighted_inner(f: np.ndarray, g: np.ndarray, mu: np.ndarray) -> complex:
    """Array-level weighted inner product ``sum conj(f) g mu``."""
    return complex(np.sum(np.conj(f) * g * mu))


def inner_product(f: Signal, g: Signal) -> complex:
    """Weighted inner product of two signals on the same graph."""
    if f.graph is not g.graph:
        if f.graph.n != g.graph.n or not np.array_equal(f.graph.mu, g.graph.mu):
            raise GraphError("signals live on different graphs")
    return weighted_inner(f.values, g.values, f.graph.mu)


def characteristic_operator(graph: WeightedGraph, kind: OperatorKind | str) -> DenseOperator:
    """Build the adjacency, Laplacian or normalized Laplacian of a graph.

    Args:
        graph: The graph.
        kind: Which operator to build.

    Returns:
        ``M^{-1} W``, ``M^{-1}(D - W)`` or ``M^{-1} D^{-1/2}(D - W) D^{-1/2}``
        as a :class:`DenseOperator` on the graph's node weights.

    Raises:
        GraphError: For the normalized Laplacian when a node has zero degree.
    """
    kind = OperatorKind.parse(kind)
    W, mu, d = graph.W, graph.mu, graph.degree
    if kind is OperatorKind.ADJACENCY:
        A = W / mu[:, None]
    elif kind is OperatorKind.LAPLACIAN:
        A = (np.diag(d) - W) / mu[:, None]
    else:
        if np.any(d <= 0):
            node = int(np.flatnonzero(d <= 0)[0])
            raise GraphError(
                f"node {node} has zero degree; normalized Laplacian undefined")
        s = 1.0 / np.sqrt(d)
        A = (np.diag(d) - W) * s[:, None] * s[None, :] / mu[:, None]
    return DenseOperator(A, mu)


def energy_form(graph: WeightedGraph, u: Signal | np.ndarray) -> float:
    """Dirichlet energy ``<u, Laplacian u>`` of a signal on an undirected graph."""
    if graph.directed:
        raise GraphError("the energy form is only defined for undirected graphs")
    values = u.values if isinstance(u, Signal) else np.asarray(u, dtype=complex)
    if values.shape[0] != graph.n:
        raise GraphError("signal length does not match the graph")
    lap = characteristic_operator(graph, OperatorKind.LAPLACIAN)
    return float(weighted_inner(values, lap.apply(values), graph.mu).real)


def graph_from_dict(data: dict) -> WeightedGraph:
    """Parse the JSON graph format ``{"n", "mu", "edges", "directed"}``."""
    try:
        n = int(data["n"])
        mu = np.asarray(data.get("mu", np.ones(n)), dtype=float)
        directed = bool(data.get("directed", False))
        W = np.zeros((n, n))
        for edge in data.get("edges", []):
            i, j, w = int(edge[0]), int(edge[1]), float(edge[2])
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={n}")
            W[i, j] = w
            if not directed:
                W[j, i] = w
    except (KeyError, TypeError, IndexError) as exc:
        raise GraphError(f"malformed graph description: {exc!r}") from exc
    return WeightedGraph(W, mu, directed)


def graph_to_dict(graph: WeightedGraph) -> dict:
    W = graph.W
    if graph.directed:
        idx = np.argwhere(W != 0)
    else:
        idx = np.argwhere(np.triu(W) != 0)
    return {
        "n": graph.n,
        "mu": graph.mu.tolist(),
        "edges": [[int(i), int(j), float(W[i, j])] for i, j in idx],
        "directed": graph.directed,
    }


def load_graph(path: str | Path) -> WeightedGraph:
    with open(path) as fh:
        return graph_from_dict(json.load(fh))
