"""Coarse-graining by collapsing a strongly connected sub-graph into one node.

The nodes of a fine graph are split into ``latin`` nodes (kept), a ``star``
node (kept, absorbs the collapsed block) and ``greek`` nodes (removed).
Edges from a latin node into the collapsed block are summed onto the star.

Each kept node ``g`` gets a fine-graph signal ``psi_g``: the harmonic
extension of the indicator of ``g`` from the kept nodes into the greek
block, i.e. the minimizer of the Dirichlet energy with those boundary
values.  On the greek block it solves

    (diag(d_greek) - W[greek, greek]) x = W[greek, g]

with ``d`` the fine degrees.  The ``psi_g`` form a partition of unity and
define the coarse node weights ``mu_g = sum_h psi_g(h) mu_fine(h)`` and the
identification maps ``J f = sum_g f(g) psi_g`` and
``(Jt u)(g) = <u, psi_g> / mu_g``; ``Jt`` is the weighted adjoint of ``J``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse.csgraph

from .errors import GraphError
from .filters import GenericFilter, apply_generic
from .graph_core import (
    DenseOperator,
    OperatorKind,
    WeightedGraph,
    characteristic_operator,
)
from .operator_algebra import operator_norm, resolvent

PSI_TOL = 1e-10


@dataclass(frozen=True)
class Partition:
    """Split of the fine node set into kept, star and collapsed nodes (0-based)."""

    latin: tuple[int, ...]
    star: int
    greek: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "latin", tuple(int(i) for i in self.latin))
        object.__setattr__(self, "greek", tuple(int(i) for i in self.greek))
        object.__setattr__(self, "star", int(self.star))
        allnodes = list(self.latin) + [self.star] + list(self.greek)
        if len(set(allnodes)) != len(allnodes):
            raise GraphError("partition blocks overlap")

    @property
    def kept(self) -> list[int]:
        """Fine indices of the coarse nodes, in coarse-node order."""
        return sorted(self.latin + (self.star,))

    @property
    def star_position(self) -> int:
        """Index of the star among the coarse nodes."""
        return self.kept.index(self.star)

    def validate(self, n: int):
        allnodes = sorted(self.latin + (self.star,) + self.greek)
        if allnodes != list(range(n)):
            raise GraphError(f"partition does not cover the {n} fine nodes exactly once")

    @classmethod
    def from_dict(cls, data: dict) -> "Partition":
        return cls(data.get("latin", []), data["star"], data.get("greek", []))

    def to_dict(self) -> dict:
        return {"latin": list(self.latin), "star": self.star, "greek": list(self.greek)}


def load_partition(path: str | Path) -> Partition:
    with open(path) as fh:
        return Partition.from_dict(json.load(fh))


def _check_fine(fine: WeightedGraph, p: Partition):
    if fine.directed:
        raise GraphError("collapse is only defined for undirected fine graphs")
    p.validate(fine.n)
    block = [p.star] + list(p.greek)
    sub = fine.W[np.ix_(block, block)]
    ncomp, _ = scipy.sparse.csgraph.connected_components(sub, directed=False)
    if ncomp != 1:
        raise GraphError("the collapsed block (greek nodes and star) is not connected")


def collapse_weights(fine: WeightedGraph, p: Partition, mu=None) -> WeightedGraph:
    """Edge weights of the collapsed graph on the kept nodes.

    Latin-latin weights are copied, and the weight between a latin node
    ``a`` and the star is ``W[a, star] + sum_greek W[a, greek]``.  Node
    weights default to the fine weights of the kept nodes and are normally
    replaced by :func:`mu_from_psi`.

    Raises:
        GraphError: If the collapsed block is disconnected or the fine graph
            is directed.
    """
    _check_fine(fine, p)
    kept = p.kept
    W = fine.W[np.ix_(kept, kept)].copy()
    s = p.star_position
    greek = list(p.greek)
    for ci, a in enumerate(kept):
        if a == p.star:
            continue
        w = fine.W[a, p.star] + (fine.W[a, greek].sum() if greek else 0.0)
        W[ci, s] = W[s, ci] = w
    mu = fine.mu[kept] if mu is None else mu
    return WeightedGraph(W, mu, directed=False)


def solve_psi(fine: WeightedGraph, p: Partition) -> np.ndarray:
    """Harmonic-extension signals, shape ``(n_coarse, n_fine)``.

    Row ``k`` is ``psi_g`` for the ``k``-th kept node ``g``.

    Raises:
        GraphError: If the greek system is singular or an entry leaves
            ``[0, 1]`` by more than ``1e-10``.
    """
    _check_fine(fine, p)
    kept = p.kept
    greek = list(p.greek)
    psi = np.zeros((len(kept), fine.n))
    for k, g in enumerate(kept):
        psi[k, g] = 1.0
    if greek:
        d = fine.degree[greek]
        A = np.diag(d) - fine.W[np.ix_(greek, greek)]
        rhs = fine.W[np.ix_(greek, kept)]
        if np.linalg.cond(A) > 1e14:
            raise GraphError("greek system is singular; is the collapsed block connected?")
        psi[:, greek] = np.linalg.solve(A, rhs).T
    if psi.min() < -PSI_TOL or psi.max() > 1 + PSI_TOL:
        raise GraphError(f"psi entries left [0, 1]: range [{psi.min()}, {psi.max()}]")
    return psi


def mu_from_psi(fine: WeightedGraph, psi: np.ndarray) -> np.ndarray:
    """Coarse node weights ``mu_g = sum_h psi_g(h) mu_fine(h)``."""
    return np.asarray(psi) @ fine.mu


def identification_ops(fine: WeightedGraph, coarse: WeightedGraph, psi: np.ndarray,
                       mu_delta: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Dense maps ``J: coarse -> fine`` and ``Jt: fine -> coarse``."""
    psi = np.asarray(psi, dtype=float)
    mu_c = coarse.mu if mu_delta is None else np.asarray(mu_delta, dtype=float)
    if psi.shape != (coarse.n, fine.n):
        raise GraphError(f"psi has shape {psi.shape}, expected {(coarse.n, fine.n)}")
    J = psi.T.astype(complex)
    Jt = (psi * fine.mu[None, :] / mu_c[:, None]).astype(complex)
    return J, Jt


@dataclass(frozen=True, eq=False)
class CollapsePair:
    """Fine graph, collapsed graph and the maps between their signal spaces."""

    fine: WeightedGraph
    coarse: WeightedGraph
    partition: Partition
    psi: np.ndarray
    mu_delta: np.ndarray
    J: np.ndarray
    Jt: np.ndarray

    def operators(self, kind=OperatorKind.LAPLACIAN) -> tuple[DenseOperator, DenseOperator]:
        """Coarse and fine characteristic operators of the same kind."""
        return characteristic_operator(self.coarse, kind), characteristic_operator(self.fine, kind)

    def partition_of_unity_residual(self) -> float:
        return float(np.max(np.abs(self.psi.sum(axis=0) - 1.0)))

    def adjoint_residual(self) -> float:
        """``||Jt - J*||`` in the weighted norms."""
        adj = adjoint_map(self.J, self.coarse.mu, self.fine.mu)
        return operator_norm(self.Jt - adj, self.fine.mu, self.coarse.mu)


def collapse(fine: WeightedGraph, p: Partition, mu_override: dict[int, float] | None = None) -> CollapsePair:
    """Build the full collapse pair.

    Args:
        fine: Undirected fine graph.
        p: Partition of its nodes.
        mu_override: Optional ``{fine index: weight}`` replacing the
            computed coarse weight of selected kept nodes.
    """
    psi = solve_psi(fine, p)
    mu = mu_from_psi(fine, psi)
    if mu_override:
        kept = p.kept
        mu = mu.copy()
        for node, val in mu_override.items():
            mu[kept.index(int(node))] = float(val)
    coarse = collapse_weights(fine, p, mu)
    J, Jt = identification_ops(fine, coarse, psi, mu)
    return CollapsePair(fine, coarse, p, psi, mu, J, Jt)


def adjoint_map(J, mu_dom: np.ndarray, mu_cod: np.ndarray) -> np.ndarray:
    """Weighted adjoint ``diag(mu_dom)^{-1} J^H diag(mu_cod)`` of ``J: dom -> cod``."""
    J = np.asarray(J, dtype=complex)
    return J.conj().T * np.asarray(mu_cod)[None, :] / np.asarray(mu_dom)[:, None]


def quasi_unitarity_epsilon(J, Jt, T: DenseOperator, T2: DenseOperator,
                            omega: complex) -> dict:
    """Quasi-unitarity defect of ``(J, Jt)`` relative to resolvents at ``omega``.

    ``J`` maps the space of ``T`` into that of ``T2``.  The returned ``eps``
    is the largest of ``||J - Jt*||``, ``||(Id - Jt J) R_omega||`` and
    ``||(Id - J Jt) R2_omega||``.
    """
    J = np.asarray(J, dtype=complex)
    Jt = np.asarray(Jt, dtype=complex)
    mu, mu2 = T.weights, T2.weights
    R, R2 = resolvent(T, omega).matrix, resolvent(T2, omega).matrix
    parts = {
        "adjoint": operator_norm(J - adjoint_map(Jt, mu2, mu), mu, mu2),
        "coarse": operator_norm((np.eye(T.n) - Jt @ J) @ R, mu, mu),
        "fine": operator_norm((np.eye(T2.n) - J @ Jt) @ R2, mu2, mu2),
    }
    j_norm = operator_norm(J, mu, mu2)
    return {"eps": max(parts.values()), "j_norm": j_norm, "j_norm_ok": j_norm <= 2.0,
            "parts": parts}


def energy_conditions_report(pair: CollapsePair) -> dict:
    """Defects of the four energy-norm quasi-unitarity conditions.

    The energy norm is ``||f||_1 = ||(Id + Lap)^{1/2} f||``.  The second
    pair of identification maps is ``J1 = J`` and the restriction
    ``(Jt1 u)(g) = u(g)`` to the kept nodes.  Each entry is the smallest
    ``eps'`` making the corresponding condition hold:

    * ``11``: ``||J|| <= 1 + eps'`` and ``|<J f, u> - <f, Jt u>| <= eps' ||f|| ||u||``
    * ``22``: ``||f - Jt J f|| <= eps' ||f||_1`` and ``||u - J Jt u|| <= eps' ||u||_1``
    * ``33``: ``||J f - J1 f|| <= eps' ||f||_1`` and ``||Jt u - Jt1 u|| <= eps' ||u||_1``
    * ``44``: ``|E(J1 f, u) - E(f, Jt1 u)| <= eps' ||f||_1 ||u||_1``
    """
    T, T2 = pair.operators(OperatorKind.LAPLACIAN)
    mu, mu2 = pair.coarse.mu, pair.fine.mu
    inv_half = GenericFilter(lambda lam: 1.0 / np.sqrt(1.0 + lam.real))
    S = apply_generic(inv_half, T).matrix
    S2 = apply_generic(inv_half, T2).matrix
    J, Jt = pair.J, pair.Jt
    Jt1 = np.zeros((pair.coarse.n, pair.fine.n), dtype=complex)
    for k, g in enumerate(pair.partition.kept):
        Jt1[k, g] = 1.0
    c11 = max(operator_norm(J, mu, mu2) - 1.0, 0.0,
              operator_norm(J - adjoint_map(Jt, mu2, mu), mu, mu2))
    c22 = max(operator_norm((np.eye(T.n) - Jt @ J) @ S, mu, mu),
              operator_norm((np.eye(T2.n) - J @ Jt) @ S2, mu2, mu2))
    c33 = operator_norm((Jt - Jt1) @ S2, mu2, mu)
    form = adjoint_map(J, mu, mu2) @ T2.matrix - T.matrix @ Jt1
    c44 = operator_norm(S @ form @ S2, mu2, mu)
    return {"11": float(c11), "22": float(c22), "33": float(c33), "44": float(c44)}


def scale_greek_sector(base: WeightedGraph, p: Partition, delta: float) -> WeightedGraph:
    """Fine graph with all edges inside the collapsed block multiplied by ``1/delta``."""
    block = [p.star] + list(p.greek)
    W = np.array(base.W, dtype=float)
    idx = np.ix_(block, block)
    W[idx] = W[idx] / delta
    return base.with_weights(W=W)


def collapse_sweep(base: WeightedGraph, p: Partition, delta_grid: Sequence[float],
                   omega: complex = -1.0, kind=OperatorKind.LAPLACIAN,
                   powers: Sequence[int] = ()) -> list[dict]:
    """Quasi-unitarity and closeness of the collapse pair along a ``delta`` grid.

    Each row has ``delta``, ``eps_quasi``, ``eps_close``, ``j_norm`` and the
    partition-of-unity residual; with ``powers`` also the monomial
    commutators ``||J R^k - R2^k J||``.
    """
    rows = []
    for delta in delta_grid:
        pair = collapse(scale_greek_sector(base, p, delta), p)
        T, T2 = pair.operators(kind)
        q = quasi_unitarity_epsilon(pair.J, pair.Jt, T, T2, omega)
        R, R2 = resolvent(T, omega).matrix, resolvent(T2, omega).matrix
        mu, mu2 = T.weights, T2.weights
        row = {
            "delta": float(delta),
            "eps_quasi": q["eps"],
            "eps_close": operator_norm(R2 @ pair.J - pair.J @ R, mu, mu2),
            "j_norm": q["j_norm"],
            "pou_residual": pair.partition_of_unity_residual(),
        }
        for k in powers:
            Rk, R2k = np.linalg.matrix_power(R, k), np.linalg.matrix_power(R2, k)
            row[f"monomial_{k}"] = operator_norm(pair.J @ Rk - R2k @ pair.J, mu, mu2)
        rows.append(row)
    return rows


def negative_result_probe(kind: OperatorKind | str, delta_grid: Sequence[float],
                          omega: complex | None = None) -> list[dict]:
    """Transfer defects of the two-node collapse under a given operator kind.

    The fine graph has one edge of weight ``1/delta`` and unit node weights;
    it is collapsed onto a single node using the harmonic-extension maps.
    The collapsed graph has no edges, so its characteristic operator is the
    ``1 x 1`` zero (this is also taken as its normalized Laplacian, whose
    usual formula is undefined on an isolated node).

    Returns rows with ``delta``, ``eps_quasi``, ``eps_close`` and
    ``eps = max(eps_quasi, eps_close)``.
    """
    kind = OperatorKind.parse(kind)
    if omega is None:
        omega = -1.0 if kind is not OperatorKind.ADJACENCY else 1j
    p = Partition([], 0, [1])
    rows = []
    for delta in delta_grid:
        if delta <= 0:
            raise ValueError("delta must be positive")
        fine = WeightedGraph([[0.0, 1.0 / delta], [1.0 / delta, 0.0]], [1.0, 1.0])
        pair = collapse(fine, p)
        T = DenseOperator(np.zeros((1, 1)), pair.coarse.mu)
        T2 = characteristic_operator(fine, kind)
        q = quasi_unitarity_epsilon(pair.J, pair.Jt, T, T2, omega)
        R, R2 = resolvent(T, omega).matrix, resolvent(T2, omega).matrix
        close = operator_norm(R2 @ pair.J - pair.J @ R, T.weights, T2.weights)
        rows.append({"delta": float(delta), "eps_quasi": q["eps"], "eps_close": close,
                     "eps": max(q["eps"], close)})
    return rows
