"""Concrete transfer scenarios: cycle graphs and molecular graphs.

Cycle graphs with ``N`` nodes, unit node weights and edge weights
``(N / 2 pi)^2`` discretize the unit circle; their Laplacians have the
eigenpairs ``lambda_k = (N / pi)^2 sin^2(pi k / N)`` and
``phi_k(x) = exp(2 pi i k x / N) / sqrt(N)``.

Molecular graphs connect atoms with Coulomb-type weights
``Z_i Z_j / |x_i - x_j|`` and use the nuclear charges as node weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .coarsen import Partition
from .errors import GraphError
from .graph_core import WeightedGraph
from .operator_algebra import SpectrumResult


@dataclass(frozen=True)
class CycleSpec:
    """Cycle graph size; must be odd and at least 3."""

    N: int

    def __post_init__(self):
        N = int(self.N)
        if N < 3:
            raise GraphError("cycle needs at least 3 nodes")
        if N % 2 == 0:
            raise GraphError(f"cycle size must be odd, got {N}")
        object.__setattr__(self, "N", N)


def _spec(N) -> CycleSpec:
    return N if isinstance(N, CycleSpec) else CycleSpec(N)


def cycle_graph(spec: CycleSpec | int) -> WeightedGraph:
    """Closed path on ``N`` nodes with edge weights ``(N / 2 pi)^2``."""
    return _ring(_spec(spec).N)


def cycle_pair(N: int) -> tuple[WeightedGraph, WeightedGraph]:
    """The odd cycle on ``N`` nodes and its even partner on ``N + 1`` nodes."""
    N = _spec(N).N
    return _ring(N), _ring(N + 1)


def _ring(N: int) -> WeightedGraph:
    w = (N / (2.0 * np.pi)) ** 2
    W = np.zeros((N, N))
    idx = np.arange(N)
    W[idx, (idx + 1) % N] = w
    W[(idx + 1) % N, idx] = w
    return WeightedGraph(W, np.ones(N))


def _cycle_basis(N: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(N)
    lam = (N / np.pi) ** 2 * np.sin(np.pi * k / N) ** 2
    phi = np.exp(2j * np.pi * np.outer(np.arange(N), k) / N) / np.sqrt(N)
    return lam, phi


def cycle_eigenpairs(N: int) -> SpectrumResult:
    """Closed-form eigenvalues and orthonormal eigenvectors (columns) of the cycle Laplacian."""
    N = _spec(N).N
    lam, phi = _cycle_basis(N)
    return SpectrumResult(lam.astype(complex), phi, np.ones(N))


def _mode_map(N: int) -> np.ndarray:
    """Index in the ``N+1`` basis that each mode of the ``N`` basis is sent to."""
    k = np.arange(N)
    return np.where(k < N / 2, k, k + 1)


def circle_identification(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Spectral identification ``J`` of the ``N`` cycle into the ``N+1`` cycle, and ``J*``.

    Low frequencies keep their index and high frequencies (negative
    frequencies ``k - N``) are shifted by one, so every mode goes to the mode
    of the same frequency.  The Nyquist mode ``(N+1)/2`` of the larger cycle
    is not hit.  ``J`` is an isometry.
    """
    N = _spec(N).N
    _, phi = _cycle_basis(N)
    _, phi2 = _cycle_basis(N + 1)
    J = phi2[:, _mode_map(N)] @ phi.conj().T
    return J, J.conj().T


def missing_mode(N: int) -> np.ndarray:
    """The eigenvector of the ``N+1`` cycle orthogonal to the range of ``J``."""
    N = _spec(N).N
    _, phi2 = _cycle_basis(N + 1)
    return phi2[:, (N + 1) // 2]


def missing_mode_closed_form(N: int) -> float:
    """``1 / (1 + lambda_{(N+1)/2})`` on the ``N+1`` cycle, i.e. ``1 / (1 + (N+1)^2 / pi^2)``."""
    N = _spec(N).N
    return 1.0 / (1.0 + (N + 1) ** 2 / np.pi**2)


@dataclass(frozen=True, eq=False)
class Molecule:
    """Nuclear charges ``Z``, positions ``X`` (``n x 3``) and optional names."""

    Z: np.ndarray
    X: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.shape != (Z.size, 3):
            raise GraphError(f"positions must have shape ({Z.size}, 3), got {X.shape}")
        if np.any(Z <= 0):
            raise GraphError("nuclear charges must be positive")
        names = tuple(self.names) if self.names else tuple(f"atom{i}" for i in range(Z.size))
        if len(names) != Z.size:
            raise GraphError("one name per atom required")
        for a in (Z, X):
            a.setflags(write=False)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.Z.size

    def distances(self) -> np.ndarray:
        diff = self.X[:, None, :] - self.X[None, :, :]
        return np.sqrt(np.sum(diff**2, axis=-1))

    @classmethod
    def from_dict(cls, data: dict) -> "Molecule":
        return cls(data["Z"], data["X"], tuple(data.get("names", ())))

    def to_dict(self) -> dict:
        return {"Z": self.Z.tolist(), "X": self.X.tolist(), "names": list(self.names)}


def load_molecule(path: str | Path) -> Molecule:
    with open(path) as fh:
        return Molecule.from_dict(json.load(fh))


def methane() -> Molecule:
    """Equilibrium methane shipped with the package (carbon first)."""
    text = resources.files("spectral_transfer").joinpath("data/methane.json").read_text()
    return Molecule.from_dict(json.loads(text))


def molecular_graph(m: Molecule) -> WeightedGraph:
    """Coulomb graph ``W_ij = Z_i Z_j / |x_i - x_j|`` with node weights ``Z``.

    Raises:
        GraphError: If two atoms coincide.
    """
    dist = m.distances()
    off = ~np.eye(m.n, dtype=bool)
    if np.any(dist[off] <= 0):
        raise GraphError("two atoms share a position")
    W = np.zeros((m.n, m.n))
    W[off] = (np.outer(m.Z, m.Z)[off]) / dist[off]
    W = 0.5 * (W + W.T)
    return WeightedGraph(W, m.Z)


def deflect(m: Molecule, atom: int, target: int, t: float) -> Molecule:
    """Move ``atom`` a fraction ``t`` of the way towards ``target``."""
    if not 0 <= t < 1:
        raise ValueError(f"t must lie in [0, 1), got {t}")
    X = np.array(m.X)
    X[atom] = (1.0 - t) * X[atom] + t * X[target]
    return Molecule(m.Z, X, m.names)


def effective_molecule(m: Molecule, merge: Sequence[int],
                       star_position: int) -> tuple[Molecule, Partition]:
    """Replace the atoms in ``merge`` by one atom at ``star_position``.

    The merged atom carries the summed charge.  Atoms keep their relative
    order, matching the node order of the collapsed graph.  The returned
    partition maps the merge onto the fine molecular graph.
    """
    merge = sorted(set(int(i) for i in merge))
    if not merge:
        raise ValueError("merge set must not be empty")
    if star_position not in merge:
        raise ValueError("star_position must be one of the merged atoms")
    latin = [i for i in range(m.n) if i not in merge]
    greek = [i for i in merge if i != star_position]
    part = Partition(latin, star_position, greek)
    Z, X, names = [], [], []
    for i in part.kept:
        if i == star_position:
            Z.append(float(m.Z[merge].sum()))
            names.append("+".join(m.names[j] for j in merge))
        else:
            Z.append(float(m.Z[i]))
            names.append(m.names[i])
        X.append(m.X[i])
    return Molecule(Z, X, tuple(names)), part
