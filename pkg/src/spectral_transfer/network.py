"""Graph convolutional networks built from functional-calculus filter banks.

A layer maps ``K_in`` input channels to ``K_out`` output channels by

    f_out[i] = rho( sum_j g_ij(T) P f_in[j] )

where ``T`` is a characteristic operator of the layer's graph, ``P`` a
linear connecting map between node-signal spaces and ``rho`` a pointwise
nonlinearity.  Graph-level features are read out channel-wise with weighted
``p``-norms.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FilterContextError, GraphError, NormalityError
from .filters import (
    ContFilter,
    ContourSpec,
    EntireFilter,
    Filter,
    GenericFilter,
    HolFilter,
    _arc_mean,
    _profile_sampler,
    apply_filter,
    filter_from_dict,
    filter_norm_bound,
)
from .graph_core import (
    DenseOperator,
    OperatorKind,
    WeightedGraph,
    characteristic_operator,
    graph_from_dict,
    load_graph,
)
from .operator_algebra import (
    ProfileMode,
    is_normal,
    operator_norm,
    resolvent_profile,
    spectrum,
)


class NonlinearityKind(enum.Enum):
    IDENTITY = "identity"
    MODULUS = "modulus"
    RELU = "relu"
    SHIFTED_SIGMOID = "shifted-sigmoid"


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class Nonlinearity:
    """Pointwise map ``C -> C`` with ``rho(0) = 0``.

    ReLU and the shifted sigmoid act on real and imaginary parts
    separately.  The sigmoid is shifted by ``sigmoid(0) = 1/2`` so that it
    preserves zero; its Lipschitz constant is ``1/4``.
    """

    kind: NonlinearityKind = NonlinearityKind.IDENTITY

    def __post_init__(self):
        kind = self.kind
        if not isinstance(kind, NonlinearityKind):
            kind = NonlinearityKind(str(kind).lower().replace("_", "-"))
        object.__setattr__(self, "kind", kind)

    @property
    def L(self) -> float:
        return 0.25 if self.kind is NonlinearityKind.SHIFTED_SIGMOID else 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        if self.kind is NonlinearityKind.IDENTITY:
            return x.copy()
        if self.kind is NonlinearityKind.MODULUS:
            return np.abs(x).astype(complex)
        if self.kind is NonlinearityKind.RELU:
            return np.maximum(x.real, 0.0) + 1j * np.maximum(x.imag, 0.0)
        return (_sigmoid(x.real) - 0.5) + 1j * (_sigmoid(x.imag) - 0.5)


@dataclass(frozen=True, eq=False)
class ConnectingOp:
    """Linear map between node-signal spaces, or the identity when ``matrix`` is None.

    Args:
        matrix: ``n_out x n_in`` complex matrix.
        domain_weights: node weights of the input space.
        codomain_weights: node weights of the output space.
    """

    matrix: np.ndarray | None = None
    domain_weights: np.ndarray | None = None
    codomain_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.matrix is not None:
            m = np.array(self.matrix, dtype=complex)
            if m.ndim != 2:
                raise GraphError("connecting matrix must be two-dimensional")
            m.setflags(write=False)
            object.__setattr__(self, "matrix", m)

    @property
    def is_identity(self) -> bool:
        return self.matrix is None

    @cached_property
    def R(self) -> float:
        if self.matrix is None:
            return 1.0
        return operator_norm(self.matrix, self.domain_weights, self.codomain_weights)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.matrix is None:
            return x
        return x @ self.matrix.T


@dataclass(frozen=True, eq=False)
class FeatureBundle:
    """``K`` signals on one graph, stored as a ``K x n`` complex array."""

    values: np.ndarray
    graph: WeightedGraph

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=complex))
        if v.shape[1] != self.graph.n:
            raise GraphError(f"bundle has {v.shape[1]} nodes, graph has {self.graph.n}")
        if v.shape[0] < 1:
            raise GraphError("bundle needs at least one channel")
        object.__setattr__(self, "values", v)

    @property
    def K(self) -> int:
        return self.values.shape[0]

    def norm(self) -> float:
        return bundle_norm(self.values, self.graph.mu)


def bundle_norm(values: np.ndarray, mu: np.ndarray) -> float:
    """Norm on the direct sum of weighted signal spaces."""
    return float(np.sqrt(np.sum(np.abs(values) ** 2 * mu[None, :])))


@dataclass(frozen=True, eq=False)
class Layer:
    """One convolutional layer.

    Args:
        filters: ``K_out x K_in`` nested sequence of filters.
        graph: Graph the layer's characteristic operator lives on.
        kind: Which characteristic operator to use.
        rho: Pointwise nonlinearity applied at the end.
        P: Connecting map into the layer's node space.
        contour: Optional circle; when given and the operator is not
            normal, holomorphic banks are bounded by contour quadrature
            instead of the Laurent-coefficient series.
        operator: Optional explicit operator overriding ``(graph, kind)``.
    """

    filters: Sequence[Sequence[Filter]]
    graph: WeightedGraph
    kind: OperatorKind = OperatorKind.LAPLACIAN
    rho: Nonlinearity = field(default_factory=Nonlinearity)
    P: ConnectingOp = field(default_factory=ConnectingOp)
    contour: ContourSpec | None = None
    operator: DenseOperator | None = None

    def __post_init__(self):
        grid = tuple(tuple(row) for row in self.filters)
        if not grid or not grid[0] or any(len(r) != len(grid[0]) for r in grid):
            raise GraphError("filter grid must be a nonempty rectangle")
        object.__setattr__(self, "filters", grid)
        object.__setattr__(self, "kind", OperatorKind.parse(self.kind))
        if self.operator is not None and self.operator.n != self.graph.n:
            raise GraphError("explicit operator does not match the layer graph")
        if self.P.matrix is not None and self.P.matrix.shape[0] != self.graph.n:
            raise GraphError("connecting map does not land in the layer graph")
        has_generic = any(isinstance(g, (GenericFilter, ContFilter)) for g in self.flat_filters)
        if has_generic and not is_normal(self.T):
            raise NormalityError(
                "spectral and bivariate filters need a normal operator")

    @property
    def K_out(self) -> int:
        return len(self.filters)

    @property
    def K_in(self) -> int:
        return len(self.filters[0])

    @property
    def flat_filters(self) -> list:
        return [g for row in self.filters for g in row]

    @cached_property
    def T(self) -> DenseOperator:
        if self.operator is not None:
            return self.operator
        return characteristic_operator(self.graph, self.kind)

    @cached_property
    def filter_matrices(self) -> np.ndarray:
        """``g_ij(T)`` for all channel pairs, shape ``(K_out, K_in, n, n)``."""
        T = self.T
        out = np.empty((self.K_out, self.K_in, T.n, T.n), dtype=complex)
        for i, row in enumerate(self.filters):
            for j, g in enumerate(row):
                out[i, j] = apply_filter(g, T).matrix
        out.setflags(write=False)
        return out

    @property
    def input_size(self) -> int:
        return self.graph.n if self.P.matrix is None else self.P.matrix.shape[1]

    def linear(self, x: np.ndarray) -> np.ndarray:
        """Filter bank applied after the connecting map, without ``rho``."""
        x = np.asarray(x, dtype=complex)
        return np.einsum("ijab,jb->ia", self.filter_matrices, self.P(x))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.rho(self.linear(x))


@dataclass(frozen=True, eq=False)
class Network:
    """Ordered stack of layers with chained channel counts and node spaces."""

    layers: Sequence[Layer]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise GraphError("network needs at least one layer")
        for n, (prev, cur) in enumerate(zip(layers, layers[1:]), start=1):
            if prev.K_out != cur.K_in:
                raise GraphError(
                    f"layer {n}: {cur.K_in} input channels, previous layer gives {prev.K_out}")
            if cur.input_size != prev.graph.n:
                raise GraphError(f"layer {n}: input node count does not match layer {n - 1}")
        object.__setattr__(self, "layers", layers)

    @property
    def N(self) -> int:
        return len(self.layers)

    @property
    def input_channels(self) -> int:
        return self.layers[0].K_in

    @property
    def input_weights(self) -> np.ndarray:
        first = self.layers[0]
        if first.P.matrix is None:
            return first.graph.mu
        dw = first.P.domain_weights
        return np.ones(first.input_size) if dw is None else np.asarray(dw, float)

    @property
    def output_graph(self) -> WeightedGraph:
        return self.layers[-1].graph

    def run(self, x: np.ndarray) -> np.ndarray:
        """Forward pass on a raw ``K_in x n`` array."""
        x = np.atleast_2d(np.asarray(x, dtype=complex))
        for layer in self.layers:
            x = layer(x)
        return x


def forward(net: Network, inp: FeatureBundle) -> FeatureBundle:
    """Evaluate the network on a feature bundle.

    Raises:
        GraphError: If the channel count or node space of the input does not
            fit the first layer.
    """
    first = net.layers[0]
    if inp.K != first.K_in:
        raise GraphError(f"layer 0 expects {first.K_in} channels, got {inp.K}")
    if inp.graph.n != first.input_size:
        raise GraphError(f"layer 0 expects {first.input_size} nodes, got {inp.graph.n}")
    if first.P.matrix is None and not np.array_equal(inp.graph.mu, first.graph.mu):
        raise GraphError("layer 0: input graph differs from the layer graph")
    return FeatureBundle(net.run(inp.values), net.output_graph)


def _family(g) -> type:
    return type(g)


def layer_constant_B(layer: Layer) -> float:
    """Upper bound on the norm of the layer's filter bank.

    For normal ``T`` every family is evaluated on the spectrum and the
    bound is ``max_lambda sqrt(sum_ij |g_ij(lambda)|^2)``.  Otherwise:

    * entire banks: ``sum_k sqrt(sum_ij |a_ij,k|^2) ||T||^k``;
    * Laurent banks with a layer contour:
      ``sqrt(sum_ij |g_ij(inf)|^2) + (1/2 pi) \\oint gamma_T sqrt(sum_ij |g_ij|^2) d|z|``;
    * Laurent banks otherwise: ``sqrt(sum_ij (sum_k |b_k| C_ij^k)^2)`` with
      ``C_ij`` the resolvent profile of ``T`` at the filter's pole.

    Raises:
        FilterContextError: For mixed families on a non-normal operator.
        NormalityError: For spectral or bivariate filters on a non-normal
            operator.
    """
    T = layer.T
    filters = layer.flat_filters
    spec = spectrum(T)
    if spec.eigenvectors is not None:
        vals = np.stack([np.asarray(g(spec.eigenvalues), dtype=complex) for g in filters])
        return float(np.sqrt(np.max(np.sum(np.abs(vals) ** 2, axis=0))))
    families = {_family(g) for g in filters}
    if families & {GenericFilter, ContFilter}:
        raise NormalityError("spectral and bivariate filters need a normal operator")
    if families == {EntireFilter}:
        order = max(g.a.size for g in filters)
        coeffs = np.zeros((len(filters), order), dtype=complex)
        for r, g in enumerate(filters):
            coeffs[r, : g.a.size] = g.a
        norm = operator_norm(T)
        per_k = np.sqrt(np.sum(np.abs(coeffs) ** 2, axis=0))
        return float(np.sum(per_k * norm ** np.arange(order, dtype=float)))
    if families == {HolFilter}:
        if layer.contour is not None:
            c = layer.contour
            gamma, lam = _profile_sampler(T, ProfileMode.GENERAL_BOUND)
            if not c.encloses(lam) or not c.excludes(np.array([g.omega for g in filters])):
                raise FilterContextError("layer contour must enclose the spectrum and exclude the poles")
            g_inf = np.sqrt(sum(abs(g.value_at_infinity) ** 2 for g in filters))

            def integrand(z):
                bank = np.stack([np.abs(g(z)) ** 2 for g in filters])
                return gamma(z) * np.sqrt(bank.sum(axis=0))

            return float(g_inf + _arc_mean(c, integrand))
        total = 0.0
        for g in filters:
            C = resolvent_profile(T, g.omega, ProfileMode.GENERAL_BOUND)
            total += filter_norm_bound(g, C=C) ** 2
        return float(np.sqrt(total))
    raise FilterContextError(
        f"cannot bound a mixed bank ({', '.join(sorted(f.__name__ for f in families))}) "
        "on a non-normal operator")


def aggregate(out: FeatureBundle, p: float = 2.0) -> np.ndarray:
    """Channel-wise weighted ``p``-norms ``(sum_g |f_i(g)|^p mu_g)^(1/p)``.

    Raises:
        ValueError: If ``p < 2``.
    """
    return aggregate_values(out.values, out.graph.mu, p)


def aggregate_values(values: np.ndarray, mu: np.ndarray, p: float = 2.0) -> np.ndarray:
    if p < 2:
        raise ValueError(f"aggregation needs p >= 2, got {p}")
    a = np.abs(np.atleast_2d(values))
    scale = np.max(a, axis=1, keepdims=True)
    scale[scale == 0] = 1.0
    return (scale[:, 0] * np.sum((a / scale) ** p * mu[None, :], axis=1) ** (1.0 / p))


def aggregation_factor(mu: np.ndarray, p: float) -> float:
    """Smallest ``c`` with ``||v||_p <= c ||v||_2`` for the weights ``mu``.

    Equal to one as soon as every node weight is at least one; smaller node
    weights inflate the weighted ``p``-norm relative to the ``2``-norm.
    """
    mu = np.asarray(mu, dtype=float)
    return float(max(1.0, np.max(mu ** (1.0 / p - 0.5))))


def random_filter_bank(rng: np.random.Generator, K_out: int, K_in: int, kind: str,
                       max_order: int, coeff_range=(-1.0, 1.0), omega: complex = -1.0):
    """Filters with real coefficients drawn uniformly from ``coeff_range``."""
    lo, hi = coeff_range
    bank = []
    for _ in range(K_out):
        row = []
        for _ in range(K_in):
            coeffs = rng.uniform(lo, hi, max_order + 1)
            if kind == "hol":
                row.append(HolFilter(omega, coeffs))
            elif kind == "entire":
                row.append(EntireFilter(coeffs))
            elif kind == "cont":
                terms = {}
                for m in range(max_order + 1):
                    for n in range(max_order + 1 - m):
                        terms[(m, n)] = rng.uniform(lo, hi)
                row.append(ContFilter(omega, terms))
            else:
                raise ValueError(f"unknown random filter kind {kind!r}")
        bank.append(row)
    return bank


def network_from_dict(data: dict, base_dir: str | Path = ".") -> Network:
    """Build a network from its JSON description.

    Each layer names a ``graph`` (path relative to ``base_dir`` or inline
    object), an ``operator`` kind, a ``nonlinearity``, a ``connecting``
    entry (``"identity"`` or a nested list of real numbers or ``[re, im]``
    pairs) and either an explicit ``filters`` grid or a ``random_filters``
    specification ``{"kind", "channels": [K_out, K_in], "coeff_range",
    "max_order", "omega"?}`` drawn with the network ``seed``.
    """
    base = Path(base_dir)
    seed = int(data.get("seed", 0))
    layers = []
    prev_graph = None
    for idx, entry in enumerate(data["layers"]):
        where = f"layers[{idx}]"
        try:
            gref = entry["graph"]
            graph = load_graph(base / gref) if isinstance(gref, str) else graph_from_dict(gref)
            kind = OperatorKind.parse(entry.get("operator", "laplacian"))
            rho = Nonlinearity(entry.get("nonlinearity", "identity"))
            conn = entry.get("connecting", "identity")
            if conn == "identity":
                P = ConnectingOp()
            else:
                mat = np.array([[complex(*v) if isinstance(v, list) else complex(v) for v in row]
                                for row in conn])
                dom = prev_graph.mu if prev_graph is not None else np.ones(mat.shape[1])
                if prev_graph is None and "input_mu" in entry:
                    dom = np.asarray(entry["input_mu"], dtype=float)
                P = ConnectingOp(mat, dom, graph.mu)
            if "filters" in entry:
                bank = []
                for row in entry["filters"]:
                    bank.append([filter_from_dict(_resolve(f, base)) for f in row])
            else:
                rnd = entry["random_filters"]
                K_out, K_in = rnd["channels"]
                om = rnd.get("omega", [-1.0, 0.0])
                rng = np.random.default_rng([seed, idx])
                bank = random_filter_bank(rng, int(K_out), int(K_in), rnd.get("kind", "hol"),
                                          int(rnd.get("max_order", 3)),
                                          tuple(rnd.get("coeff_range", [-1.0, 1.0])),
                                          complex(om[0], om[1]))
            layers.append(Layer(bank, graph, kind, rho, P))
        except (KeyError, TypeError, ValueError, OSError) as exc:
            raise ValueError(f"{where}: {exc}") from exc
        prev_graph = graph
    return Network(layers)


def _resolve(ref, base: Path) -> dict:
    if isinstance(ref, str):
        with open(base / ref) as fh:
            return json.load(fh)
    return ref


def load_network(path: str | Path) -> Network:
    path = Path(path)
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return network_from_dict(data, path.parent)
