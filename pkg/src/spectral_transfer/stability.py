"""Certified stability and transferability bounds for filter networks.

Four bound shapes are produced:

* signal:      ``prod_n L_n R_n B_n`` (Lipschitz constant of the network map)
* edge:        ``N D R L (B R L)^(N-1) ||f|| delta`` with ``delta`` the largest
  commutator ``||J T - T2 J||`` over the layers
* structural:  the same shape with ``delta`` replaced by the largest
  resolvent closeness ``||R2_omega J - J R_omega||``
* graph-level: ``(N D R L + K B R L)(B R L)^(N-1) ||f|| delta`` for the
  ``p``-norm readout

When the identification operators only almost commute with the
nonlinearities (defect ``delta1``) or connecting maps (defect ``delta2``)
the generalized shape ``N [R L D delta + delta1 B R + delta2 B L](B R L)^(N-1) ||f||``
is reported instead.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import GraphError
from .filters import (
    ClosenessContour,
    ConstantBound,
    ContFilter,
    ContourPair,
    ContourSpec,
    EntireFilter,
    HolFilter,
    kg_constant,
    lipschitz_constant,
)
from .graph_core import DenseOperator
from .network import (
    Layer,
    Network,
    aggregate_values,
    aggregation_factor,
    bundle_norm,
    layer_constant_B,
)
from .operator_algebra import frobenius_norm, operator_norm, resolvent, spectrum

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 200


@dataclass
class BoundReport:
    """Constants and value of one certified bound.

    ``B``, ``L``, ``R`` and ``D`` are the maxima of the per-layer lists,
    and ``value`` is reproducible from them through ``tag``.
    """

    tag: str
    N: int
    B_layers: list[float]
    L_layers: list[float]
    R_layers: list[float]
    D_layers: list[float] = field(default_factory=list)
    input_norm: float = 1.0
    delta: float = 0.0
    delta1: float = 0.0
    delta2: float = 0.0
    K: float = 0.0
    value: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def B(self) -> float:
        return max(self.B_layers)

    @property
    def L(self) -> float:
        return max(self.L_layers)

    @property
    def R(self) -> float:
        return max(self.R_layers)

    @property
    def D(self) -> float:
        return max(self.D_layers) if self.D_layers else 0.0

    def recompute(self) -> float:
        """Evaluate the tagged formula from the stored constants."""
        if self.tag == "signal":
            return float(np.prod(np.array(self.L_layers) * self.R_layers * np.array(self.B_layers)))
        args = (self.N, self.D, self.R, self.L, self.B, self.input_norm)
        if self.tag == "edge":
            return edge_bound(*args, self.delta)
        if self.tag == "structural":
            return structural_bound(*args, self.delta)
        if self.tag == "graph-level":
            return graph_level_bound(self.N, self.D, self.R, self.L, self.B, self.K,
                                     self.input_norm, self.delta)
        if self.tag == "generalized":
            return generalized_bound(*args, self.delta, self.delta1, self.delta2)
        raise ValueError(f"unknown bound tag {self.tag!r}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(B=self.B, L=self.L, R=self.R, D=self.D)
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _weights_of(T) -> np.ndarray:
    return T.weights


def commutator_norm(J, T: DenseOperator, T2: DenseOperator, kind: str = "operator") -> float:
    """``||J T - T2 J||`` between the weighted spaces of ``T`` and ``T2``.

    Args:
        J: ``n2 x n`` map from the space of ``T`` to that of ``T2``.
        kind: ``"operator"`` or ``"frobenius"``.
    """
    J = np.asarray(J, dtype=complex)
    if J.shape != (T2.n, T.n):
        raise GraphError(f"J has shape {J.shape}, expected {(T2.n, T.n)}")
    C = J @ T.matrix - T2.matrix @ J
    if kind == "operator":
        return operator_norm(C, T.weights, T2.weights)
    if kind == "frobenius":
        return frobenius_norm(C, T.weights, T2.weights)
    raise ValueError(f"unknown norm kind {kind!r}")


def resolvent_closeness(J, T: DenseOperator, T2: DenseOperator, omega: complex,
                        doubly: bool = False) -> float:
    """``||R2_omega J - J R_omega||``; with ``doubly`` also the adjoint-resolvent version."""
    J = np.asarray(J, dtype=complex)
    if J.shape != (T2.n, T.n):
        raise GraphError(f"J has shape {J.shape}, expected {(T2.n, T.n)}")
    R, R2 = resolvent(T, omega), resolvent(T2, omega)
    val = operator_norm(R2.matrix @ J - J @ R.matrix, T.weights, T2.weights)
    if doubly:
        Ra, R2a = R.adjoint().matrix, R2.adjoint().matrix
        val = max(val, operator_norm(R2a @ J - J @ Ra, T.weights, T2.weights))
    return float(val)


def signal_bound(net: Network) -> BoundReport:
    """Lipschitz bound ``prod_n L_n R_n B_n`` of the network map."""
    B = [layer_constant_B(layer) for layer in net.layers]
    L = [layer.rho.L for layer in net.layers]
    R = [layer.P.R for layer in net.layers]
    rep = BoundReport("signal", net.N, B, L, R)
    rep.value = rep.recompute()
    return rep


def edge_bound(N, D, R, L, B, input_norm, delta) -> float:
    """``N D R L (B R L)^(N-1) ||f|| delta``."""
    return float(N * D * R * L * (B * R * L) ** (N - 1) * input_norm * delta)


def structural_bound(N, D, R, L, B, input_norm, epsilon) -> float:
    """Same shape as :func:`edge_bound` with resolvent closeness ``epsilon``."""
    return edge_bound(N, D, R, L, B, input_norm, epsilon)


def graph_level_bound(N, D, R, L, B, K, input_norm, delta) -> float:
    """``(N D R L + K B R L)(B R L)^(N-1) ||f|| delta``."""
    return float((N * D * R * L + K * B * R * L) * (B * R * L) ** (N - 1) * input_norm * delta)


def generalized_bound(N, D, R, L, B, input_norm, delta, delta1, delta2) -> float:
    """``N [R L D delta + delta1 B R + delta2 B L] (B R L)^(N-1) ||f||``."""
    return float(N * (R * L * D * delta + delta1 * B * R + delta2 * B * L)
                 * (B * R * L) ** (N - 1) * input_norm)


def unit_samples(rng: np.random.Generator, K: int, mu: np.ndarray, count: int) -> np.ndarray:
    """``count`` complex Gaussian bundles normalized to unit weighted norm."""
    x = rng.standard_normal((count, K, mu.size)) + 1j * rng.standard_normal((count, K, mu.size))
    norms = np.sqrt(np.sum(np.abs(x) ** 2 * mu[None, None, :], axis=(1, 2)))
    return x / norms[:, None, None]


def empirical_lipschitz(net: Network, samples: int = DEFAULT_SAMPLES, seed: int = 0) -> float:
    """Largest observed ``||Phi(f) - Phi(h)|| / ||f - h||`` over random pairs.

    Pairs are drawn independently on the unit sphere; sample ``k`` uses the
    generator seeded with ``(seed, k)``.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    mu_in, mu_out = net.input_weights, net.output_graph.mu
    best = 0.0
    for k in range(samples):
        rng = np.random.default_rng([seed, k])
        f, h = unit_samples(rng, net.input_channels, mu_in, 2)
        den = bundle_norm(f - h, mu_in)
        if den == 0:
            continue
        num = bundle_norm(net.run(f) - net.run(h), mu_out)
        best = max(best, num / den)
    return float(best)


@dataclass
class IdentificationSet:
    """Identification maps ``J_0 .. J_N`` between the layer spaces of two
    networks, with measured commutation defects per layer."""

    Js: list
    delta1: list[float] = field(default_factory=list)
    delta2: list[float] = field(default_factory=list)

    @property
    def max_delta1(self) -> float:
        return max(self.delta1, default=0.0)

    @property
    def max_delta2(self) -> float:
        return max(self.delta2, default=0.0)


def _check_chain(net: Network, net2: Network, Js: Sequence) -> list[np.ndarray]:
    if net.N != net2.N:
        raise GraphError("networks have different depths")
    Js = [np.asarray(J, dtype=complex) for J in Js]
    if len(Js) != net.N + 1:
        raise GraphError(f"need {net.N + 1} identification maps, got {len(Js)}")
    sizes = [net.layers[0].input_size] + [layer.graph.n for layer in net.layers]
    sizes2 = [net2.layers[0].input_size] + [layer.graph.n for layer in net2.layers]
    for n, (J, a, b) in enumerate(zip(Js, sizes, sizes2)):
        if J.shape != (b, a):
            raise GraphError(f"J_{n} has shape {J.shape}, expected {(b, a)}")
    return Js


def measure_commutation_defects(net: Network, net2: Network, Js: Sequence,
                                samples: int = DEFAULT_SAMPLES, seed: int = 0,
                                nonnegative: bool = False) -> IdentificationSet:
    """Sampled defects ``||rho(J f) - J rho(f)|| / ||f||`` and
    ``||P2 J f - J P f|| / ||f||`` per layer.

    With ``nonnegative`` the samples are real and nonnegative.
    """
    Js = _check_chain(net, net2, Js)
    d1, d2 = [], []
    for n, (layer, layer2) in enumerate(zip(net.layers, net2.layers), start=1):
        J_prev, J = Js[n - 1], Js[n]
        mu_prev = net.input_weights if n == 1 else net.layers[n - 2].graph.mu
        mu = layer.graph.mu
        mu2 = layer2.graph.mu
        worst1 = worst2 = 0.0
        for k in range(samples):
            rng = np.random.default_rng([seed, n, k])
            f = unit_samples(rng, 1, mu, 1)[0, 0]
            g = unit_samples(rng, 1, mu_prev, 1)[0, 0]
            if nonnegative:
                f = np.abs(f.real)
                g = np.abs(g.real)
            num1 = bundle_norm((layer2.rho(J @ f) - J @ layer.rho(f))[None], mu2)
            worst1 = max(worst1, num1 / bundle_norm(f[None], mu))
            num2 = bundle_norm((layer2.P(J_prev @ g) - J @ layer.P(g))[None], mu2)
            worst2 = max(worst2, num2 / bundle_norm(g[None], mu_prev))
        d1.append(float(worst1))
        d2.append(float(worst2))
    return IdentificationSet(Js, d1, d2)


def _poles(g) -> list[complex]:
    return [g.omega] if isinstance(g, HolFilter) else []


def _filter_D(layer: Layer, layer2: Layer, J, method: str, omega=None,
              contour: ContourSpec | None = None) -> tuple[float, bool]:
    """Per-layer ``D_n = sqrt(sum_ij K_ij^2)`` and whether any constant is estimated."""
    T, T2 = layer.T, layer2.T
    estimated = False
    consts = []
    if method == "lipschitz":
        lam, lam2 = spectrum(T).eigenvalues, spectrum(T2).eigenvalues
        for g in layer.flat_filters:
            val, est = lipschitz_constant(g, lam, lam2)
            consts.append(val)
            estimated |= est
    elif method == "commutator":
        C = max(operator_norm(T), operator_norm(T2))
        for g in layer.flat_filters:
            if isinstance(g, EntireFilter) and contour is None:
                consts.append(kg_constant(g, ConstantBound(C)))
            else:
                c = contour or ContourSpec.fitting(T, T2, exclude=_poles(g))
                consts.append(kg_constant(g, ContourPair(T, T2, c)))
    elif method == "closeness":
        C = max(operator_norm(resolvent(T, omega)), operator_norm(resolvent(T2, omega)))
        for g in layer.flat_filters:
            if isinstance(g, (HolFilter, ContFilter)) and g.omega == omega and contour is None:
                consts.append(kg_constant(g, ConstantBound(C)))
            else:
                c = contour or ContourSpec.fitting(T, T2, exclude=_poles(g))
                consts.append(kg_constant(g, ClosenessContour(T, T2, c, omega=omega)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(np.sqrt(np.sum(np.square(consts)))), estimated


def _paired_constants(net: Network, net2: Network):
    B = [max(layer_constant_B(a), layer_constant_B(b)) for a, b in zip(net.layers, net2.layers)]
    L = [max(a.rho.L, b.rho.L) for a, b in zip(net.layers, net2.layers)]
    R = [max(a.P.R, b.P.R) for a, b in zip(net.layers, net2.layers)]
    return B, L, R


def edge_report(net: Network, net2: Network, Js: Sequence, input_norm: float = 1.0,
                norm: str = "frobenius", defects: IdentificationSet | None = None,
                contour: ContourSpec | None = None) -> BoundReport:
    """Certified bound on ``||Phi2(J_0 f) - J_N Phi(f)||`` for perturbed operators.

    With ``norm="frobenius"`` (normal operators) the filter constants are
    Lipschitz constants on the spectra and ``delta`` is the Frobenius
    commutator; with ``norm="operator"`` the constants multiply the
    operator-norm commutator.
    """
    Js = _check_chain(net, net2, Js)
    B, L, R = _paired_constants(net, net2)
    D, deltas, est = [], [], False
    method = "lipschitz" if norm == "frobenius" else "commutator"
    for n, (a, b) in enumerate(zip(net.layers, net2.layers), start=1):
        d, e = _filter_D(a, b, Js[n], method, contour=contour)
        D.append(d)
        est |= e
        deltas.append(commutator_norm(Js[n], a.T, b.T, norm))
    rep = BoundReport("edge", net.N, B, L, R, D, input_norm, max(deltas))
    rep.extra = {"norm": norm, "deltas": deltas, "lipschitz_estimated": est,
                 "deltas_operator": [commutator_norm(Js[n], a.T, b.T, "operator")
                                     for n, (a, b) in enumerate(zip(net.layers, net2.layers), 1)]}
    _apply_defects(rep, defects)
    return rep


def structural_report(net: Network, net2: Network, Js: Sequence, omega: complex = -1.0,
                      input_norm: float = 1.0, defects: IdentificationSet | None = None,
                      contour: ContourSpec | None = None) -> BoundReport:
    """Certified bound on ``||Phi2(J_0 f) - J_N Phi(f)||`` for resolvent-close pairs."""
    Js = _check_chain(net, net2, Js)
    B, L, R = _paired_constants(net, net2)
    D, eps = [], []
    for n, (a, b) in enumerate(zip(net.layers, net2.layers), start=1):
        D.append(_filter_D(a, b, Js[n], "closeness", omega=omega, contour=contour)[0])
        doubly = any(isinstance(g, ContFilter) for g in a.flat_filters)
        eps.append(resolvent_closeness(Js[n], a.T, b.T, omega, doubly))
    rep = BoundReport("structural", net.N, B, L, R, D, input_norm, max(eps))
    rep.extra = {"omega": [complex(omega).real, complex(omega).imag], "epsilons": eps}
    _apply_defects(rep, defects)
    return rep


def _apply_defects(rep: BoundReport, defects: IdentificationSet | None):
    if defects is None:
        rep.value = rep.recompute()
        return
    rep.delta1, rep.delta2 = defects.max_delta1, defects.max_delta2
    if rep.delta1 > 0 or rep.delta2 > 0:
        rep.extra["base_tag"] = rep.tag
        rep.tag = "generalized"
    rep.value = rep.recompute()


def pnorm_defect(J, mu: np.ndarray, mu2: np.ndarray, p: float,
                 samples: int = DEFAULT_SAMPLES, seed: int = 0) -> tuple[float, bool]:
    """Smallest ``c`` with ``| ||J f||_p - ||f||_p | <= c ||f||_2``.

    For ``p = 2`` the exact value ``||J* J - Id||`` is an upper bound and is
    returned as certified.  Otherwise the constant is measured on random
    unit signals and flagged as an estimate.
    """
    J = np.asarray(J, dtype=complex)
    if p == 2:
        adj = (J.conj().T * mu2[None, :]) / mu[:, None]
        return operator_norm(adj @ J - np.eye(J.shape[1]), mu, mu), False
    worst = 0.0
    for k in range(samples):
        rng = np.random.default_rng([seed, k])
        f = unit_samples(rng, 1, mu, 1)[0]
        a = aggregate_values(J @ f[0], mu2, p)[0]
        b = aggregate_values(f[0], mu, p)[0]
        worst = max(worst, abs(a - b))
    return float(worst), True


def graph_level_report(base: BoundReport, Kdelta: float, p: float,
                       mu_out: np.ndarray, mu_out2: np.ndarray) -> BoundReport:
    """Bound for the ``p``-norm readout derived from an edge or structural report.

    ``Kdelta`` is the product ``K delta`` of the readout hypothesis.  The
    result also carries the factor by which weighted ``p``-norms can exceed
    ``2``-norms when node weights are below one.
    """
    rep = BoundReport("graph-level", base.N, base.B_layers, base.L_layers, base.R_layers,
                      base.D_layers, base.input_norm, base.delta, K=0.0)
    rep.K = Kdelta / base.delta if base.delta > 0 else (0.0 if Kdelta == 0 else np.inf)
    factor = max(aggregation_factor(mu_out, p), aggregation_factor(mu_out2, p))
    rep.extra = {"p": p, "pnorm_factor": factor, "base_tag": base.tag}
    if base.delta > 0:
        rep.value = factor * rep.recompute()
    else:
        BRL = base.B * base.R * base.L
        rep.value = factor * Kdelta * BRL ** base.N * base.input_norm
    return rep


def transfer_discrepancy(net: Network, net2: Network, J_in, J_out,
                         samples: int = DEFAULT_SAMPLES, seed: int = 0,
                         p: float | None = None) -> float:
    """Largest observed ``||Phi2(J_in f) - J_out Phi(f)||`` over unit inputs.

    With ``p`` given, compares the readouts ``||Psi2(J_in f) - Psi(f)||``
    instead.
    """
    J_in = np.asarray(J_in, dtype=complex)
    J_out = np.asarray(J_out, dtype=complex)
    mu_in = net.input_weights
    mu_out, mu_out2 = net.output_graph.mu, net2.output_graph.mu
    worst = 0.0
    for k in range(samples):
        rng = np.random.default_rng([seed, k])
        f = unit_samples(rng, net.input_channels, mu_in, 1)[0]
        y = net.run(f)
        y2 = net2.run(f @ J_in.T)
        if p is None:
            val = bundle_norm(y2 - y @ J_out.T, mu_out2)
        else:
            val = float(np.linalg.norm(aggregate_values(y2, mu_out2, p)
                                       - aggregate_values(y, mu_out, p)))
        worst = max(worst, val)
    return float(worst)
