import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_transfer.errors import GraphError
from spectral_transfer.filters import EntireFilter, GenericFilter, apply_generic
from spectral_transfer.graph_core import DenseOperator
from spectral_transfer.network import Layer, Network, Nonlinearity
from spectral_transfer.operator_algebra import frobenius_norm
from spectral_transfer.stability import (
    BoundReport,
    edge_bound,
    edge_report,
    empirical_lipschitz,
    generalized_bound,
    graph_level_bound,
    graph_level_report,
    measure_commutation_defects,
    pnorm_defect,
    signal_bound,
    structural_bound,
    structural_report,
    transfer_discrepancy,
)

from conftest import collapse_instance, perturbed_twin, random_graph, random_network


def test_bound_formula_examples():
    assert edge_bound(1, 1, 1, 1, 1, 1, 0.1) == pytest.approx(0.1)
    assert edge_bound(2, 2, 1, 1, 3, 1, 0.5) == pytest.approx(6.0)
    assert edge_bound(3, 5, 2, 1, 4, 2, 0.0) == 0.0
    assert structural_bound(1, 1, 1, 1, 1, 1, 0.2) == pytest.approx(0.2)
    assert structural_bound(3, 1, 1, 1, 1, 1, 1.0) == pytest.approx(3.0)
    assert graph_level_bound(1, 1, 1, 1, 1, 0, 1, 1) == pytest.approx(1.0)
    assert graph_level_bound(1, 1, 1, 1, 1, 2, 1, 1) == pytest.approx(3.0)
    assert graph_level_bound(2, 1, 1, 1, 1, 2, 1, 0) == 0.0
    # delta1 = delta2 = 0 reduces to the edge shape
    assert generalized_bound(2, 2, 1, 1, 3, 1, 0.5, 0, 0) == pytest.approx(6.0)


def test_signal_bound_products():
    rep = BoundReport("signal", 1, [3.0], [2.0], [1.0])
    assert rep.recompute() == pytest.approx(6.0)
    rep = BoundReport("signal", 2, [2.0, 2.0], [1.0, 1.0], [1.0, 1.0])
    assert rep.recompute() == pytest.approx(4.0)


def test_identity_network_is_tight(rng):
    g = random_graph(rng, 5)
    net = Network([Layer([[EntireFilter([1.0])]], g)])
    assert signal_bound(net).value == pytest.approx(1.0)
    assert empirical_lipschitz(net, samples=20) == pytest.approx(1.0)
    zero = Network([Layer([[EntireFilter([0.0])]], g)])
    assert empirical_lipschitz(zero, samples=5) == 0.0


def test_report_roundtrip(rng):
    rep = signal_bound(random_network(rng, 2, 2, 5))
    data = json.loads(rep.to_json())
    assert data["tag"] == "signal"
    assert data["value"] == pytest.approx(rep.recompute())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_signal_bound_soundness(seed):
    net = random_network(np.random.default_rng(seed), 2, 3, 7)
    assert empirical_lipschitz(net, samples=30, seed=seed) <= signal_bound(net).value * (1 + 1e-6)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(2, 6))
def test_frobenius_lipschitz_property(seed, n, m):
    """||g(X) J - J g(Y)||_F <= D_g ||X J - J Y||_F for normal X, Y."""
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((n, n)), rng.standard_normal((m, m))
    X, Y = DenseOperator(A + A.T), DenseOperator(B + B.T)
    J = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
    c = rng.uniform(0.1, 2.0)
    g = GenericFilter(lambda z: np.sin(c * z) + 0.5 * np.abs(z) * c, lipschitz_hint=1.5 * c)
    lhs = frobenius_norm(apply_generic(g, X).matrix @ J - J @ apply_generic(g, Y).matrix)
    rhs = g.lipschitz_hint * frobenius_norm(X.matrix @ J - J @ Y.matrix)
    assert lhs <= rhs * (1 + 1e-8)


@pytest.mark.parametrize("seed", range(8))
def test_edge_report_sound_on_perturbed_graphs(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, 2, 3, 6)
    net2 = perturbed_twin(net, rng)
    sizes = [net.layers[0].input_size] + [layer.graph.n for layer in net.layers]
    Js = [np.eye(k) for k in sizes]
    for norm in ("frobenius", "operator"):
        if norm == "operator" and any(isinstance(g, GenericFilter) or type(g).__name__ == "ContFilter"
                                      for layer in net.layers for g in layer.flat_filters):
            continue
        rep = edge_report(net, net2, Js, norm=norm)
        measured = transfer_discrepancy(net, net2, Js[0], Js[-1], samples=30, seed=seed)
        assert measured <= rep.value * (1 + 1e-6)


@pytest.mark.parametrize("seed", range(8))
def test_structural_report_sound_on_collapse(seed):
    rng = np.random.default_rng(100 + seed)
    net, net2, pair = collapse_instance(rng)
    Js = [pair.J] * (net.N + 1)
    rep = structural_report(net, net2, Js, omega=-1.0)
    measured = transfer_discrepancy(net, net2, pair.J, pair.J, samples=30, seed=seed)
    assert measured <= rep.value * (1 + 1e-6)
    # graph-level readout with the certified p = 2 defect
    Kd, est = pnorm_defect(pair.J, pair.coarse.mu, pair.fine.mu, 2)
    assert not est
    gl = graph_level_report(rep, Kd, 2, pair.coarse.mu, pair.fine.mu)
    readout = transfer_discrepancy(net, net2, pair.J, pair.J, samples=30, seed=seed, p=2)
    assert readout <= gl.value * (1 + 1e-6)


def test_defects_vanish_for_commuting_parts(rng):
    net, net2, pair = collapse_instance(rng)
    d = measure_commutation_defects(net, net2, [pair.J] * 3, samples=10)
    assert d.max_delta1 == 0 and d.max_delta2 == 0
    g = random_graph(rng, 4)
    mods = [Network([Layer([[EntireFilter([0, 1])]], g, rho=Nonlinearity("modulus"))])
            for _ in range(2)]
    J = np.abs(rng.standard_normal((4, 4)))
    d = measure_commutation_defects(*mods, [J, J], samples=20, nonnegative=True)
    assert d.max_delta1 == pytest.approx(0.0, abs=1e-12)


def test_generalized_tag_when_defects_present(rng):
    net, net2, pair = collapse_instance(rng)
    relu = [Network([Layer(l.filters, l.graph, l.kind, Nonlinearity("relu")) for l in n.layers])
            for n in (net, net2)]
    Js = [pair.J] * 3
    d = measure_commutation_defects(*relu, Js, samples=20)
    rep = structural_report(*relu, Js, defects=d)
    assert rep.tag == "generalized" and rep.delta1 > 0
    assert rep.value == pytest.approx(rep.recompute())


def test_chain_shape_checked(rng):
    net, net2, pair = collapse_instance(rng)
    with pytest.raises(GraphError):
        structural_report(net, net2, [pair.J] * 2)
