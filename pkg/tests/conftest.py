import numpy as np
import pytest

from spectral_transfer.filters import ContFilter, EntireFilter, GenericFilter, HolFilter
from spectral_transfer.graph_core import DenseOperator, WeightedGraph
from spectral_transfer.network import ConnectingOp, Layer, Network, Nonlinearity

FAMILIES = ("entire", "hol", "cont", "generic")
RHOS = ("identity", "modulus", "relu", "shifted-sigmoid")


def random_graph(rng, n, density=0.6, mu_range=(0.5, 3.0), w_range=(0.1, 2.0)):
    """Connected undirected graph: a random spanning path plus extra edges."""
    W = np.zeros((n, n))
    perm = rng.permutation(n)
    for a, b in zip(perm, perm[1:]):
        W[a, b] = W[b, a] = rng.uniform(*w_range)
    extra = np.triu(rng.random((n, n)) < density, 1)
    vals = rng.uniform(*w_range, (n, n))
    W = np.where(extra & (W == 0), vals, W)
    W = np.triu(W, 1)
    W = W + W.T
    return WeightedGraph(W, rng.uniform(*mu_range, n))


def random_operator(rng, n, weights=None):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return DenseOperator(A / np.sqrt(n), np.ones(n) if weights is None else weights)


def random_filter(rng, family, omega=-1.0, order=3):
    if family == "entire":
        return EntireFilter(rng.uniform(-1, 1, order + 1) / np.arange(1, order + 2))
    if family == "hol":
        return HolFilter(omega, rng.uniform(-1, 1, order + 1))
    if family == "cont":
        return ContFilter(omega, {(m, n): rng.uniform(-1, 1)
                                  for m in range(2) for n in range(2)})
    c = rng.uniform(0.2, 1.5)
    return GenericFilter(lambda z, c=c: np.sin(c * z), lipschitz_hint=c)


def random_network(rng, N, K, n, families=FAMILIES, kind="laplacian", rhos=RHOS,
                   graphs=None):
    """Random network whose layers may live on different graphs."""
    layers = []
    prev = None
    k_in = int(rng.integers(1, K + 1))
    for idx in range(N):
        g = graphs[idx] if graphs is not None else random_graph(rng, int(rng.integers(3, n + 1)))
        k_out = int(rng.integers(1, K + 1))
        fam = families[idx % len(families)]
        bank = [[random_filter(rng, fam) for _ in range(k_in)] for _ in range(k_out)]
        rho = Nonlinearity(rhos[int(rng.integers(len(rhos)))])
        if prev is None or prev is g:
            P = ConnectingOp()
        else:
            P = ConnectingOp(rng.standard_normal((g.n, prev.n)), prev.mu, g.mu)
        layers.append(Layer(bank, g, kind, rho, P))
        prev = g
        k_in = k_out
    return Network(layers)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def perturbed_twin(net, rng, eta=0.05):
    """Same filters, nonlinearities and connecting maps on edge-perturbed graphs."""
    layers = []
    cache = {}
    for layer in net.layers:
        g = layer.graph
        if id(g) not in cache:
            noise = np.triu(rng.uniform(-eta, eta, g.W.shape), 1)
            cache[id(g)] = g.with_weights(W=g.W * (1.0 + noise + noise.T))
        layers.append(Layer(layer.filters, cache[id(g)], layer.kind, layer.rho, layer.P))
    return Network(layers)


def collapse_instance(rng, N=2, K=3, families=("hol", "entire", "cont"), delta=1e-2):
    """Coarse/fine network pair sharing filters, with the collapse map as J.

    Returns ``(net_coarse, net_fine, pair)``; identity nonlinearities and
    connecting maps, since J does not commute with the others.
    """
    from spectral_transfer.coarsen import Partition, collapse, scale_greek_sector

    n = int(rng.integers(5, 9))
    base = random_graph(rng, n, density=0.8)
    star = int(rng.integers(n))
    others = [i for i in range(n) if i != star]
    rng.shuffle(others)
    n_greek = int(rng.integers(1, max(2, n // 2)))
    part = Partition(sorted(others[n_greek:]), star, sorted(others[:n_greek]))
    W = np.array(base.W)
    for i in part.greek:
        W[i, star] = W[star, i] = max(W[i, star], 0.5)
    base = base.with_weights(W=W)
    pair = collapse(scale_greek_sector(base, part, delta), part)
    k_in = int(rng.integers(1, K + 1))
    coarse_layers, fine_layers = [], []
    for idx in range(N):
        k_out = int(rng.integers(1, K + 1))
        fam = families[idx % len(families)]
        bank = [[random_filter(rng, fam) for _ in range(k_in)] for _ in range(k_out)]
        coarse_layers.append(Layer(bank, pair.coarse, "laplacian", Nonlinearity("identity")))
        fine_layers.append(Layer(bank, pair.fine, "laplacian", Nonlinearity("identity")))
        k_in = k_out
    return Network(coarse_layers), Network(fine_layers), pair


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
