import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_transfer.errors import SingularityError
from spectral_transfer.graph_core import DenseOperator, characteristic_operator
from spectral_transfer.operator_algebra import (
    ProfileMode,
    default_omega,
    frobenius_norm,
    is_normal,
    is_self_adjoint,
    nuclear_norm,
    operator_norm,
    resolvent,
    resolvent_profile,
    spectrum,
)

from conftest import random_graph, random_operator


def test_weighted_operator_norm_of_diagonal():
    # a diagonal map is unaffected by equal domain/codomain weights
    T = DenseOperator(np.diag([3.0, -5.0]), np.array([0.1, 7.0]))
    assert operator_norm(T) == pytest.approx(5.0)
    assert frobenius_norm(T) == pytest.approx(np.sqrt(34.0))


def test_rectangular_norm_uses_both_weight_sets():
    J = np.array([[1.0], [1.0]])
    # ||J x||^2 = (m0 + m1)|x|^2 against ||x||^2 = m|x|^2
    assert operator_norm(J, [2.0], [1.0, 1.0]) == pytest.approx(1.0)
    assert operator_norm(J, [1.0], [1.0, 3.0]) == pytest.approx(2.0)


def test_nuclear_norm_of_diagonal():
    assert nuclear_norm(DenseOperator(np.diag([1.0, -2.0, 3j]))) == pytest.approx(6.0)


def test_normality_classification():
    rot = DenseOperator(np.array([[0.0, -1.0], [1.0, 0.0]]))
    jordan = DenseOperator(np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert is_normal(rot) and not is_self_adjoint(rot)
    assert not is_normal(jordan)
    spec = spectrum(rot)
    np.testing.assert_allclose(np.sort(spec.eigenvalues.imag), [-1.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(spec.reconstruct(), rot.matrix, atol=1e-13)
    assert spectrum(jordan).eigenvectors is None


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 10))
def test_spectrum_reconstructs_graph_operators(seed, n):
    g = random_graph(np.random.default_rng(seed), n)
    T = characteristic_operator(g, "laplacian")
    spec = spectrum(T)
    np.testing.assert_allclose(spec.reconstruct(), T.matrix, atol=1e-10 * (1 + operator_norm(T)))
    # weighted orthonormality
    phi = spec.eigenvectors
    gram = phi.conj().T @ (phi * g.mu[:, None])
    np.testing.assert_allclose(gram, np.eye(n), atol=1e-10)


def test_resolvent_rejects_spectrum():
    T = DenseOperator(np.diag([0.0, 1.0]))
    with pytest.raises(SingularityError):
        resolvent(T, 1.0)
    with pytest.raises(SingularityError):
        resolvent_profile(T, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_resolvent_identity(seed):
    rng = np.random.default_rng(seed)
    T = random_operator(rng, 5, rng.uniform(0.5, 2.0, 5))
    z, w = 3.0 + 1j, -2.5 - 0.5j
    Rz, Rw = resolvent(T, z).matrix, resolvent(T, w).matrix
    np.testing.assert_allclose(Rz - Rw, (w - z) * Rz @ Rw, atol=1e-11)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 3.0))
def test_general_profile_is_an_upper_bound(seed, dist):
    rng = np.random.default_rng(seed)
    T = random_operator(rng, 4, rng.uniform(0.5, 2.0, 4))
    lam = spectrum(T).eigenvalues
    z = lam[0] + dist * np.exp(1j * rng.uniform(0, 2 * np.pi))
    if np.min(np.abs(lam - z)) < 1e-3:
        return
    actual = operator_norm(resolvent(T, z))
    assert actual <= resolvent_profile(T, z, ProfileMode.GENERAL_BOUND) * (1 + 1e-9)


def test_normal_profile_is_exact_for_normal_operators(rng):
    T = characteristic_operator(random_graph(rng, 7), "laplacian")
    z = -0.7 + 0.2j
    assert resolvent_profile(T, z) == pytest.approx(operator_norm(resolvent(T, z)), rel=1e-10)


def test_normal_profile_underestimates_jordan_block():
    T = DenseOperator(np.array([[0.0, 1.0], [0.0, 0.0]]))
    z = 0.1
    # ||(z - N)^{-1}|| ~ 1/z^2 is far above 1/d = 1/z
    assert operator_norm(resolvent(T, z)) > 5 * resolvent_profile(T, z, ProfileMode.NORMAL_EXACT)
    assert operator_norm(resolvent(T, z)) <= resolvent_profile(T, z, ProfileMode.GENERAL_BOUND)


def test_default_omega():
    g = random_graph(np.random.default_rng(1), 5)
    assert default_omega(characteristic_operator(g, "laplacian"), "laplacian") == -1
    assert default_omega(characteristic_operator(g, "adjacency"), "adjacency") == 1j
