"""Spectra, resolvents, weighted norms and resolvent profiles.

All norms are taken with respect to the weighted inner products of the
domain and codomain.  A map ``A`` from a space with node weights ``mu`` to a
space with node weights ``nu`` has weighted operator norm equal to the
largest singular value of ``diag(nu)^{1/2} A diag(mu)^{-1/2}``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SingularityError, SpectrumError
from .graph_core import DenseOperator, OperatorKind

logger = logging.getLogger(__name__)

NORMAL_TOL = 1e-10
SINGULAR_REL = 1e-12
MAX_COND = 1e14


class ProfileMode(enum.Enum):
    """How an upper bound on the resolvent norm is obtained."""

    NORMAL_EXACT = "normal-exact"
    GENERAL_BOUND = "general-bound"


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    """Eigenvalues, and for normal operators a weighted-orthonormal eigenbasis.

    Attributes:
        eigenvalues: ``n`` complex eigenvalues.
        eigenvectors: ``n x n`` matrix whose columns are eigenvectors,
            orthonormal in the weighted inner product, or ``None`` when the
            operator is not normal.
        weights: node weights of the space the eigenvectors live in.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    weights: np.ndarray | None = None

    def reconstruct(self) -> np.ndarray:
        """``Phi diag(lambda) Phi*`` with the weighted adjoint of ``Phi``."""
        if self.eigenvectors is None:
            raise ValueError("no eigenvectors available")
        phi = self.eigenvectors
        return (phi * self.eigenvalues[None, :]) @ (phi.conj().T * self.weights[None, :])


def _as_array(A) -> np.ndarray:
    return A.matrix if isinstance(A, DenseOperator) else np.asarray(A, dtype=complex)


def _scaled(A, domain_weights=None, codomain_weights=None) -> np.ndarray:
    """``diag(nu)^{1/2} A diag(mu)^{-1/2}`` for a possibly rectangular map."""
    M = _as_array(A)
    if isinstance(A, DenseOperator):
        domain_weights = A.weights if domain_weights is None else domain_weights
        codomain_weights = A.weights if codomain_weights is None else codomain_weights
    dw = np.ones(M.shape[1]) if domain_weights is None else np.asarray(domain_weights, float)
    cw = np.ones(M.shape[0]) if codomain_weights is None else np.asarray(codomain_weights, float)
    if dw.shape[0] != M.shape[1] or cw.shape[0] != M.shape[0]:
        raise ValueError(
            f"map of shape {M.shape} does not fit weights ({cw.shape[0]}, {dw.shape[0]})")
    return np.sqrt(cw)[:, None] * M / np.sqrt(dw)[None, :]


def symmetrized(T: DenseOperator) -> np.ndarray:
    """Unitary image ``M^{1/2} T M^{-1/2}`` of ``T`` in the plain Euclidean space."""
    return _scaled(T)


def operator_norm(A, domain_weights=None, codomain_weights=None) -> float:
    """Weighted operator norm of a square operator or rectangular map.

    Args:
        A: A :class:`DenseOperator` (its weights are used on both sides
            unless overridden) or an array.
        domain_weights: Node weights of the domain space, default all ones.
        codomain_weights: Node weights of the codomain space, default all ones.
    """
    S = _scaled(A, domain_weights, codomain_weights)
    if S.size == 0:
        return 0.0
    return float(np.linalg.norm(S, 2))


def frobenius_norm(A, domain_weights=None, codomain_weights=None) -> float:
    """Weighted Frobenius (Hilbert-Schmidt) norm, same scaling as :func:`operator_norm`."""
    return float(np.linalg.norm(_scaled(A, domain_weights, codomain_weights), "fro"))


def nuclear_norm(T: DenseOperator) -> float:
    """Trace norm: sum of the singular values of the weighted operator."""
    return float(np.sum(np.linalg.svd(symmetrized(T), compute_uv=False)))


def is_normal(T: DenseOperator, tol: float = NORMAL_TOL) -> bool:
    """Whether ``T`` commutes with its weighted adjoint up to ``tol * ||T||^2``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    S = symmetrized(T)
    Sh = S.conj().T
    defect = np.linalg.norm(Sh @ S - S @ Sh, 2)
    return bool(defect <= tol * np.linalg.norm(S, 2) ** 2)


def is_self_adjoint(T: DenseOperator, tol: float = NORMAL_TOL) -> bool:
    S = symmetrized(T)
    scale = np.linalg.norm(S, 2)
    return bool(np.linalg.norm(S - S.conj().T, 2) <= tol * max(scale, np.finfo(float).tiny))


def spectrum(T: DenseOperator, tol: float = NORMAL_TOL) -> SpectrumResult:
    """Eigenvalues of ``T`` and, if ``T`` is normal, a weighted-orthonormal eigenbasis.

    Self-adjoint operators go through a Hermitian solver, other normal
    operators through the complex Schur form (which is diagonal for normal
    matrices), and non-normal ones only return eigenvalues.

    Raises:
        SpectrumError: If LAPACK fails to converge.
    """
    S = symmetrized(T)
    root = np.sqrt(T.weights)
    try:
        if is_self_adjoint(T, tol):
            vals, Q = scipy.linalg.eigh(0.5 * (S + S.conj().T))
            return SpectrumResult(vals.astype(complex), Q / root[:, None], T.weights)
        if is_normal(T, tol):
            U, Q = scipy.linalg.schur(S, output="complex")
            off = np.linalg.norm(np.triu(U, 1))
            logger.debug("schur off-diagonal mass %.3e", off)
            return SpectrumResult(np.diag(U).copy(), Q / root[:, None], T.weights)
        return SpectrumResult(scipy.linalg.eigvals(S), None, T.weights)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        finite = bool(np.all(np.isfinite(S)))
        raise SpectrumError(
            f"eigensolver failed for a {T.n}x{T.n} operator "
            f"(finite entries: {finite}, |T|_F={np.linalg.norm(S):.3e}): {exc}") from exc


def spectral_distance(z: complex, eigenvalues: np.ndarray) -> float:
    """Distance from ``z`` to a finite set of eigenvalues."""
    return float(np.min(np.abs(np.asarray(eigenvalues) - z)))


def _check_off_spectrum(T: DenseOperator, z: complex, eigenvalues=None) -> float:
    lam = spectrum(T).eigenvalues if eigenvalues is None else eigenvalues
    d = spectral_distance(z, lam)
    if d < SINGULAR_REL * (1.0 + operator_norm(T)):
        raise SingularityError(f"z={z!r} lies on the spectrum (distance {d:.3e})")
    return d


def resolvent(T: DenseOperator, z: complex) -> DenseOperator:
    """Resolvent ``(z Id - T)^{-1}``.

    Raises:
        SingularityError: If ``z`` is numerically on the spectrum or the
            shifted matrix is too ill-conditioned to invert reliably.
    """
    _check_off_spectrum(T, z)
    A = z * np.eye(T.n) - T.matrix
    cond = np.linalg.cond(z * np.eye(T.n) - symmetrized(T))
    if not np.isfinite(cond) or cond > MAX_COND:
        raise SingularityError(f"z={z!r}: shifted operator has condition number {cond:.3e}")
    return T.like(np.linalg.solve(A, np.eye(T.n)))


def resolvent_profile(T: DenseOperator, z: complex,
                      mode: ProfileMode = ProfileMode.NORMAL_EXACT,
                      eigenvalues=None, nuclear=None) -> float:
    """Upper bound on ``||R_z(T)||``.

    ``NORMAL_EXACT`` returns ``1/d`` with ``d`` the distance of ``z`` to the
    spectrum; it is exact for normal ``T`` and not a bound otherwise.
    ``GENERAL_BOUND`` returns ``exp(2 ||T||_1 / d) / d`` with ``||T||_1`` the
    trace norm, valid for every ``T``.

    ``eigenvalues`` and ``nuclear`` may be passed to avoid recomputation when
    the profile is sampled along a contour.
    """
    mode = ProfileMode(mode)
    lam = spectrum(T).eigenvalues if eigenvalues is None else eigenvalues
    d = spectral_distance(z, lam)
    if d < SINGULAR_REL * (1.0 + operator_norm(T)):
        raise SingularityError(f"z={z!r} lies on the spectrum (distance {d:.3e})")
    if mode is ProfileMode.NORMAL_EXACT:
        return 1.0 / d
    nuc = nuclear_norm(T) if nuclear is None else nuclear
    with np.errstate(over="ignore"):
        return float(np.exp(2.0 * nuc / d) / d)


def default_profile_mode(T: DenseOperator) -> ProfileMode:
    return ProfileMode.NORMAL_EXACT if is_normal(T) else ProfileMode.GENERAL_BOUND


def default_omega(T: DenseOperator, kind: OperatorKind | None = None) -> complex:
    """Reference point for resolvent comparisons.

    ``-1`` for (normalized) Laplacians, ``i`` for other self-adjoint
    operators and ``1.5 ||T||`` otherwise, which always lies outside the
    spectrum.
    """
    if kind is not None and OperatorKind.parse(kind) in (
            OperatorKind.LAPLACIAN, OperatorKind.NORMALIZED_LAPLACIAN):
        return complex(-1.0)
    if is_self_adjoint(T):
        return 1j
    norm = operator_norm(T)
    return complex(1.5 * norm if norm > 0 else 1.0)
