"""Functional-calculus filters and their norm and perturbation constants.

Four filter families are supported:

* :class:`EntireFilter` -- finite power series ``sum_k a_k z^k``.
* :class:`HolFilter` -- finite Laurent series ``sum_k b_k (z - omega)^{-k}``
  around a pole ``omega``; ``b_0`` is the value at infinity.
* :class:`ContFilter` -- finite bivariate series
  ``sum a_{mu,nu} (omega - z)^{-mu} (conj(omega) - conj(z))^{-nu}``.
* :class:`GenericFilter` -- any scalar function, applied through the
  eigendecomposition of a normal operator.

Holomorphic filters can also be evaluated by a trapezoidal contour
quadrature of the Cauchy integral ``(1/2 pi i) \\oint g(z) (z - T)^{-1} dz``,
which serves as an independent cross-check.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .errors import FilterContextError, NormalityError, SingularityError
from .graph_core import DenseOperator
from .operator_algebra import (
    ProfileMode,
    default_profile_mode,
    nuclear_norm,
    operator_norm,
    spectrum,
)

logger = logging.getLogger(__name__)

CONTOUR_RTOL = 1e-8
CONTOUR_MAX_NODES = 8192


def _coeffs(values) -> np.ndarray:
    arr = np.asarray(values, dtype=complex).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EntireFilter:
    """Polynomial filter ``g(z) = sum_k a[k] z**k``."""

    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _coeffs(self.a))

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for coef in self.a[::-1]:
            out = out * z + coef
        return out


@dataclass(frozen=True, eq=False)
class HolFilter:
    """Laurent filter ``g(z) = sum_k b[k] (z - omega)**(-k)``."""

    omega: complex
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", complex(self.omega))
        object.__setattr__(self, "b", _coeffs(self.b))

    @property
    def value_at_infinity(self) -> complex:
        return complex(self.b[0]) if self.b.size else 0j

    def __call__(self, z):
        s = 1.0 / (np.asarray(z, dtype=complex) - self.omega)
        out = np.zeros_like(s)
        for coef in self.b[::-1]:
            out = out * s + coef
        return out


@dataclass(frozen=True, eq=False)
class ContFilter:
    """Bivariate resolvent series around ``omega``.

    ``a`` maps exponent pairs ``(mu, nu)`` to the coefficient of
    ``(omega - z)^{-mu} (conj(omega) - conj(z))^{-nu}``.
    """

    omega: complex
    a: Mapping[tuple[int, int], complex] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "omega", complex(self.omega))
        clean = {}
        for (m, n), v in dict(self.a).items():
            if int(m) < 0 or int(n) < 0:
                raise ValueError("exponents must be nonnegative")
            clean[(int(m), int(n))] = complex(v)
        object.__setattr__(self, "a", clean)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        r = 1.0 / (self.omega - z)
        out = np.zeros_like(z)
        for (m, n), v in self.a.items():
            out = out + v * r**m * np.conj(r) ** n
        return out


@dataclass(frozen=True, eq=False)
class GenericFilter:
    """Arbitrary scalar filter applied through the spectral theorem.

    Args:
        func: Vectorized map from complex eigenvalues to complex values.
        lipschitz_hint: Known Lipschitz constant, if any.
        name: Label used in reports.
    """

    func: Callable[[np.ndarray], np.ndarray]
    lipschitz_hint: float | None = None
    name: str = "generic"

    def __call__(self, z):
        return np.asarray(self.func(np.asarray(z, dtype=complex)), dtype=complex)

    @classmethod
    def from_table(cls, points, values) -> "GenericFilter":
        """Piecewise-linear interpolation in ``Re z`` of tabulated values.

        The interpolant is constant outside the table, so its Lipschitz
        constant is the largest slope between consecutive points.
        """
        x = np.asarray(points, dtype=float)
        y = np.asarray(values, dtype=complex)
        order = np.argsort(x)
        x, y = x[order], y[order]
        if x.size == 0 or x.size != y.size:
            raise ValueError("table needs matching, nonempty points and values")
        if np.any(np.diff(x) <= 0):
            raise ValueError("table points must be distinct")
        slopes = np.abs(np.diff(y)) / np.diff(x) if x.size > 1 else np.zeros(1)

        def interp(z):
            re = np.real(z)
            return np.interp(re, x, y.real) + 1j * np.interp(re, x, y.imag)

        return cls(interp, float(np.max(slopes)), "table")


@dataclass(frozen=True)
class ContourSpec:
    """Circle ``|z - center| = radius`` discretized by ``nodes`` equispaced points."""

    center: complex
    radius: float
    nodes: int = 512

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        if not self.radius > 0:
            raise ValueError("contour radius must be positive")
        if int(self.nodes) < 16:
            raise ValueError("contour needs at least 16 nodes")
        object.__setattr__(self, "nodes", int(self.nodes))

    def points(self, nodes: int | None = None) -> np.ndarray:
        m = self.nodes if nodes is None else nodes
        theta = 2.0 * np.pi * np.arange(m) / m
        return self.center + self.radius * np.exp(1j * theta)

    def encloses(self, z, margin: float = 1e-6) -> bool:
        return bool(np.all(np.abs(np.asarray(z) - self.center) <= self.radius * (1 - margin)))

    def excludes(self, z, margin: float = 1e-6) -> bool:
        return bool(np.all(np.abs(np.asarray(z) - self.center) >= self.radius * (1 + margin)))

    @classmethod
    def around(cls, *operators: DenseOperator, pad: float = 1.0,
               nodes: int = 512) -> "ContourSpec":
        """Circle centred at the origin enclosing the spectra with a gap."""
        rad = max(float(np.max(np.abs(spectrum(T).eigenvalues))) for T in operators)
        return cls(0j, rad + pad, nodes)

    @classmethod
    def fitting(cls, *operators: DenseOperator, exclude=(), pad: float = 1.0,
                nodes: int = 512) -> "ContourSpec":
        """Smallest-box circle around the spectra that keeps ``exclude`` outside.

        The centre is the middle of the bounding box of all eigenvalues; the
        gap to the spectra is ``pad``, shrunk to half the room left before
        the nearest excluded point.

        Raises:
            SingularityError: If an excluded point lies inside the spectral circle.
        """
        lam = np.concatenate([spectrum(T).eigenvalues for T in operators])
        center = 0.5 * (lam.real.min() + lam.real.max()) + 0.5j * (lam.imag.min() + lam.imag.max())
        rad = float(np.max(np.abs(lam - center)))
        pts = np.asarray(list(exclude), dtype=complex)
        if pts.size:
            room = float(np.min(np.abs(pts - center))) - rad
            if room <= 0:
                raise SingularityError("an excluded point lies within the spectral circle")
            pad = min(pad, 0.5 * room)
        return cls(center, rad + pad, nodes)


Filter = EntireFilter | HolFilter | ContFilter | GenericFilter


def _check_square(T: DenseOperator):
    if not isinstance(T, DenseOperator):
        raise TypeError("filters act on DenseOperator instances")


def apply_generic(g, T: DenseOperator) -> DenseOperator:
    """``Phi diag(g(lambda)) Phi*`` for a normal operator ``T``.

    Raises:
        NormalityError: If ``T`` is not normal; use an entire or
            holomorphic filter instead.
    """
    _check_square(T)
    spec = spectrum(T)
    if spec.eigenvectors is None:
        raise NormalityError(
            "spectral evaluation needs a normal operator; use an entire or "
            "holomorphic filter for non-normal operators")
    phi = spec.eigenvectors
    vals = np.asarray(g(spec.eigenvalues), dtype=complex)
    return T.like((phi * vals[None, :]) @ (phi.conj().T * T.weights[None, :]))


def apply_entire(g: EntireFilter, T: DenseOperator) -> DenseOperator:
    """Horner evaluation of the polynomial at ``T``."""
    _check_square(T)
    out = np.zeros((T.n, T.n), dtype=complex)
    eye = np.eye(T.n)
    for coef in g.a[::-1]:
        out = out @ T.matrix + coef * eye
    return T.like(out)


def _shifted_inverse(T: DenseOperator, omega: complex) -> np.ndarray:
    """``(T - omega)^{-1}`` with an explicit check that ``omega`` is off the spectrum."""
    lam = spectrum(T).eigenvalues
    d = float(np.min(np.abs(lam - omega)))
    if d < 1e-12 * (1.0 + operator_norm(T)):
        raise SingularityError(f"pole {omega!r} lies on the spectrum (distance {d:.3e})")
    return np.linalg.solve(T.matrix - omega * np.eye(T.n), np.eye(T.n))


def apply_holomorphic(g: HolFilter, T: DenseOperator) -> DenseOperator:
    """``b_0 Id + sum_k b_k S^k`` with ``S = (T - omega)^{-1}`` computed once."""
    _check_square(T)
    S = _shifted_inverse(T, g.omega)
    out = np.zeros((T.n, T.n), dtype=complex)
    eye = np.eye(T.n)
    for coef in g.b[::-1]:
        out = out @ S + coef * eye
    return T.like(out)


def apply_cont(g: ContFilter, T: DenseOperator) -> DenseOperator:
    """``sum a_{mu,nu} R^mu (R*)^nu`` with ``R = (omega - T)^{-1}``.

    For normal ``T`` this coincides with evaluating the series on the
    spectrum.
    """
    _check_square(T)
    R = -_shifted_inverse(T, g.omega)
    Rs = T.like(R).adjoint().matrix
    out = np.zeros((T.n, T.n), dtype=complex)
    powers, apowers = {0: np.eye(T.n)}, {0: np.eye(T.n)}
    for (m, n), v in sorted(g.a.items()):
        for k in range(1, m + 1):
            powers.setdefault(k, powers[k - 1] @ R)
        for k in range(1, n + 1):
            apowers.setdefault(k, apowers[k - 1] @ Rs)
        out = out + v * (powers[m] @ apowers[n])
    return T.like(out)


def apply_filter(g: Filter, T: DenseOperator) -> DenseOperator:
    """Dispatch to the natural evaluation route of each filter family."""
    if isinstance(g, EntireFilter):
        return apply_entire(g, T)
    if isinstance(g, HolFilter):
        return apply_holomorphic(g, T)
    if isinstance(g, ContFilter):
        return apply_cont(g, T)
    if isinstance(g, GenericFilter):
        return apply_generic(g, T)
    raise TypeError(f"unsupported filter type {type(g).__name__}")


def _quadrature(c: ContourSpec, integrand, nodes: int, rtol: float, max_nodes: int):
    """Trapezoid rule with node doubling; ``integrand(z)`` returns per-node values.

    The returned estimate is the mean of ``integrand`` over the nodes.
    """
    m = nodes
    prev = np.mean(integrand(c.points(m)), axis=0)
    while m < max_nodes:
        m *= 2
        cur = np.mean(integrand(c.points(m)), axis=0)
        scale = max(np.max(np.abs(cur)), np.finfo(float).tiny)
        if np.max(np.abs(cur - prev)) <= rtol * scale:
            return cur, m
        prev = cur
    logger.warning("contour quadrature hit %d nodes without reaching rtol=%g", m, rtol)
    return prev, m


def apply_contour(g, T: DenseOperator, c: ContourSpec, rtol: float = CONTOUR_RTOL,
                  max_nodes: int = CONTOUR_MAX_NODES) -> DenseOperator:
    """Cauchy-integral evaluation ``(1/2 pi i) \\oint g(z) (z Id - T)^{-1} dz``.

    The contour must enclose the whole spectrum of ``T`` and ``g`` must be
    holomorphic on and inside it.  With ``z = c + r e^{i theta}`` the
    integral equals the mean over theta of ``g(z) (z - c) (z - T)^{-1}``.

    Raises:
        SingularityError: If the circle does not enclose the spectrum with
            a relative gap of ``1e-6``.
    """
    _check_square(T)
    lam = spectrum(T).eigenvalues
    if not c.encloses(lam):
        raise SingularityError("contour crosses or does not enclose the spectrum")
    eye = np.eye(T.n)

    def integrand(z):
        shifted = z[:, None, None] * eye[None] - T.matrix[None]
        res = np.linalg.solve(shifted, np.broadcast_to(eye, shifted.shape))
        scale = np.asarray(g(z), dtype=complex) * (z - c.center)
        return scale[:, None, None] * res

    out, _ = _quadrature(c, integrand, c.nodes, rtol, max_nodes)
    return T.like(out)


def seminorm_hol(g: HolFilter, C: float) -> float:
    """``sum_{k>=1} |b_k| k C^{k-1}``."""
    if C <= 0:
        raise ValueError("C must be positive")
    k = np.arange(g.b.size)
    return float(np.sum(np.abs(g.b[1:]) * k[1:] * C ** (k[1:] - 1.0)))


def seminorm_cont(g: ContFilter, C: float) -> float:
    """``sum_{mu+nu>=1} (mu+nu) C^{mu+nu-1} |a_{mu,nu}|``."""
    if C <= 0:
        raise ValueError("C must be positive")
    total = 0.0
    for (m, n), v in g.a.items():
        s = m + n
        if s >= 1:
            total += s * C ** (s - 1) * abs(v)
    return float(total)


@dataclass(frozen=True, eq=False)
class ContourBoundContext:
    """Operator plus circle for contour-integral norm bounds."""

    T: DenseOperator
    contour: ContourSpec
    mode: ProfileMode | None = None


def _profile_sampler(T: DenseOperator, mode: ProfileMode | None):
    """Vectorized resolvent profile of ``T`` (same formulas as ``resolvent_profile``)."""
    mode = default_profile_mode(T) if mode is None else ProfileMode(mode)
    lam = spectrum(T).eigenvalues
    nuc = nuclear_norm(T) if mode is ProfileMode.GENERAL_BOUND else 0.0
    floor = 1e-12 * (1.0 + operator_norm(T))

    def gamma(z):
        z = np.atleast_1d(z)
        d = np.min(np.abs(z[:, None] - lam[None, :]), axis=1)
        if np.any(d < floor):
            raise SingularityError("contour point on the spectrum")
        if mode is ProfileMode.NORMAL_EXACT:
            return 1.0 / d
        with np.errstate(over="ignore"):
            return np.exp(2.0 * nuc / d) / d

    return gamma, lam


def _arc_mean(c: ContourSpec, integrand) -> float:
    """``(1/2 pi) \\oint f d|z|`` = radius times the mean of ``f`` over the circle."""
    val, _ = _quadrature(c, integrand, c.nodes, CONTOUR_RTOL, CONTOUR_MAX_NODES)
    return float(c.radius * np.real(val))


def filter_norm_bound(g: Filter, C: float | None = None, T: DenseOperator | None = None,
                      contour: ContourSpec | None = None,
                      mode: ProfileMode | None = None) -> float:
    """Operator-independent upper bound on ``||g(T)||``.

    Supported contexts:

    * ``HolFilter`` with ``C >= ||(T - omega)^{-1}||``: ``sum_k |b_k| C^k``.
    * ``EntireFilter`` with ``T``: ``sum_k |a_k| ||T||^k``.
    * ``HolFilter`` or ``EntireFilter`` with ``T`` and a ``contour``
      enclosing the spectrum: ``|g(inf)| + (1/2 pi) \\oint |g| gamma_T d|z|``,
      where the value at infinity is zero for polynomials.

    Raises:
        FilterContextError: For any other combination.
    """
    if contour is not None:
        if T is None or not isinstance(g, (HolFilter, EntireFilter)):
            raise FilterContextError("contour bound needs a holomorphic filter and an operator")
        gamma, lam = _profile_sampler(T, mode)
        if not contour.encloses(lam):
            raise SingularityError("contour must enclose the spectrum")
        g_inf = 0.0
        if isinstance(g, HolFilter):
            if not contour.excludes(g.omega):
                raise SingularityError("the pole must lie outside the contour")
            g_inf = abs(g.value_at_infinity)
        return g_inf + _arc_mean(contour, lambda z: np.abs(g(z)) * gamma(z))
    if isinstance(g, HolFilter) and C is not None:
        if C < 0:
            raise ValueError("C must be nonnegative")
        return float(np.sum(np.abs(g.b) * C ** np.arange(g.b.size, dtype=float)))
    if isinstance(g, EntireFilter) and T is not None:
        norm = operator_norm(T)
        return float(np.sum(np.abs(g.a) * norm ** np.arange(g.a.size, dtype=float)))
    raise FilterContextError(
        f"no norm bound for {type(g).__name__} with the given context")


@dataclass(frozen=True, eq=False)
class ConstantBound:
    """Context: a uniform bound ``C`` (on ``||T||`` for entire filters, on
    ``||R_omega||`` for resolvent-series filters)."""

    C: float


@dataclass(frozen=True, eq=False)
class ContourPair:
    """Context: two operators and a contour enclosing both spectra.

    Used for the commutator-type constant that multiplies ``||J T - T2 J||``.
    """

    T: DenseOperator
    T2: DenseOperator
    contour: ContourSpec
    mode: ProfileMode | None = None
    mode2: ProfileMode | None = None


@dataclass(frozen=True, eq=False)
class ClosenessContour(ContourPair):
    """Context: like :class:`ContourPair` but multiplying the resolvent
    closeness ``||R2_omega J - J R_omega||`` at the reference point ``omega``."""

    omega: complex = -1.0


def kg_constant(g: Filter, context) -> float:
    """Perturbation constant ``K_g`` of a filter.

    Contexts:

    * :class:`ConstantBound` with an ``EntireFilter``:
      ``sum_k |a_k| k C^{k-1}`` bounds ``||J g(T) - g(T2) J||`` by
      ``K_g ||J T - T2 J||`` whenever ``||T||, ||T2|| <= C``.
    * :class:`ConstantBound` with a ``HolFilter``/``ContFilter``: the
      corresponding seminorm, which multiplies the resolvent closeness when
      ``||R_omega||, ||R2_omega|| <= C``.
    * :class:`ContourPair`: ``(1/2 pi) \\oint gamma_T gamma_T2 |g| d|z|``,
      multiplying ``||J T - T2 J||``.  This follows from
      ``J R_z - R2_z J = R2_z (J T - T2 J) R_z``.
    * :class:`ClosenessContour`:
      ``(1/2 pi) \\oint (1 + |z-omega| gamma_T)(1 + |z-omega| gamma_T2) |g| d|z|``,
      multiplying the resolvent closeness at ``omega``.
    """
    if isinstance(context, ConstantBound):
        C = float(context.C)
        if isinstance(g, EntireFilter):
            k = np.arange(g.a.size, dtype=float)
            return float(np.sum(np.abs(g.a[1:]) * k[1:] * C ** (k[1:] - 1.0)))
        if isinstance(g, HolFilter):
            return seminorm_hol(g, C)
        if isinstance(g, ContFilter):
            return seminorm_cont(g, C)
        raise FilterContextError(f"no constant-bound K_g for {type(g).__name__}")
    if isinstance(context, ContourPair):
        if not isinstance(g, (EntireFilter, HolFilter)):
            raise FilterContextError("contour constants need a holomorphic filter")
        c = context.contour
        gam1, lam1 = _profile_sampler(context.T, context.mode)
        gam2, lam2 = _profile_sampler(context.T2, context.mode2)
        if not (c.encloses(lam1) and c.encloses(lam2)):
            raise SingularityError("contour must enclose both spectra")
        if isinstance(g, HolFilter) and not c.excludes(g.omega):
            raise SingularityError("the pole must lie outside the contour")
        if isinstance(context, ClosenessContour):
            w = complex(context.omega)

            def integrand(z):
                dz = np.abs(z - w)
                return (1 + dz * gam1(z)) * (1 + dz * gam2(z)) * np.abs(g(z))
        else:
            def integrand(z):
                return gam1(z) * gam2(z) * np.abs(g(z))
        return _arc_mean(c, integrand)
    raise FilterContextError(f"unknown K_g context {type(context).__name__}")


def lipschitz_constant(g: Filter, *spectra, samples: int = 10_000,
                       seed: int = 0) -> tuple[float, bool]:
    """Lipschitz constant of ``g`` for the Frobenius perturbation estimate.

    Returns ``(value, estimated)``.  A filter's ``lipschitz_hint`` is
    returned as is.  Otherwise the constant is the largest difference
    quotient over all pairs drawn from the given spectra (these pairs are
    the only ones the estimate actually uses) together with ``samples``
    random pairs from their convex hull.
    """
    hint = getattr(g, "lipschitz_hint", None)
    if hint is not None:
        return float(hint), False
    pts = np.concatenate([np.asarray(s, dtype=complex).reshape(-1) for s in spectra])
    if pts.size == 0:
        return 0.0, True
    vals = np.asarray(g(pts), dtype=complex)
    diff = np.abs(pts[:, None] - pts[None, :])
    num = np.abs(vals[:, None] - vals[None, :])
    mask = diff > 1e-14 * (1 + np.max(np.abs(pts)))
    best = float(np.max(num[mask] / diff[mask])) if np.any(mask) else 0.0
    if pts.size > 1:
        rng = np.random.default_rng(seed)
        wa = rng.dirichlet(np.ones(pts.size), samples)
        wb = rng.dirichlet(np.ones(pts.size), samples)
        za, zb = wa @ pts, wb @ pts
        d = np.abs(za - zb)
        keep = d > 1e-14
        if np.any(keep):
            q = np.abs(g(za[keep]) - g(zb[keep])) / d[keep]
            best = max(best, float(np.max(q)))
    return best, True


def filter_from_dict(data: dict) -> Filter:
    """Parse ``{"kind", "omega"?, "coeffs"}``.

    ``coeffs`` entries may be numbers or ``[re, im]`` pairs.  For ``cont``
    they are ``[mu, nu, value]`` triples; for ``generic-table`` an object
    ``{"points": [...], "values": [...]}``.
    """
    def cx(v):
        if isinstance(v, (list, tuple)):
            return complex(float(v[0]), float(v[1]))
        return complex(v)

    try:
        kind = data["kind"]
        coeffs = data.get("coeffs", [])
        omega = cx(data["omega"]) if "omega" in data else None
        if kind == "entire":
            return EntireFilter([cx(v) for v in coeffs])
        if kind == "hol":
            return HolFilter(-1.0 if omega is None else omega, [cx(v) for v in coeffs])
        if kind == "cont":
            return ContFilter(-1.0 if omega is None else omega,
                              {(int(m), int(n)): cx(v) for m, n, v in coeffs})
        if kind == "generic-table":
            return GenericFilter.from_table(coeffs["points"], [cx(v) for v in coeffs["values"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed filter description: {exc!r}") from exc
    raise ValueError(f"unknown filter kind {data.get('kind')!r}")


def load_filter(path: str | Path) -> Filter:
    with open(path) as fh:
        return filter_from_dict(json.load(fh))
