"""Sine-basis function spaces on the box (0, pi)^d, d in {1, 2}.

Fields are represented by their coefficients in the basis
``prod_i sin(k_i x_i)`` with 1 <= k_i <= N.  On this domain the basis
functions satisfy u = (Laplacian u) = 0 on the boundary exactly, so the
simply supported plate boundary condition costs nothing.  The negative
Laplacian acts diagonally, multiplying coefficient k by
``lam_k = sum_i k_i**2``, and the squared bilaplacian by ``lam_k**2``.

Normalization: plain sine products, no orthonormal scaling.  Every L2
pairing therefore carries the factor ``(pi/2)**d``; it is applied in one
place (``_scale``) and asserted by the Parseval tests.

Grid convention for pointwise (de-aliased) evaluation: M interior points
per axis at ``x_j = j*pi/(M+1)``, j = 1..M.  With M >= 2N the pseudo
spectral projection of a cubic nonlinearity is exact (aliased images of
modes up to 3N land above N and are truncated), and the interior-point
quadrature integrates polynomials of the field up to degree four exactly
because the integrand vanishes at both endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class DomainSpec:
    """Discretization of the box: dimension, mode count, evaluation grid.

    ``grid_points_per_axis`` must be at least twice ``modes_per_axis`` so
    cubic nonlinearities can be projected without aliasing error.
    """

    dim: int
    modes_per_axis: int
    grid_points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.modes_per_axis < 1:
            raise ValueError("modes_per_axis must be >= 1")
        if self.grid_points_per_axis < 2 * self.modes_per_axis:
            raise ValueError(
                "grid_points_per_axis must be >= 2*modes_per_axis "
                f"({self.grid_points_per_axis} < {2 * self.modes_per_axis})"
            )
        k = np.arange(1, self.modes_per_axis + 1, dtype=float)
        if self.dim == 1:
            lam = k**2
        else:
            lam = np.add.outer(k**2, k**2)
        lam.flags.writeable = False
        object.__setattr__(self, "_lam", lam)

    @property
    def mode_shape(self):
        return (self.modes_per_axis,) * self.dim

    @property
    def eigenvalues(self):
        """Array of -Laplacian eigenvalues, indexed like coefficient arrays."""
        return self._lam

    @property
    def volume(self):
        return np.pi**self.dim

    def axis_points(self):
        m = self.grid_points_per_axis
        return np.pi * np.arange(1, m + 1) / (m + 1)


def _scale(domain):
    # L2 mass of one basis function per axis
    return (np.pi / 2.0) ** domain.dim


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A scalar field stored as sine coefficients on a DomainSpec."""

    domain: DomainSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != self.domain.mode_shape:
            raise ValueError(
                f"coefficient shape {c.shape} does not match domain {self.domain.mode_shape}"
            )
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, domain):
        return cls(domain, np.zeros(domain.mode_shape))

    @classmethod
    def single_mode(cls, domain, k, amplitude=1.0):
        c = np.zeros(domain.mode_shape)
        idx = _mode_index(domain, k)
        c[idx] = amplitude
        return cls(domain, c)

    def __add__(self, other):
        _check_same_domain(self, other)
        return SpectralField(self.domain, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same_domain(self, other)
        return SpectralField(self.domain, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return SpectralField(self.domain, self.coeffs * float(a))

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.domain, -self.coeffs)


@dataclass(frozen=True)
class EmbeddingConstants:
    """Sharp discrete constants of the Poincare-type inequalities.

    lambda0 * ||u||^2 <= ||grad u||^2,
    lambda1 * ||u||^2 <= ||lap u||^2,
    lambda2 * ||grad u||^2 <= ||lap u||^2,
    with equality at the lowest mode.  These are the sharp values for the
    representable fields of a given DomainSpec, not universal constants.
    """

    lambda0: float
    lambda1: float
    lambda2: float


def _mode_index(domain, k):
    if np.isscalar(k):
        k = (int(k),)
    k = tuple(int(x) for x in k)
    if len(k) != domain.dim:
        raise IndexError(f"mode index {k} has wrong length for dim {domain.dim}")
    for x in k:
        if not 1 <= x <= domain.modes_per_axis:
            raise IndexError(
                f"mode index {k} out of range 1..{domain.modes_per_axis}"
            )
    return tuple(x - 1 for x in k)


def _check_same_domain(a, b):
    if a.domain != b.domain:
        raise ValueError("fields live on different domains")


def laplacian_eigenvalue(domain, k):
    """Eigenvalue of -Laplacian for multi-index k (1-based per axis)."""
    idx = _mode_index(domain, k)
    return float(domain.eigenvalues[idx])


def minus_laplacian(field):
    """Apply -Laplacian: diagonal multiplication by the eigenvalues."""
    return SpectralField(field.domain, field.coeffs * field.domain.eigenvalues)


def bilaplacian(field):
    """Apply the squared Laplacian, diagonal with weights lam_k**2."""
    return SpectralField(field.domain, field.coeffs * field.domain.eigenvalues**2)


def norms(field):
    """Return (l2, v1, v2): the L2 norm and the first/second energy norms.

    l2^2 = (pi/2)^d sum c_k^2, v1^2 weights by lam_k (gradient norm),
    v2^2 weights by lam_k^2 (Laplacian norm).
    """
    s = _scale(field.domain)
    c2 = field.coeffs**2
    lam = field.domain.eigenvalues
    l2 = np.sqrt(s * c2.sum())
    v1 = np.sqrt(s * (lam * c2).sum())
    v2 = np.sqrt(s * (lam**2 * c2).sum())
    return l2, v1, v2


def inner_l2(a, b):
    _check_same_domain(a, b)
    return _scale(a.domain) * float((a.coeffs * b.coeffs).sum())


def inner_grad(a, b):
    """Inner product of gradients, (grad a, grad b)."""
    _check_same_domain(a, b)
    return _scale(a.domain) * float((a.domain.eigenvalues * a.coeffs * b.coeffs).sum())


def inner_lap(a, b):
    """Inner product of Laplacians, (lap a, lap b)."""
    _check_same_domain(a, b)
    return _scale(a.domain) * float(
        (a.domain.eigenvalues**2 * a.coeffs * b.coeffs).sum()
    )


def embedding_constants(domain):
    """Sharp discrete embedding constants, by exhaustive scan of the modes."""
    lam = domain.eigenvalues
    lam0 = float(lam.min())
    lam1 = float((lam**2).min())
    lam2 = float((lam**2 / lam).min())
    return EmbeddingConstants(lam0, lam1, lam2)


@lru_cache(maxsize=64)
def _sine_matrix(modes, grid):
    """Evaluation matrix S[j, k-1] = sin(k * x_j) on the interior grid."""
    x = np.pi * np.arange(1, grid + 1) / (grid + 1)
    k = np.arange(1, modes + 1)
    s = np.sin(np.outer(x, k))
    s.flags.writeable = False
    return s


def to_physical(field):
    """Evaluate the field on the interior grid, shape (M,)*d."""
    dom = field.domain
    s = _sine_matrix(dom.modes_per_axis, dom.grid_points_per_axis)
    if dom.dim == 1:
        return s @ field.coeffs
    return s @ field.coeffs @ s.T


def to_spectral(values, domain):
    """Project grid samples back onto the first N modes per axis.

    Uses the discrete orthogonality of the interior sine samples, so the
    round trip with to_physical is the identity up to roundoff and the
    projection of grid-evaluated nonlinearities is the exact Galerkin
    projection whenever the product stays below the aliasing threshold.
    """
    values = np.asarray(values, dtype=float)
    m = domain.grid_points_per_axis
    if values.shape != (m,) * domain.dim:
        raise ConfigGridError(
            f"grid shape {values.shape} does not match domain grid {(m,) * domain.dim}"
        )
    s = _sine_matrix(domain.modes_per_axis, m)
    w = 2.0 / (m + 1)
    if domain.dim == 1:
        return SpectralField(domain, w * (s.T @ values))
    return SpectralField(domain, w * w * (s.T @ values @ s))


class ConfigGridError(ValueError):
    """Grid samples do not match the domain's evaluation grid."""


def grid_quadrature(values, domain):
    """Integrate grid samples over the box.

    Interior-point rule with weight (pi/(M+1))^d; exact for trigonometric
    polynomials of degree < 2(M+1) per axis whose values vanish on the
    boundary, which covers quartics of represented fields when M >= 2N.
    """
    values = np.asarray(values, dtype=float)
    m = domain.grid_points_per_axis
    h = np.pi / (m + 1)
    return h**domain.dim * float(values.sum())


def dealiased_apply(func, field):
    """Galerkin projection of func(u) computed pointwise on the grid."""
    vals = func(to_physical(field))
    return to_spectral(vals, field.domain)
