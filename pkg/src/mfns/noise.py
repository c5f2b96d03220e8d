"""Divergence-free noise basis driving the cylindrical Wiener process.

Each half-lattice wavevector ``k`` with ``0 < |k| <= K_W`` contributes two
L2-orthonormal fields

    sqrt(2) A_k cos(2 pi k.x),   sqrt(2) A_k sin(2 pi k.x),   A_k = rot90(k)/|k|.

Because ``A_k . k = 0`` each field is divergence free and transports itself
trivially, and because the Euclidean ball of wavevectors is closed under 90
degree rotation the sum of squared transport operators is an exact multiple
of the Laplacian on interior modes.  The multiple ``c_K`` equals the number
of half-lattice wavevectors in the ball.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError
from .spectral import (
    SpectralVectorField,
    _advect_coeffs,
    _resize,
    _to_grid,
    dealiased_size,
    fast_size,
    is_half_lattice,
    laplacian,
    random_vector_field,
)

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class BasisElement:
    k: tuple
    polarization: tuple
    phase: str  # "cos" or "sin"

    def coefficients(self, K):
        """Coefficient array of this element at truncation ``K``."""
        k1, k2 = self.k
        if max(abs(k1), abs(k2)) > K:
            raise ConfigurationError(f"element with k={self.k} does not fit truncation {K}")
        A = np.asarray(self.polarization, dtype=float)
        a = SQRT2 / 2 if self.phase == "cos" else -0.5j * SQRT2
        c = np.zeros((2, 2 * K + 1, 2 * K + 1), dtype=complex)
        c[:, k1 + K, k2 + K] = a * A
        c[:, -k1 + K, -k2 + K] = np.conj(a) * A
        return c


def element_as_field(e, K):
    return SpectralVectorField(e.coefficients(K), check=False)


def half_lattice_ball(K_W):
    """Half-lattice wavevectors with ``0 < |k| <= K_W``, lexicographic."""
    return [
        (k1, k2)
        for k1 in range(-K_W, K_W + 1)
        for k2 in range(-K_W, K_W + 1)
        if k1 * k1 + k2 * k2 <= K_W * K_W and is_half_lattice((k1, k2))
    ]


class NoiseBasis:
    """Immutable ordered family of noise fields with covariance constant ``c_K``."""

    def __init__(self, elements, K_W, c_K):
        self.elements = tuple(elements)
        self.K_W = K_W
        self.c_K = c_K
        # coefficients at the noise truncation itself, shape (n_elem, 2, n, n)
        self.coeffs = np.stack([e.coefficients(K_W) for e in self.elements])
        self.coeffs.setflags(write=False)

    def __len__(self):
        return len(self.elements)

    def __repr__(self):
        return f"NoiseBasis(K_W={self.K_W}, elements={len(self)}, c_K={self.c_K})"

    def coefficients(self, K):
        if K < self.K_W:
            raise ConfigurationError(f"noise truncation {self.K_W} exceeds field truncation {K}")
        return _resize(self.coeffs, K)

    def grid(self, M):
        """Physical samples of every element, shape ``(n_elem, 2, M, M)``."""
        return _basis_grid(self, M)

    def combine(self, increments, K):
        """Coefficients of ``sum_a increments[..., a] X_a`` at truncation ``K``.

        Summation runs over elements in basis order, so the result does not
        depend on how leading batch axes are chunked.
        """
        dW = np.asarray(increments, dtype=float)
        if dW.shape[-1] != len(self):
            raise ConfigurationError(f"expected {len(self)} increments, got {dW.shape[-1]}")
        X = self.coefficients(K)
        out = np.zeros(dW.shape[:-1] + X.shape[1:], dtype=complex)
        for a in range(len(self)):
            out += dW[..., a, None, None, None] * X[a]
        return out


@lru_cache(maxsize=16)
def _basis_grid(basis, M):
    g = _to_grid(basis.coeffs, M)
    g.setflags(write=False)
    return g


def build_basis(K_W):
    """Enumerate the noise basis up to wavenumber radius ``K_W``."""
    if int(K_W) != K_W or K_W < 1:
        raise ConfigurationError(f"noise truncation must be a positive integer, got {K_W}")
    K_W = int(K_W)
    ks = half_lattice_ball(K_W)
    elements = []
    for k in ks:
        norm = np.hypot(*k)
        A = (-k[1] / norm, k[0] / norm)
        elements.append(BasisElement(k, A, "cos"))
        elements.append(BasisElement(k, A, "sin"))
    return NoiseBasis(elements, K_W, c_K=len(ks))


def apply_noise(basis, xi, increments, nu):
    """Noise increment ``-nu sum_a (X_a . grad) xi dW_a``, truncated to xi's K.

    Transport is linear in the advecting field, so the sum is formed as one
    advection by the combined noise field.
    """
    dW = np.asarray(increments, dtype=float)
    if dW.shape != (len(basis),):
        raise ConfigurationError(f"expected {len(basis)} increments, got shape {dW.shape}")
    w = basis.combine(dW, xi.K)
    return SpectralVectorField(-nu * _advect_coeffs(w, xi.coeffs), check=False)


def apply_covariance(basis, xi):
    """``sum_a (X_a . grad)(X_a . grad) xi``.

    The inner transport is kept at truncation ``K_f + K_W`` and only the outer
    one is cut back to ``K_f``, so the result equals ``c_K * laplacian(xi)`` on
    every mode with ``|m|_inf <= K_f - K_W``.
    """
    K = xi.K
    if basis.K_W > K:
        raise ConfigurationError(f"noise truncation {basis.K_W} exceeds field truncation {K}")
    X = basis.coeffs
    inner = _advect_coeffs(X, xi.coeffs[None], K_out=K + basis.K_W)
    outer = _advect_coeffs(X, inner, K_out=K)
    return SpectralVectorField(outer.sum(axis=0), check=False)


def interior_mask(K_f, K_W):
    """Boolean mask of modes ``|m|_inf <= K_f - K_W``."""
    r = np.abs(np.arange(-K_f, K_f + 1)) <= K_f - K_W
    return r[:, None] & r[None, :]


# ---- defect measures used by tests and the basis-check command ----


def orthonormality_defect(basis):
    """Max |Gram - I| with the Gram matrix formed by grid quadrature."""
    M = fast_size(2 * basis.K_W + 2)
    g = basis.grid(M).reshape(len(basis), -1)
    gram = g @ g.T / (M * M)
    return float(np.max(np.abs(gram - np.eye(len(basis)))))


def self_advection_defect(basis):
    """Max coefficient magnitude of ``(X . grad) X`` over all elements."""
    X = basis.coeffs
    return float(np.max(np.abs(_advect_coeffs(X, X))))


def covariance_defect(basis, K_f, n_samples=20, rng=None):
    """Max relative L2 deviation of apply_covariance from ``c_K * Laplacian``
    over random fields supported on interior modes."""
    rng = np.random.default_rng(0) if rng is None else rng
    support = K_f - basis.K_W
    if support < 1:
        raise ConfigurationError(f"no interior modes for K_f={K_f}, K_W={basis.K_W}")
    worst = 0.0
    for _ in range(n_samples):
        xi = random_vector_field(K_f, rng, support=support)
        lap = laplacian(xi)
        diff = apply_covariance(basis, xi) - basis.c_K * lap
        worst = max(worst, float(np.linalg.norm(diff.coeffs) / np.linalg.norm(lap.coeffs)))
    return worst


def fit_covariance_constant(basis, K_f, n_samples=10, rng=None):
    """Least-squares ``c`` in ``apply_covariance(xi) ~ c * laplacian(xi)``."""
    rng = np.random.default_rng(1) if rng is None else rng
    num = den = 0.0
    for _ in range(n_samples):
        xi = random_vector_field(K_f, rng, support=K_f - basis.K_W)
        lap = laplacian(xi).coeffs
        cov = apply_covariance(basis, xi).coeffs
        num += float(np.real(np.vdot(lap, cov)))
        den += float(np.real(np.vdot(lap, lap)))
    return num / den
